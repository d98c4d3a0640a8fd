#pragma once

#include <optional>
#include <string>
#include <vector>

#include "neurovid/nn.hpp"
#include "neurovid/synthdata.hpp"

namespace neurovid {

// Linear beta schedule with the clean-data convention alphas_cum[0] == 1.
struct NoiseSchedule {
    int64_t timesteps = 100;
    std::vector<double> betas;       // betas[0] = 0, betas[1..T] linear
    std::vector<double> alphas_cum;  // size T+1, strictly decreasing from 1

    static NoiseSchedule linear(int64_t timesteps, double beta_start = 0.002,
                                double beta_end = 0.25);
};

// Fixed orthogonal 2x2 patch -> 4 channel map (Haar basis); exactly
// invertible, so pixel metrics on decoded latents are well-defined.
struct LatentMap {
    // pixels [F x H x W] in [0,1]  ->  z [F x 4 x H/2 x W/2]
    static Tensor encode(const VideoClip& clip);
    static std::vector<double> encode_raw(const std::vector<double>& pixels,
                                          int64_t frames, int64_t height,
                                          int64_t width);
    static std::vector<double> decode(const std::vector<double>& z,
                                      int64_t frames, int64_t height,
                                      int64_t width);
};

struct DenoiserConfig {
    int64_t frames = 6;
    int64_t channels = 4;
    int64_t latent_h = 8, latent_w = 8;
    int64_t model_dim = 32;
    int64_t heads = 4;
    int64_t depth = 2;
    int64_t cond_rows = 8;  // l
    int64_t cond_dim = 32;  // d_c
    double mlp_ratio = 2.0;
    int64_t max_timesteps = 1000;
};

// Tiny latent video denoiser: per-frame self-attention, cross-attention to
// the conditioning rows, and sparse-causal temporal attention where frame i
// reads frames i-2 and i-1 (indices clamped at 0).
class VideoDenoiser {
public:
    VideoDenoiser(const DenoiserConfig& cfg, uint64_t init_seed);

    const DenoiserConfig& cfg() const { return cfg_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    // z [n x F x c x h x w], one timestep index per sample, cond
    // [n x l x d_c]; pass std::nullopt for the null condition
    Tensor forward(const Tensor& z, const std::vector<int64_t>& t,
                   const std::optional<Tensor>& cond) const;

    // parameter-name prefixes of the attention heads tuned during co-training
    std::vector<std::string> attention_prefixes() const;

    void save_checkpoint(const std::string& path, const std::string& stage,
                         const std::string& config_hash) const;
    std::string load_checkpoint(const std::string& path);

private:
    DenoiserConfig cfg_;
    ParamStore params_;
    Linear in_proj_, out_proj_, time_proj_, cond_proj_;
    std::vector<MultiheadAttention> attn1_, attn2_, attn_temp_;
    std::vector<LayerNormP> ln1_, ln2_, ln3_, ln4_;
    std::vector<Mlp> mlps_;
    Tensor pos2d_;   // [h*w x d]
    Tensor posf_;    // [F_max x d]
    Tensor time_table_;  // [max_timesteps x d]
};

// z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) noise
Tensor q_sample(const Tensor& z0, int64_t t, const NoiseSchedule& sched,
                const Tensor& noise);

struct GuidanceSpec {
    std::optional<Tensor> positive;  // [n x l x d_c]
    std::optional<Tensor> negative;  // null -> classifier-free form
    double scale = 12.5;
};

// eps_hat = eps(z, neg) + s * (eps(z, pos) - eps(z, neg)); with a null
// negative the unconditional branch takes its place
Tensor guided_noise(const VideoDenoiser& model, const Tensor& z,
                    const std::vector<int64_t>& t, const GuidanceSpec& spec);

// one deterministic (eta = 0) DDIM update from noise level abar to abar_prev
Tensor ddim_step(const Tensor& z, const Tensor& eps, double abar,
                 double abar_prev);

// deterministic (eta = 0) DDIM trajectory from Gaussian init
Tensor ddim_sample(const VideoDenoiser& model, const NoiseSchedule& sched,
                   const GuidanceSpec& spec, int64_t n, int64_t steps,
                   uint64_t seed);

// element-wise mean of preprocessed fMRI windows [n x w x V] -> [1 x w x V]
Tensor average_fmri(const Tensor& windows);

}  // namespace neurovid
