#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "neurovid/diffusion.hpp"
#include "neurovid/encoder.hpp"
#include "neurovid/synthdata.hpp"

namespace neurovid {

// exit code 2
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
// exit code 3
struct PrereqError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
// exit code 4
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Flat key=value run configuration. Unknown keys are rejected; every run
// directory stores the resolved config and its hash.
struct RunConfig {
    // dataset
    int64_t train_windows = 432;
    int64_t test_windows = 48;
    int64_t voxels = 512;
    int64_t height = 16, width = 16;
    int64_t frames_per_window = 6;
    int64_t fps = 3;
    double tr_seconds = 2.0;
    int64_t repeats = 6;
    double noise_sigma = 0.4;
    double hrf_peak = 3.0;
    int64_t regions = 4;
    std::string signal_layout = "graded";
    int64_t catalog_size = 64;
    int64_t motion_classes = 8;

    // encoder
    int64_t patch_size = 8;
    int64_t embed_dim = 64;
    int64_t depth = 4;
    int64_t heads = 4;
    int64_t decoder_dim = 32;
    int64_t decoder_depth = 2;
    double mask_ratio = 0.75;
    int64_t window = 2;
    int64_t latent_rows = 8;  // l
    int64_t cond_dim = 32;    // d_c
    double dropout = 0.0;

    // contrastive
    std::string contrastive = "full";  // full | text | image | off
    double clip_eps = 20.0;
    int64_t clip_symmetric = 0;
    int64_t clip_normalize = 1;
    double sparsify_frac = 0.2;
    int64_t caption_augment = 1;
    int64_t crop_augment = 1;

    // stage schedules
    int64_t pretrain_steps = 200;
    double pretrain_lr = 1e-3;
    int64_t pretrain_batch = 16;
    int64_t contrastive_steps = 300;
    double contrastive_lr = 3e-4;
    int64_t contrastive_batch = 16;
    int64_t traingen_steps = 300;
    double traingen_lr = 1e-3;
    int64_t traingen_batch = 8;
    int64_t cotrain_steps = 500;
    double cotrain_lr = 3e-4;
    int64_t cotrain_batch = 8;
    double cond_drop_prob = 0.1;

    // diffusion / sampling
    int64_t timesteps = 100;
    double beta_start = 0.002;
    double beta_end = 0.25;
    int64_t gen_model_dim = 32;
    int64_t gen_depth = 2;
    int64_t gen_heads = 4;
    std::string guidance = "adversarial";  // adversarial | classifier-free
    double guidance_scale = 12.5;
    int64_t ddim_steps = 50;

    // evaluation / ablation
    int64_t nway_trials = 100;
    int64_t eval_k = 1;
    int64_t ablate_seeds = 5;
    std::string ablate_axes = "window,contrastive,guidance";

    uint64_t seed = 1;

    static RunConfig from_file(const std::string& path);
    void apply(const std::vector<std::pair<std::string, std::string>>& kv);
    std::vector<std::pair<std::string, std::string>> to_kv() const;
    std::string hash() const;  // FNV-1a over the resolved key=value text
    void validate() const;

    DatasetConfig dataset_config() const;
    EncoderConfig encoder_config(int64_t roi_voxels) const;
    DenoiserConfig denoiser_config() const;
};

// Single-process stage orchestrator over one run directory. Stage completion
// is tracked in manifest.txt; a stage runs only if its prerequisites are
// marked done, and rerunning a completed stage is a no-op.
class Pipeline {
public:
    Pipeline(const RunConfig& cfg, std::string run_dir);

    void run_stage(const std::string& stage);
    void run_all();  // every applicable stage in pipeline order
    void ablate();
    void report();

    bool stage_done(const std::string& stage) const;
    const RunConfig& cfg() const { return cfg_; }
    const std::string& run_dir() const { return dir_; }

    // sampler CLI overrides
    std::optional<int64_t> steps_override;
    std::optional<double> scale_override;
    std::optional<std::string> negative_override;  // avg-fmri | null

    static const std::vector<std::string>& stage_names();

private:
    void check_prereqs(const std::string& stage) const;
    void mark_done(const std::string& stage, double seconds,
                   const std::vector<std::string>& artifacts);
    void stage_gen_data();
    void stage_pretrain();
    void stage_contrastive();
    void stage_train_gen();
    void stage_cotrain();
    void stage_sample();
    void stage_evaluate();
    void stage_interpret();

    SplitData load_train() const;
    SplitData load_test() const;
    Tensor windows_tensor(const SplitData& split) const;

    RunConfig cfg_;
    std::string dir_;
};

}  // namespace neurovid
