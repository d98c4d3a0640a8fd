#pragma once

#include <string>
#include <vector>

#include "neurovid/nn.hpp"

namespace neurovid {

struct EncoderConfig {
    int64_t voxels = 0;  // ROI size, set from data
    int64_t patch_size = 8;
    int64_t embed_dim = 64;
    int64_t depth = 4;
    int64_t heads = 4;
    int64_t decoder_dim = 32;
    int64_t decoder_depth = 2;
    int64_t decoder_heads = 4;
    double mask_ratio = 0.75;
    int64_t window = 2;
    int64_t latent_channels = 8;  // unpooled rows (l)
    int64_t cond_dim = 32;        // unpooled columns (d_c)
    double mlp_ratio = 2.0;
    double dropout = 0.0;

    int64_t n_tokens() const { return (voxels + patch_size - 1) / patch_size; }
    void validate() const;
};

// Progressive fMRI encoder: 1-D patchifier, masked-autoencoder pretraining
// path, interleaved spatial/temporal attention blocks and a projection head
// producing pooled and unpooled conditioning embeddings.
class FmriEncoder {
public:
    FmriEncoder(const EncoderConfig& cfg, uint64_t init_seed);

    const EncoderConfig& cfg() const { return cfg_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    // [n x w x V] voxels -> [n x w x p_tok x b] embedded tokens with spatial
    // and temporal positional encodings (zero-padded final patch)
    Tensor patchify(const Tensor& fmri) const;

    // full spatiotemporal encoder; temporal layers run only when w > 1
    Tensor encode_tokens(const Tensor& fmri,
                         std::vector<AttnTrace>* spatial_traces = nullptr,
                         Rng* dropout_rng = nullptr) const;

    struct Output {
        Tensor pooled;    // [n x b]
        Tensor unpooled;  // [n x l x d_c]
    };
    Output project(const Tensor& tokens) const;
    Output forward(const Tensor& fmri, Rng* dropout_rng = nullptr) const;

    struct MbmResult {
        Tensor loss;                              // masked-patch MSE
        Tensor recon;                             // [n x p_tok x p] predictions
        std::vector<std::vector<int64_t>> masks;  // per-sample masked token ids
    };
    // masked-brain-modeling pretraining step on single frames [n x V]
    MbmResult mbm_step(const Tensor& fmri, Rng& mask_rng) const;

    void save_checkpoint(const std::string& path, const std::string& stage,
                         const std::string& config_hash) const;
    // returns the stage tag stored in the file
    std::string load_checkpoint(const std::string& path);

private:
    Tensor spatial_block(const Tensor& x, int64_t layer, AttnTrace* trace,
                         Rng* dropout_rng) const;  // x [B x p_tok x b]

    EncoderConfig cfg_;
    ParamStore params_;
    Tensor token_pos_;  // [p_tok x b]
    Tensor frame_pos_;  // [max_window x b]
    Tensor dec_pos_;    // [p_tok x decoder_dim]
    std::vector<MultiheadAttention> spat_attn_, temp_attn_;
    std::vector<LayerNormP> ln1_, ln2_, ln3_;
    std::vector<Mlp> mlps_;
    std::vector<MultiheadAttention> dec_attn_;
    std::vector<LayerNormP> dec_ln1_, dec_ln2_;
    std::vector<Mlp> dec_mlps_;
    Linear patch_embed_, dec_embed_, dec_head_;
    Tensor mask_token_;
    Linear pool_head_, unpool_head_;
    LayerNormP enc_norm_;
};

// 20% random voxel sparsification used as augmentation in later stages
Tensor sparsify_voxels(const Tensor& fmri, double frac, Rng& rng);

std::string checkpoint_stage(const std::string& path);
std::string checkpoint_config_hash(const std::string& path);

}  // namespace neurovid
