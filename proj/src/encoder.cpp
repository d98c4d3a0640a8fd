#include "neurovid/encoder.hpp"

#include <cmath>
#include <stdexcept>

#include "neurovid/container.hpp"

namespace neurovid {

namespace {
constexpr int64_t kMaxWindow = 8;

// replicate a constant [rows x d] table across leading batch dims
Tensor tile_table(const Tensor& table, const Shape& out_shape) {
    int64_t rows = table.shape()[0], d = table.shape()[1];
    int64_t reps = shape_numel(out_shape) / (rows * d);
    std::vector<double> data;
    data.reserve(static_cast<size_t>(reps * rows * d));
    for (int64_t r = 0; r < reps; ++r)
        data.insert(data.end(), table.data().begin(), table.data().end());
    return Tensor::from_data(out_shape, std::move(data));
}

}  // namespace

void EncoderConfig::validate() const {
    if (voxels < 1) throw std::invalid_argument("encoder: voxels must be >= 1");
    if (mask_ratio <= 0.0 || mask_ratio >= 1.0)
        throw std::invalid_argument("encoder: mask_ratio must be in (0,1)");
    if (embed_dim % heads != 0)
        throw std::invalid_argument("encoder: embed_dim not divisible by heads");
    if (window < 1 || window > kMaxWindow)
        throw std::invalid_argument("encoder: window out of range");
}

FmriEncoder::FmriEncoder(const EncoderConfig& cfg, uint64_t init_seed)
    : cfg_(cfg) {
    cfg_.validate();
    Rng rng(init_seed);
    int64_t b = cfg_.embed_dim, p = cfg_.patch_size;
    int64_t p_tok = cfg_.n_tokens();
    int64_t hidden = static_cast<int64_t>(cfg_.mlp_ratio * static_cast<double>(b));
    patch_embed_ = Linear(params_, "enc.patch_embed", p, b, rng);
    for (int64_t i = 0; i < cfg_.depth; ++i) {
        std::string pre = "enc.block" + std::to_string(i);
        ln1_.emplace_back(params_, pre + ".ln1", b);
        spat_attn_.emplace_back(params_, pre + ".spat", b, cfg_.heads, rng);
        ln2_.emplace_back(params_, pre + ".ln2", b);
        temp_attn_.emplace_back(params_, pre + ".temp", b, cfg_.heads, rng);
        ln3_.emplace_back(params_, pre + ".ln3", b);
        mlps_.emplace_back(params_, pre + ".mlp", b, hidden, rng);
    }
    enc_norm_ = LayerNormP(params_, "enc.norm", b);
    int64_t dd = cfg_.decoder_dim;
    int64_t dhidden = static_cast<int64_t>(cfg_.mlp_ratio * static_cast<double>(dd));
    dec_embed_ = Linear(params_, "dec.embed", b, dd, rng);
    mask_token_ = params_.create("dec.mask_token", {1, dd}, rng, 0.02);
    for (int64_t i = 0; i < cfg_.decoder_depth; ++i) {
        std::string pre = "dec.block" + std::to_string(i);
        dec_ln1_.emplace_back(params_, pre + ".ln1", dd);
        dec_attn_.emplace_back(params_, pre + ".attn", dd, cfg_.decoder_heads, rng);
        dec_ln2_.emplace_back(params_, pre + ".ln2", dd);
        dec_mlps_.emplace_back(params_, pre + ".mlp", dd, dhidden, rng);
    }
    dec_head_ = Linear(params_, "dec.head", dd, p, rng);
    pool_head_ = Linear(params_, "proj.pool", b, b, rng);
    unpool_head_ = Linear(params_, "proj.unpool", b,
                          cfg_.latent_channels * cfg_.cond_dim, rng);
    token_pos_ = sinusoidal_positions(p_tok, b);
    frame_pos_ = sinusoidal_positions(kMaxWindow, b);
    dec_pos_ = sinusoidal_positions(p_tok, dd);
}

Tensor FmriEncoder::patchify(const Tensor& fmri) const {
    if (fmri.rank() != 3)
        throw std::invalid_argument("patchify: expected [n x w x V], got " +
                                    shape_str(fmri.shape()));
    int64_t n = fmri.shape()[0], w = fmri.shape()[1], v = fmri.shape()[2];
    if (v != cfg_.voxels)
        throw std::invalid_argument("patchify: voxel count " + std::to_string(v) +
                                    " does not match config " +
                                    std::to_string(cfg_.voxels));
    int64_t p = cfg_.patch_size, p_tok = cfg_.n_tokens();
    Tensor x = fmri;
    int64_t pad = p_tok * p - v;
    if (pad > 0) x = concat({x, Tensor::zeros({n, w, pad})}, 2);
    x = reshape(x, {n, w, p_tok, p});
    x = patch_embed_.forward(x);  // [n x w x p_tok x b]
    x = add(x, tile_table(token_pos_, x.shape()));
    // frame position, constant per window slot
    int64_t b = cfg_.embed_dim;
    std::vector<double> fp(static_cast<size_t>(n * w * p_tok * b));
    for (int64_t i = 0; i < n; ++i)
        for (int64_t s = 0; s < w; ++s)
            for (int64_t t = 0; t < p_tok; ++t)
                for (int64_t j = 0; j < b; ++j)
                    fp[static_cast<size_t>(((i * w + s) * p_tok + t) * b + j)] =
                        frame_pos_.data()[static_cast<size_t>(s * b + j)];
    x = add(x, Tensor::from_data(x.shape(), std::move(fp)));
    return x;
}

Tensor FmriEncoder::spatial_block(const Tensor& x, int64_t layer,
                                  AttnTrace* trace, Rng* dropout_rng) const {
    size_t li = static_cast<size_t>(layer);
    Tensor norm = ln1_[li].forward(x);
    Tensor a = spat_attn_[li].forward(norm, norm, trace);
    if (dropout_rng && cfg_.dropout > 0.0)
        a = dropout(a, cfg_.dropout, *dropout_rng);
    return add(x, a);
}

Tensor FmriEncoder::encode_tokens(const Tensor& fmri,
                                  std::vector<AttnTrace>* spatial_traces,
                                  Rng* dropout_rng) const {
    int64_t n = fmri.shape()[0], w = fmri.shape()[1];
    int64_t p_tok = cfg_.n_tokens(), b = cfg_.embed_dim;
    Tensor x = patchify(fmri);
    if (spatial_traces) spatial_traces->assign(static_cast<size_t>(cfg_.depth), {});
    for (int64_t i = 0; i < cfg_.depth; ++i) {
        size_t li = static_cast<size_t>(i);
        // spatial attention over tokens within each (sample, frame)
        Tensor xs = reshape(x, {n * w, p_tok, b});
        xs = spatial_block(xs, i,
                           spatial_traces ? &(*spatial_traces)[li] : nullptr,
                           dropout_rng);
        x = reshape(xs, {n, w, p_tok, b});
        // temporal attention across window slots; identity when w == 1
        if (w > 1) {
            Tensor xt = reshape(permute(x, {0, 2, 1, 3}), {n * p_tok, w, b});
            Tensor norm = ln2_[li].forward(xt);
            Tensor t = temp_attn_[li].forward(norm, norm);
            if (dropout_rng && cfg_.dropout > 0.0)
                t = dropout(t, cfg_.dropout, *dropout_rng);
            xt = add(xt, t);
            x = permute(reshape(xt, {n, p_tok, w, b}), {0, 2, 1, 3});
        }
        Tensor m = mlps_[li].forward(ln3_[li].forward(x));
        if (dropout_rng && cfg_.dropout > 0.0)
            m = dropout(m, cfg_.dropout, *dropout_rng);
        x = add(x, m);
    }
    return enc_norm_.forward(x);
}

FmriEncoder::Output FmriEncoder::project(const Tensor& tokens) const {
    int64_t n = tokens.shape()[0];
    int64_t b = cfg_.embed_dim;
    Tensor flat = reshape(tokens, {n, tokens.numel() / (n * b), b});
    Tensor pooled_in = mean_axis(flat, 1);  // [n x b]
    Output out;
    out.pooled = pool_head_.forward(pooled_in);
    out.unpooled = reshape(unpool_head_.forward(pooled_in),
                           {n, cfg_.latent_channels, cfg_.cond_dim});
    return out;
}

FmriEncoder::Output FmriEncoder::forward(const Tensor& fmri,
                                         Rng* dropout_rng) const {
    return project(encode_tokens(fmri, nullptr, dropout_rng));
}

FmriEncoder::MbmResult FmriEncoder::mbm_step(const Tensor& fmri,
                                             Rng& mask_rng) const {
    if (fmri.rank() != 2)
        throw std::invalid_argument("mbm_step: expected [n x V], got " +
                                    shape_str(fmri.shape()));
    int64_t n = fmri.shape()[0];
    int64_t p = cfg_.patch_size, p_tok = cfg_.n_tokens(), b = cfg_.embed_dim;
    int64_t n_masked = static_cast<int64_t>(
        std::ceil(cfg_.mask_ratio * static_cast<double>(p_tok)));
    if (n_masked == 0)
        throw std::invalid_argument("mbm_step: mask_ratio leaves nothing masked");
    if (n_masked >= p_tok)
        throw std::invalid_argument("mbm_step: mask_ratio leaves no visible tokens");
    int64_t n_vis = p_tok - n_masked;

    Tensor tokens = reshape(patchify(reshape(fmri, {n, 1, cfg_.voxels})),
                            {n, p_tok, b});

    MbmResult res;
    std::vector<std::vector<int64_t>> visible(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        auto m = mask_rng.sample_without_replacement(static_cast<size_t>(p_tok),
                                                     static_cast<size_t>(n_masked));
        std::vector<int64_t> mask(m.begin(), m.end());
        std::vector<uint8_t> is_masked(static_cast<size_t>(p_tok), 0);
        for (int64_t t : mask) is_masked[static_cast<size_t>(t)] = 1;
        for (int64_t t = 0; t < p_tok; ++t)
            if (!is_masked[static_cast<size_t>(t)])
                visible[static_cast<size_t>(i)].push_back(t);
        res.masks.push_back(std::move(mask));
    }

    // encoder runs on visible tokens only
    std::vector<Tensor> vis_tokens;
    for (int64_t i = 0; i < n; ++i)
        vis_tokens.push_back(gather(slice(tokens, 0, i, 1), 1,
                                    visible[static_cast<size_t>(i)]));
    Tensor x = concat(vis_tokens, 0);  // [n x n_vis x b]
    for (int64_t i = 0; i < cfg_.depth; ++i) {
        x = spatial_block(x, i, nullptr, nullptr);
        size_t li = static_cast<size_t>(i);
        x = add(x, mlps_[li].forward(ln3_[li].forward(x)));
    }
    x = enc_norm_.forward(x);

    // decoder sees visible embeddings plus mask tokens, in token order
    Tensor dec_vis = dec_embed_.forward(x);  // [n x n_vis x dd]
    int64_t dd = cfg_.decoder_dim;
    Tensor ones = Tensor::full({1, n_masked, 1}, 1.0);
    Tensor mask_tok = reshape(mask_token_, {1, 1, dd});
    Tensor mask_block = matmul(ones, mask_tok);  // [1 x n_masked x dd]
    std::vector<Tensor> full_rows;
    for (int64_t i = 0; i < n; ++i) {
        Tensor seq = concat({slice(dec_vis, 0, i, 1), mask_block}, 1);
        // position t sits at slot rank(t) among visible, or n_vis + rank among
        // masked
        std::vector<int64_t> order(static_cast<size_t>(p_tok));
        const auto& vis = visible[static_cast<size_t>(i)];
        const auto& msk = res.masks[static_cast<size_t>(i)];
        std::vector<int64_t> slot(static_cast<size_t>(p_tok), 0);
        for (int64_t k = 0; k < n_vis; ++k)
            slot[static_cast<size_t>(vis[static_cast<size_t>(k)])] = k;
        for (int64_t k = 0; k < n_masked; ++k)
            slot[static_cast<size_t>(msk[static_cast<size_t>(k)])] = n_vis + k;
        for (int64_t t = 0; t < p_tok; ++t)
            order[static_cast<size_t>(t)] = slot[static_cast<size_t>(t)];
        full_rows.push_back(gather(seq, 1, order));
    }
    Tensor dec = concat(full_rows, 0);  // [n x p_tok x dd]
    dec = add(dec, tile_table(dec_pos_, dec.shape()));
    for (int64_t i = 0; i < cfg_.decoder_depth; ++i) {
        size_t li = static_cast<size_t>(i);
        Tensor norm = dec_ln1_[li].forward(dec);
        dec = add(dec, dec_attn_[li].forward(norm, norm));
        dec = add(dec, dec_mlps_[li].forward(dec_ln2_[li].forward(dec)));
    }
    res.recon = dec_head_.forward(dec);  // [n x p_tok x p]

    // zero-padded voxel targets, constant
    std::vector<double> tgt(static_cast<size_t>(n * p_tok * p), 0.0);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t vi = 0; vi < cfg_.voxels; ++vi)
            tgt[static_cast<size_t>(i * p_tok * p + vi)] =
                fmri.data()[static_cast<size_t>(i * cfg_.voxels + vi)];
    Tensor targets = Tensor::from_data({n, p_tok, p}, std::move(tgt));

    // loss over masked patches only
    std::vector<Tensor> pred_rows, tgt_rows;
    for (int64_t i = 0; i < n; ++i) {
        pred_rows.push_back(gather(slice(res.recon, 0, i, 1), 1,
                                   res.masks[static_cast<size_t>(i)]));
        tgt_rows.push_back(gather(slice(targets, 0, i, 1), 1,
                                  res.masks[static_cast<size_t>(i)]));
    }
    res.loss = mse_loss(concat(pred_rows, 0), concat(tgt_rows, 0));
    return res;
}

void FmriEncoder::save_checkpoint(const std::string& path,
                                  const std::string& stage,
                                  const std::string& config_hash) const {
    Container c;
    c.put_string("meta.stage", stage);
    c.put_string("meta.config_hash", config_hash);
    c.put_i64("meta.window", {1}, {cfg_.window});
    for (const auto& [name, t] : params_.all()) c.put_tensor("param." + name, t);
    c.save(path);
}

std::string FmriEncoder::load_checkpoint(const std::string& path) {
    Container c = Container::load(path);
    for (auto& [name, t] : params_.all()) {
        const auto& e = c.get("param." + name);
        if (e.shape != t.shape())
            throw std::runtime_error("checkpoint " + path + ": shape mismatch for " +
                                     name);
        t.data() = e.f64;
    }
    return c.get_string("meta.stage");
}

Tensor sparsify_voxels(const Tensor& fmri, double frac, Rng& rng) {
    std::vector<double> mask(fmri.data().size());
    for (auto& m : mask) m = (rng.uniform() < frac) ? 0.0 : 1.0;
    return mul(fmri, Tensor::from_data(fmri.shape(), std::move(mask)));
}

std::string checkpoint_stage(const std::string& path) {
    return Container::load(path).get_string("meta.stage");
}

std::string checkpoint_config_hash(const std::string& path) {
    return Container::load(path).get_string("meta.config_hash");
}

}  // namespace neurovid
