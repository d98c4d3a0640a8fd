#include "neurovid/diffusion.hpp"

#include <cmath>
#include <stdexcept>

#include "neurovid/container.hpp"

namespace neurovid {

NoiseSchedule NoiseSchedule::linear(int64_t timesteps, double beta_start,
                                    double beta_end) {
    if (timesteps < 1) throw std::invalid_argument("timesteps < 1");
    NoiseSchedule s;
    s.timesteps = timesteps;
    s.betas.assign(timesteps + 1, 0.0);
    s.alphas_cum.assign(timesteps + 1, 1.0);
    for (int64_t t = 1; t <= timesteps; ++t) {
        double frac = (timesteps == 1) ? 0.0
                                       : double(t - 1) / double(timesteps - 1);
        s.betas[t] = beta_start + (beta_end - beta_start) * frac;
        s.alphas_cum[t] = s.alphas_cum[t - 1] * (1.0 - s.betas[t]);
    }
    return s;
}

// orthonormal 2x2 Haar rows over (top-left, top-right, bottom-left,
// bottom-right); H H^T = I so decode is the exact transpose
static const double kHaar[4][4] = {
    {0.5, 0.5, 0.5, 0.5},
    {0.5, -0.5, 0.5, -0.5},
    {0.5, 0.5, -0.5, -0.5},
    {0.5, -0.5, -0.5, 0.5},
};
// DC channel of a mid-gray 2x2 block is 1.0; shift it so latents are centered
static const double kDcOffset = 1.0;
// sprite clips give Haar coefficients with std ~0.2; bring the latents to
// roughly unit scale so the noise schedule actually destroys signal gradually
static const double kLatentScale = 5.0;

std::vector<double> LatentMap::encode_raw(const std::vector<double>& pixels,
                                          int64_t frames, int64_t height,
                                          int64_t width) {
    if (height % 2 || width % 2)
        throw std::invalid_argument("latent encode needs even frame size");
    if ((int64_t)pixels.size() != frames * height * width)
        throw std::invalid_argument("pixel buffer size mismatch");
    int64_t h2 = height / 2, w2 = width / 2;
    std::vector<double> z(frames * 4 * h2 * w2);
    for (int64_t f = 0; f < frames; ++f) {
        const double* fp = pixels.data() + f * height * width;
        for (int64_t r = 0; r < h2; ++r)
            for (int64_t c = 0; c < w2; ++c) {
                double px[4] = {fp[(2 * r) * width + 2 * c],
                                fp[(2 * r) * width + 2 * c + 1],
                                fp[(2 * r + 1) * width + 2 * c],
                                fp[(2 * r + 1) * width + 2 * c + 1]};
                for (int64_t ch = 0; ch < 4; ++ch) {
                    double v = 0.0;
                    for (int k = 0; k < 4; ++k) v += kHaar[ch][k] * px[k];
                    if (ch == 0) v -= kDcOffset;
                    z[((f * 4 + ch) * h2 + r) * w2 + c] = v * kLatentScale;
                }
            }
    }
    return z;
}

std::vector<double> LatentMap::decode(const std::vector<double>& z,
                                      int64_t frames, int64_t height,
                                      int64_t width) {
    int64_t h2 = height / 2, w2 = width / 2;
    if ((int64_t)z.size() != frames * 4 * h2 * w2)
        throw std::invalid_argument("latent buffer size mismatch");
    std::vector<double> pixels(frames * height * width);
    for (int64_t f = 0; f < frames; ++f) {
        double* fp = pixels.data() + f * height * width;
        for (int64_t r = 0; r < h2; ++r)
            for (int64_t c = 0; c < w2; ++c) {
                double ch[4];
                for (int64_t k = 0; k < 4; ++k)
                    ch[k] = z[((f * 4 + k) * h2 + r) * w2 + c];
                ch[0] += kDcOffset;
                double px[4];
                for (int k = 0; k < 4; ++k) {
                    px[k] = 0.0;
                    for (int j = 0; j < 4; ++j) px[k] += kHaar[j][k] * ch[j];
                }
                fp[(2 * r) * width + 2 * c] = px[0];
                fp[(2 * r) * width + 2 * c + 1] = px[1];
                fp[(2 * r + 1) * width + 2 * c] = px[2];
                fp[(2 * r + 1) * width + 2 * c + 1] = px[3];
            }
    }
    return pixels;
}

Tensor LatentMap::encode(const VideoClip& clip) {
    if (clip.channels != 1)
        throw std::invalid_argument("latent encode expects single-channel clips");
    auto z = encode_raw(clip.pixels, clip.frames, clip.height, clip.width);
    return Tensor::from_data(
        {clip.frames, 4, clip.height / 2, clip.width / 2}, std::move(z));
}

VideoDenoiser::VideoDenoiser(const DenoiserConfig& cfg, uint64_t init_seed)
    : cfg_(cfg) {
    if (cfg.model_dim % cfg.heads)
        throw std::invalid_argument("model_dim must divide by heads");
    if (cfg.latent_h < 1 || cfg.latent_w < 1 || cfg.frames < 1)
        throw std::invalid_argument("bad latent geometry");
    Rng rng(init_seed);
    in_proj_ = Linear(params_, "gen.in", cfg.channels, cfg.model_dim, rng);
    out_proj_ = Linear(params_, "gen.out", cfg.model_dim, cfg.channels, rng);
    time_proj_ = Linear(params_, "gen.time", cfg.model_dim, cfg.model_dim, rng);
    cond_proj_ = Linear(params_, "gen.cond", cfg.cond_dim, cfg.model_dim, rng);
    int64_t hidden = (int64_t)(cfg.model_dim * cfg.mlp_ratio);
    for (int64_t i = 0; i < cfg.depth; ++i) {
        std::string p = "gen.block" + std::to_string(i) + ".";
        ln1_.emplace_back(params_, p + "ln1", cfg.model_dim);
        attn1_.emplace_back(params_, p + "attn1", cfg.model_dim, cfg.heads, rng);
        ln2_.emplace_back(params_, p + "ln2", cfg.model_dim);
        attn2_.emplace_back(params_, p + "attn2", cfg.model_dim, cfg.heads, rng);
        ln3_.emplace_back(params_, p + "ln3", cfg.model_dim);
        attn_temp_.emplace_back(params_, p + "attn_temp", cfg.model_dim,
                                cfg.heads, rng);
        ln4_.emplace_back(params_, p + "ln4", cfg.model_dim);
        mlps_.emplace_back(params_, p + "mlp", cfg.model_dim, hidden, rng);
    }
    pos2d_ = sinusoidal_positions(cfg.latent_h * cfg.latent_w, cfg.model_dim);
    posf_ = sinusoidal_positions(cfg.frames, cfg.model_dim);
    time_table_ = sinusoidal_positions(cfg.max_timesteps + 1, cfg.model_dim);
}

std::vector<std::string> VideoDenoiser::attention_prefixes() const {
    std::vector<std::string> out;
    for (int64_t i = 0; i < cfg_.depth; ++i) {
        std::string p = "gen.block" + std::to_string(i) + ".";
        out.push_back(p + "attn1");
        out.push_back(p + "attn2");
        out.push_back(p + "attn_temp");
    }
    return out;
}

Tensor VideoDenoiser::forward(const Tensor& z, const std::vector<int64_t>& t,
                              const std::optional<Tensor>& cond) const {
    const int64_t F = cfg_.frames, c = cfg_.channels;
    const int64_t h = cfg_.latent_h, w = cfg_.latent_w, d = cfg_.model_dim;
    const int64_t hw = h * w;
    if (z.rank() != 5 || z.shape()[1] != F || z.shape()[2] != c ||
        z.shape()[3] != h || z.shape()[4] != w)
        throw std::invalid_argument("denoiser input shape " +
                                    shape_str(z.shape()));
    const int64_t n = z.shape()[0];
    if ((int64_t)t.size() != n)
        throw std::invalid_argument("one timestep per sample expected");
    for (int64_t ti : t)
        if (ti < 0 || ti > cfg_.max_timesteps)
            throw std::out_of_range("timestep out of range");

    // [n,F,c,h,w] -> [n*F, h*w, c] token layout
    Tensor x = reshape(permute(z, {0, 1, 3, 4, 2}), {n * F, hw, c});
    x = in_proj_.forward(x);

    // fixed positional terms, combined into one constant
    std::vector<double> posbuf(n * F * hw * d);
    for (int64_t i = 0; i < n * F; ++i) {
        int64_t f = i % F;
        for (int64_t p = 0; p < hw; ++p)
            for (int64_t k = 0; k < d; ++k)
                posbuf[(i * hw + p) * d + k] =
                    pos2d_.data()[p * d + k] + posf_.data()[f * d + k];
    }
    x = add(x, Tensor::from_data({n * F, hw, d}, std::move(posbuf)));

    // learned timestep embedding, broadcast over every token of a sample
    std::vector<int64_t> rep_idx(n * F);
    for (int64_t i = 0; i < n * F; ++i) rep_idx[i] = i / F;
    Tensor t_emb = time_proj_.forward(embed_rows(time_table_, t));  // [n,d]
    Tensor t_rep = reshape(gather(t_emb, 0, rep_idx), {n * F, 1, d});
    x = add(x, matmul(Tensor::full({n * F, hw, 1}, 1.0), t_rep));

    // conditioning rows; the null condition is the all-zero input
    Tensor cond_in = cond ? *cond
                          : Tensor::zeros({n, cfg_.cond_rows, cfg_.cond_dim});
    if (cond_in.rank() != 3 || cond_in.shape()[0] != n ||
        cond_in.shape()[1] != cfg_.cond_rows ||
        cond_in.shape()[2] != cfg_.cond_dim)
        throw std::invalid_argument("condition shape " +
                                    shape_str(cond_in.shape()));
    Tensor cond_kv =
        gather(cond_proj_.forward(cond_in), 0, rep_idx);  // [n*F, l, d]

    // sparse-causal source frames: frame i reads frames i-2 and i-1
    std::vector<int64_t> sc_idx(2 * F);
    for (int64_t f = 0; f < F; ++f) {
        sc_idx[2 * f] = std::max<int64_t>(f - 2, 0);
        sc_idx[2 * f + 1] = std::max<int64_t>(f - 1, 0);
    }

    for (int64_t i = 0; i < cfg_.depth; ++i) {
        Tensor norm = ln1_[i].forward(x);
        x = add(x, attn1_[i].forward(norm, norm));
        x = add(x, attn2_[i].forward(ln2_[i].forward(x), cond_kv));
        Tensor sc_kv = reshape(
            gather(reshape(x, {n, F, hw, d}), 1, sc_idx), {n * F, 2 * hw, d});
        x = add(x, attn_temp_[i].forward(ln3_[i].forward(x), sc_kv));
        x = add(x, mlps_[i].forward(ln4_[i].forward(x)));
    }
    Tensor out = out_proj_.forward(x);  // [n*F, hw, c]
    return permute(reshape(out, {n, F, h, w, c}), {0, 1, 4, 2, 3});
}

void VideoDenoiser::save_checkpoint(const std::string& path,
                                    const std::string& stage,
                                    const std::string& config_hash) const {
    Container ct;
    ct.put_string("meta.stage", stage);
    ct.put_string("meta.config_hash", config_hash);
    for (const auto& [name, t] : params_.all()) ct.put_tensor("param." + name, t);
    ct.save(path);
}

std::string VideoDenoiser::load_checkpoint(const std::string& path) {
    Container ct = Container::load(path);
    for (auto& [name, t] : params_.all()) {
        const auto& e = ct.get("param." + name);
        if (e.shape != t.shape())
            throw std::runtime_error("checkpoint " + path +
                                     ": shape mismatch for " + name);
        t.data() = e.f64;
    }
    return ct.get_string("meta.stage");
}

Tensor q_sample(const Tensor& z0, int64_t t, const NoiseSchedule& sched,
                const Tensor& noise) {
    if (t < 0 || t > sched.timesteps)
        throw std::out_of_range("q_sample timestep");
    if (noise.shape() != z0.shape())
        throw std::invalid_argument("noise shape mismatch");
    double abar = sched.alphas_cum[t];
    return add(scale(z0, std::sqrt(abar)),
               scale(noise, std::sqrt(1.0 - abar)));
}

Tensor guided_noise(const VideoDenoiser& model, const Tensor& z,
                    const std::vector<int64_t>& t, const GuidanceSpec& spec) {
    if (!spec.positive) return model.forward(z, t, std::nullopt);
    Tensor eps_pos = model.forward(z, t, spec.positive);
    if (spec.scale == 1.0) return eps_pos;  // extrapolation is exactly a no-op
    Tensor eps_neg = model.forward(z, t, spec.negative);
    return add(eps_neg, scale(sub(eps_pos, eps_neg), spec.scale));
}

Tensor ddim_step(const Tensor& z, const Tensor& eps, double abar,
                 double abar_prev) {
    if (abar <= 0.0 || abar > 1.0 || abar_prev <= 0.0 || abar_prev > 1.0)
        throw std::invalid_argument("ddim_step: alpha products must be in (0, 1]");
    // deterministic update: reconstruct z0, re-noise to the earlier level
    Tensor z0 = scale(sub(z, scale(eps, std::sqrt(1.0 - abar))),
                      1.0 / std::sqrt(abar));
    return add(scale(z0, std::sqrt(abar_prev)),
               scale(eps, std::sqrt(1.0 - abar_prev)));
}

Tensor ddim_sample(const VideoDenoiser& model, const NoiseSchedule& sched,
                   const GuidanceSpec& spec, int64_t n, int64_t steps,
                   uint64_t seed) {
    if (steps < 1 || steps > sched.timesteps)
        throw std::invalid_argument("ddim steps out of range");
    const auto& cfg = model.cfg();
    Shape zs = {n, cfg.frames, cfg.channels, cfg.latent_h, cfg.latent_w};
    Rng rng(seed);
    Tensor z = Tensor::randn(zs, rng);
    for (int64_t i = steps; i >= 1; --i) {
        int64_t t = (int64_t)std::llround(
            double(sched.timesteps) * double(i) / double(steps));
        int64_t t_prev = (int64_t)std::llround(
            double(sched.timesteps) * double(i - 1) / double(steps));
        std::vector<int64_t> tv(n, t);
        Tensor eps = guided_noise(model, z, tv, spec);
        z = ddim_step(z, eps, sched.alphas_cum[t], sched.alphas_cum[t_prev]);
        // drop the graph between steps, sampling never backprops
        z = Tensor::from_data(z.shape(), z.data());
    }
    return z;
}

Tensor average_fmri(const Tensor& windows) {
    if (windows.rank() != 3)
        throw std::invalid_argument("expected [n x w x V] windows");
    Tensor m = mean_axis(windows, 0);
    return reshape(m, {1, windows.shape()[1], windows.shape()[2]});
}

}  // namespace neurovid
