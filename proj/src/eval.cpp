#include "neurovid/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "neurovid/stats.hpp"

namespace neurovid {

namespace {

constexpr int64_t kWin = 11;

const std::vector<double>& gaussian_window() {
    static std::vector<double> w = [] {
        std::vector<double> g(kWin * kWin);
        double sigma = 1.5, sum = 0.0, mid = (kWin - 1) / 2.0;
        for (int64_t r = 0; r < kWin; ++r)
            for (int64_t c = 0; c < kWin; ++c) {
                double d2 = (r - mid) * (r - mid) + (c - mid) * (c - mid);
                g[r * kWin + c] = std::exp(-d2 / (2.0 * sigma * sigma));
                sum += g[r * kWin + c];
            }
        for (auto& v : g) v /= sum;
        return g;
    }();
    return w;
}

}  // namespace

double ssim(const std::vector<double>& a, const std::vector<double>& b,
            int64_t height, int64_t width, const SsimConfig& cfg) {
    if (a.size() != b.size() || (int64_t)a.size() != height * width)
        throw std::invalid_argument("ssim: frame shape mismatch");
    if (cfg.k1 <= 0 || cfg.k2 <= 0 || cfg.range <= 0)
        throw std::invalid_argument("ssim: bad constants");
    if (height < kWin || width < kWin)
        throw std::invalid_argument("ssim: frame smaller than the window");
    const auto& win = gaussian_window();
    double c1 = cfg.k1 * cfg.range * cfg.k1 * cfg.range;
    double c2 = cfg.k2 * cfg.range * cfg.k2 * cfg.range;
    double total = 0.0;
    int64_t count = 0;
    for (int64_t r = 0; r + kWin <= height; ++r)
        for (int64_t c = 0; c + kWin <= width; ++c) {
            double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
            for (int64_t i = 0; i < kWin; ++i)
                for (int64_t j = 0; j < kWin; ++j) {
                    double wv = win[i * kWin + j];
                    double av = a[(r + i) * width + c + j];
                    double bv = b[(r + i) * width + c + j];
                    ma += wv * av;
                    mb += wv * bv;
                    saa += wv * av * av;
                    sbb += wv * bv * bv;
                    sab += wv * av * bv;
                }
            double va = saa - ma * ma, vb = sbb - mb * mb;
            double cov = sab - ma * mb;
            total += ((2 * ma * mb + c1) * (2 * cov + c2)) /
                     ((ma * ma + mb * mb + c1) * (va + vb + c2));
            ++count;
        }
    return total / count;
}

double ssim_clip(const VideoClip& a, const VideoClip& b,
                 const SsimConfig& cfg) {
    if (a.frames != b.frames || a.height != b.height || a.width != b.width)
        throw std::invalid_argument("ssim_clip: clip shape mismatch");
    int64_t fsz = a.height * a.width;
    double total = 0.0;
    for (int64_t f = 0; f < a.frames; ++f) {
        std::vector<double> fa(a.pixels.begin() + f * fsz,
                               a.pixels.begin() + (f + 1) * fsz);
        std::vector<double> fb(b.pixels.begin() + f * fsz,
                               b.pixels.begin() + (f + 1) * fsz);
        total += ssim(fa, fb, a.height, a.width, cfg);
    }
    return total / a.frames;
}

namespace {

std::vector<int64_t> topk_indices(const std::vector<double>& probs,
                                  int64_t k) {
    std::vector<int64_t> order(probs.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
        return probs[a] > probs[b];
    });
    order.resize(k);
    return order;
}

}  // namespace

double nway_topk(const std::vector<double>& gt_probs,
                 const std::vector<double>& pred_probs, int64_t n, int64_t k,
                 int64_t trials, uint64_t seed, int64_t k_gt) {
    int64_t n_cls = (int64_t)gt_probs.size();
    if (k_gt < 0) k_gt = k;
    if ((int64_t)pred_probs.size() != n_cls)
        throw std::invalid_argument("nway_topk: probability size mismatch");
    if (n > n_cls) throw std::invalid_argument("nway_topk: N exceeds classes");
    if (n < 2) throw std::invalid_argument("nway_topk: need at least 2 candidates");
    if (k < 1 || k > n || k_gt < 1 || k_gt > n_cls || trials < 1)
        throw std::invalid_argument("nway_topk: bad K or trial count");

    std::vector<int64_t> gt_top = topk_indices(gt_probs, k_gt);
    std::vector<uint8_t> is_gt(n_cls, 0);
    for (int64_t g : gt_top) is_gt[g] = 1;
    std::vector<int64_t> others;
    for (int64_t i = 0; i < n_cls; ++i)
        if (!is_gt[i]) others.push_back(i);
    if ((int64_t)others.size() < n - 1)
        throw std::invalid_argument("nway_topk: not enough distractor classes");

    Rng rng(seed);
    int64_t hits = 0;
    for (int64_t tr = 0; tr < trials; ++tr) {
        auto pick = rng.sample_without_replacement(others.size(), n - 1);
        std::vector<int64_t> cand = gt_top;
        for (auto i : pick) cand.push_back(others[i]);
        std::stable_sort(cand.begin(), cand.end(), [&](int64_t a, int64_t b) {
            return pred_probs[a] > pred_probs[b];
        });
        bool hit = false;
        for (int64_t i = 0; i < k && !hit; ++i) hit = is_gt[cand[i]];
        hits += hit;
    }
    return double(hits) / double(trials);
}

double ablation_stats(const std::vector<double>& a,
                      const std::vector<double>& b) {
    if (a.size() < 2 || b.size() < 2)
        throw std::invalid_argument("ablation_stats: need >= 2 samples each");
    return two_sample_t(a, b).p;
}

std::string p_band(double p) {
    if (p < 0.0001) return "p<0.0001";
    if (p < 0.01) return "p<0.01";
    if (p < 0.05) return "p<0.05";
    return "p>0.05";
}

std::vector<double> ClassifierStub::predict(
    const std::vector<double>& feat) const {
    if ((int64_t)feat.size() != features)
        throw std::invalid_argument("classifier: feature size mismatch");
    std::vector<double> logits(classes);
    for (int64_t c = 0; c < classes; ++c) {
        double z = b[c];
        for (int64_t f = 0; f < features; ++f) z += w[c * features + f] * feat[f];
        logits[c] = z;
    }
    double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (auto& z : logits) {
        z = std::exp(z - mx);
        sum += z;
    }
    for (auto& z : logits) z /= sum;
    return logits;
}

ClassifierStub ClassifierStub::train(const std::vector<std::vector<double>>& x,
                                     const std::vector<int64_t>& y,
                                     int64_t classes, int64_t steps,
                                     double lr) {
    if (x.empty() || x.size() != y.size())
        throw std::invalid_argument("classifier train: bad data");
    ClassifierStub m;
    m.classes = classes;
    m.features = (int64_t)x[0].size();
    m.w.assign(classes * m.features, 0.0);
    m.b.assign(classes, 0.0);
    int64_t n = (int64_t)x.size();
    std::vector<double> gw(m.w.size()), gb(m.b.size());
    for (int64_t s = 0; s < steps; ++s) {
        std::fill(gw.begin(), gw.end(), 0.0);
        std::fill(gb.begin(), gb.end(), 0.0);
        for (int64_t i = 0; i < n; ++i) {
            auto p = m.predict(x[i]);
            for (int64_t c = 0; c < classes; ++c) {
                double d = p[c] - (c == y[i] ? 1.0 : 0.0);
                gb[c] += d;
                for (int64_t f = 0; f < m.features; ++f)
                    gw[c * m.features + f] += d * x[i][f];
            }
        }
        for (size_t j = 0; j < m.w.size(); ++j) m.w[j] -= lr * gw[j] / n;
        for (size_t j = 0; j < m.b.size(); ++j) m.b[j] -= lr * gb[j] / n;
    }
    return m;
}

std::vector<double> frame_features(const std::vector<double>& pixels,
                                   int64_t height, int64_t width) {
    const int64_t grid = 8;
    if (height < grid || width < grid)
        throw std::invalid_argument("frame_features: frame too small");
    std::vector<double> feat(grid * grid, 0.0);
    std::vector<int64_t> cnt(grid * grid, 0);
    for (int64_t r = 0; r < height; ++r)
        for (int64_t c = 0; c < width; ++c) {
            int64_t gr = r * grid / height, gc = c * grid / width;
            feat[gr * grid + gc] += pixels[r * width + c];
            cnt[gr * grid + gc]++;
        }
    for (int64_t i = 0; i < grid * grid; ++i) feat[i] /= cnt[i];
    return feat;
}

std::vector<double> video_features(const VideoClip& clip) {
    const int64_t grid = 4;
    int64_t fsz = clip.height * clip.width;
    std::vector<double> feat(grid * grid + 3, 0.0);
    if (clip.frames < 2) return feat;
    // intensity centroid per frame -> mean per-step displacement
    double prev_cx = 0, prev_cy = 0;
    for (int64_t f = 0; f < clip.frames; ++f) {
        double cx = 0, cy = 0, mass = 0;
        for (int64_t r = 0; r < clip.height; ++r)
            for (int64_t c = 0; c < clip.width; ++c) {
                double v = clip.pixels[f * fsz + r * clip.width + c];
                cx += v * c;
                cy += v * r;
                mass += v;
            }
        if (mass > 1e-12) {
            cx /= mass;
            cy /= mass;
        }
        if (f > 0) {
            double dx = cx - prev_cx, dy = cy - prev_cy;
            // sprite wraps around the frame edge; fold large jumps back
            if (dx > clip.width / 2.0) dx -= clip.width;
            if (dx < -clip.width / 2.0) dx += clip.width;
            if (dy > clip.height / 2.0) dy -= clip.height;
            if (dy < -clip.height / 2.0) dy += clip.height;
            feat[grid * grid] += dx / (clip.frames - 1);
            feat[grid * grid + 1] += dy / (clip.frames - 1);
        }
        prev_cx = cx;
        prev_cy = cy;
    }
    // pooled mean absolute temporal difference
    std::vector<int64_t> cnt(grid * grid, 0);
    double mag = 0.0;
    for (int64_t f = 1; f < clip.frames; ++f)
        for (int64_t r = 0; r < clip.height; ++r)
            for (int64_t c = 0; c < clip.width; ++c) {
                double d = std::fabs(clip.pixels[f * fsz + r * clip.width + c] -
                                     clip.pixels[(f - 1) * fsz + r * clip.width + c]);
                int64_t gr = r * grid / clip.height, gc = c * grid / clip.width;
                feat[gr * grid + gc] += d;
                cnt[gr * grid + gc]++;
                mag += d;
            }
    for (int64_t i = 0; i < grid * grid; ++i)
        if (cnt[i]) feat[i] /= cnt[i];
    feat[grid * grid + 2] = mag / ((clip.frames - 1) * fsz);
    return feat;
}

ClassifierStub train_frame_classifier(const DatasetConfig& cfg) {
    std::vector<std::vector<double>> x;
    std::vector<int64_t> y;
    int64_t fsz = cfg.height * cfg.width;
    for (int64_t id = 0; id < cfg.catalog_size; ++id) {
        auto scene = make_scene(id, cfg.semantic_dim);
        // several temporal phases of each scene as training examples
        auto clip = render_clip(scene, cfg.frames_per_window * 2, cfg.fps,
                                cfg.height, cfg.width);
        for (int64_t f = 0; f < clip.frames; f += 2) {
            std::vector<double> frame(clip.pixels.begin() + f * fsz,
                                      clip.pixels.begin() + (f + 1) * fsz);
            x.push_back(frame_features(frame, cfg.height, cfg.width));
            y.push_back(id);
        }
    }
    return ClassifierStub::train(x, y, cfg.catalog_size, 300, 4.0);
}

ClassifierStub train_video_classifier(const DatasetConfig& cfg) {
    std::vector<std::vector<double>> x;
    std::vector<int64_t> y;
    for (int64_t id = 0; id < cfg.catalog_size; ++id) {
        auto scene = make_scene(id, cfg.semantic_dim);
        for (int64_t len : {cfg.frames_per_window, cfg.frames_per_window + 3}) {
            auto clip = render_clip(scene, len, cfg.fps, cfg.height, cfg.width);
            x.push_back(video_features(clip));
            y.push_back(id % cfg.motion_classes);
        }
    }
    return ClassifierStub::train(x, y, cfg.motion_classes, 300, 1.0);
}

AttentionReport attention_report(const FmriEncoder& enc,
                                 const Tensor& test_windows, int64_t layer,
                                 const std::vector<int64_t>& region_labels,
                                 int64_t regions, const std::string& stage) {
    if (layer < 0 || layer >= enc.cfg().depth)
        throw std::out_of_range("attention_report: layer out of range");
    int64_t p_tok = enc.cfg().n_tokens();
    int64_t voxels = enc.cfg().voxels;
    if ((int64_t)region_labels.size() != voxels)
        throw std::invalid_argument("attention_report: region label count");

    std::vector<AttnTrace> traces;
    enc.encode_tokens(test_windows, &traces);
    const AttnTrace& tr = traces.at(layer);

    // attention received per key token, averaged over heads and query rows
    std::vector<double> token_recv(p_tok, 0.0);
    for (const auto& map : tr.head_maps)
        for (int64_t q = 0; q < tr.tq; ++q)
            for (int64_t kk = 0; kk < tr.tk; ++kk)
                token_recv[kk] += map[q * tr.tk + kk];
    for (auto& v : token_recv) v /= double(tr.head_maps.size() * tr.tq);

    // spread each token's share evenly over its real (non-padded) voxels
    AttentionReport rep;
    rep.stage = stage;
    rep.layer = layer;
    rep.region_share.assign(regions, 0.0);
    int64_t ps = enc.cfg().patch_size;
    for (int64_t t = 0; t < p_tok; ++t) {
        int64_t lo = t * ps, hi = std::min(voxels, (t + 1) * ps);
        if (hi <= lo) continue;
        double per_voxel = token_recv[t] / double(hi - lo);
        for (int64_t v = lo; v < hi; ++v) {
            int64_t r = region_labels[v];
            if (r < 0 || r >= regions)
                throw std::out_of_range("attention_report: region label");
            rep.region_share[r] += per_voxel;
        }
    }
    double sum = std::accumulate(rep.region_share.begin(),
                                 rep.region_share.end(), 0.0);
    if (sum > 0)
        for (auto& v : rep.region_share) v /= sum;
    return rep;
}

void write_csv(const std::string& path, const std::string& header,
               const std::vector<std::string>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << header << "\n";
    for (const auto& r : rows) out << r << "\n";
}

void write_bar_svg(const std::string& path, const std::string& title,
                   const std::vector<std::string>& labels,
                   const std::vector<double>& values) {
    if (labels.size() != values.size())
        throw std::invalid_argument("bar chart: label/value count mismatch");
    const int w = 80, gap = 30, h = 260, base = 200;
    int total_w = gap + (int)values.size() * (w + gap);
    double vmax = 1e-12;
    for (double v : values) vmax = std::max(vmax, std::fabs(v));
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << total_w
        << "' height='" << h + 40 << "'>\n";
    out << "<text x='10' y='20' font-size='14'>" << title << "</text>\n";
    for (size_t i = 0; i < values.size(); ++i) {
        int bh = (int)(std::fabs(values[i]) / vmax * (base - 60));
        int x = gap + (int)i * (w + gap);
        out << "<rect x='" << x << "' y='" << base - bh << "' width='" << w
            << "' height='" << bh << "' fill='steelblue'/>\n";
        out << "<text x='" << x << "' y='" << base + 18
            << "' font-size='11'>" << labels[i] << "</text>\n";
        char buf[32];
        snprintf(buf, sizeof buf, "%.4f", values[i]);
        out << "<text x='" << x << "' y='" << base - bh - 6
            << "' font-size='11'>" << buf << "</text>\n";
    }
    out << "</svg>\n";
}

}  // namespace neurovid
