#include "neurovid/contrastive.hpp"

#include <algorithm>
#include <stdexcept>

namespace neurovid {

FrozenEmbedder FrozenEmbedder::text(int64_t vocab, int64_t out_dim,
                                    uint64_t seed) {
    FrozenEmbedder e;
    e.modality_ = Modality::text;
    e.out_dim_ = out_dim;
    Rng rng(seed ^ 0x7e27);
    e.table_ = Tensor::randn({vocab, out_dim}, rng, 1.0, false);
    return e;
}

FrozenEmbedder FrozenEmbedder::image(int64_t pool, int64_t out_dim,
                                     uint64_t seed) {
    FrozenEmbedder e;
    e.modality_ = Modality::image;
    e.out_dim_ = out_dim;
    e.pool_ = pool;
    Rng rng(seed ^ 0x1a6e);
    e.table_ = Tensor::randn({pool * pool, out_dim}, rng, 1.0, false);
    return e;
}

Tensor FrozenEmbedder::embed_captions(
    const std::vector<std::vector<int64_t>>& captions) const {
    if (modality_ != Modality::text)
        throw std::logic_error("embed_captions on a non-text embedder");
    int64_t n = static_cast<int64_t>(captions.size());
    int64_t vocab = table_.shape()[0];
    // mean of token embeddings, pad tokens skipped
    std::vector<double> feat(static_cast<size_t>(n * vocab), 0.0);
    for (int64_t i = 0; i < n; ++i) {
        int64_t count = 0;
        for (int64_t t : captions[static_cast<size_t>(i)]) {
            if (t == kCaptionPad) continue;
            if (t < 0 || t >= vocab)
                throw std::out_of_range("caption token out of vocabulary");
            feat[static_cast<size_t>(i * vocab + t)] += 1.0;
            ++count;
        }
        if (count > 0)
            for (int64_t v = 0; v < vocab; ++v)
                feat[static_cast<size_t>(i * vocab + v)] /=
                    static_cast<double>(count);
    }
    Tensor bag = Tensor::from_data({n, vocab}, std::move(feat));
    return l2_normalize_rows(matmul(bag, table_));
}

Tensor FrozenEmbedder::embed_clips(const std::vector<VideoClip>& clips) const {
    if (modality_ != Modality::image)
        throw std::logic_error("embed_clips on a non-image embedder");
    int64_t n = static_cast<int64_t>(clips.size());
    int64_t pp = pool_ * pool_;
    std::vector<double> feat(static_cast<size_t>(n * pp), 0.0);
    for (int64_t i = 0; i < n; ++i) {
        const auto& c = clips[static_cast<size_t>(i)];
        // time-mean frame, average-pooled onto the pool grid
        for (int64_t f = 0; f < c.frames; ++f)
            for (int64_t y = 0; y < c.height; ++y)
                for (int64_t x = 0; x < c.width; ++x) {
                    int64_t py = y * pool_ / c.height;
                    int64_t px = x * pool_ / c.width;
                    feat[static_cast<size_t>(i * pp + py * pool_ + px)] +=
                        c.pixels[static_cast<size_t>((f * c.height + y) * c.width + x)];
                }
        double cells = static_cast<double>(c.frames * (c.height / pool_) *
                                           (c.width / pool_));
        for (int64_t j = 0; j < pp; ++j)
            feat[static_cast<size_t>(i * pp + j)] /= cells;
    }
    Tensor grid = Tensor::from_data({n, pp}, std::move(feat));
    return l2_normalize_rows(matmul(grid, table_));
}

Tensor clip_loss(const Tensor& a, const Tensor& b_emb, double eps,
                 bool normalize, bool symmetric) {
    if (a.rank() != 2 || b_emb.rank() != 2 || a.shape() != b_emb.shape())
        throw std::invalid_argument("clip_loss: embeddings must share [n x b], got " +
                                    shape_str(a.shape()) + " vs " +
                                    shape_str(b_emb.shape()));
    int64_t n = a.shape()[0];
    if (n == 0) throw std::invalid_argument("clip_loss: empty batch");
    if (eps <= 0.0) throw std::invalid_argument("clip_loss: eps must be positive");
    Tensor qa = normalize ? l2_normalize_rows(a) : a;
    Tensor qb = normalize ? l2_normalize_rows(b_emb) : b_emb;
    std::vector<int64_t> diag(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) diag[static_cast<size_t>(i)] = i;
    Tensor logits = scale(matmul(qa, transpose_last2(qb)), eps);
    Tensor loss = cross_entropy(logits, diag);
    if (symmetric)
        loss = scale(add(loss, cross_entropy(transpose_last2(logits), diag)), 0.5);
    return loss;
}

Tensor trimodal_loss(const Tensor& emb_f, const Tensor& emb_t,
                     const Tensor& emb_i, double eps, ContrastiveMode mode,
                     bool normalize, bool symmetric) {
    switch (mode) {
        case ContrastiveMode::text_only:
            return clip_loss(emb_f, emb_t, eps, normalize, symmetric);
        case ContrastiveMode::image_only:
            return clip_loss(emb_f, emb_i, eps, normalize, symmetric);
        case ContrastiveMode::full:
        default:
            return scale(add(clip_loss(emb_f, emb_t, eps, normalize, symmetric),
                             clip_loss(emb_f, emb_i, eps, normalize, symmetric)),
                         0.5);
    }
}

double retrieval_top1(const Tensor& queries, const Tensor& targets) {
    if (queries.shape() != targets.shape() || queries.rank() != 2)
        throw std::invalid_argument("retrieval_top1: shape mismatch");
    int64_t n = queries.shape()[0], d = queries.shape()[1];
    const auto& q = queries.data();
    const auto& t = targets.data();
    auto norm_row = [d](const std::vector<double>& v, int64_t r) {
        double s = 0.0;
        for (int64_t j = 0; j < d; ++j)
            s += v[static_cast<size_t>(r * d + j)] * v[static_cast<size_t>(r * d + j)];
        return std::sqrt(s) + 1e-12;
    };
    int64_t hits = 0;
    for (int64_t i = 0; i < n; ++i) {
        double best = -2.0;
        int64_t best_j = -1;
        double qi = norm_row(q, i);
        for (int64_t j = 0; j < n; ++j) {
            double dot = 0.0;
            for (int64_t k = 0; k < d; ++k)
                dot += q[static_cast<size_t>(i * d + k)] *
                       t[static_cast<size_t>(j * d + k)];
            double cs = dot / (qi * norm_row(t, j));
            if (cs > best) {
                best = cs;
                best_j = j;
            }
        }
        if (best_j == i) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(n);
}

std::vector<std::vector<int64_t>> make_contrastive_batches(
    const std::vector<int64_t>& scene_ids, int64_t batch_size, Rng& rng) {
    std::vector<int64_t> order(scene_ids.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int64_t>(i);
    rng.shuffle(order);
    std::vector<std::vector<int64_t>> batches;
    std::vector<int64_t> pending = order;
    while (!pending.empty()) {
        std::vector<int64_t> batch;
        std::vector<int64_t> rest;
        std::vector<int64_t> used;
        for (int64_t idx : pending) {
            int64_t sid = scene_ids[static_cast<size_t>(idx)];
            bool dup = std::find(used.begin(), used.end(), sid) != used.end();
            if (!dup && static_cast<int64_t>(batch.size()) < batch_size) {
                batch.push_back(idx);
                used.push_back(sid);
            } else {
                rest.push_back(idx);
            }
        }
        if (batch.size() >= 2) batches.push_back(batch);
        if (batch.empty()) break;  // all remaining share one scene
        pending = rest;
        if (batch.size() < 2) break;
    }
    return batches;
}

std::vector<int64_t> augment_caption(const std::vector<int64_t>& caption,
                                     Rng& rng) {
    std::vector<int64_t> out = caption;
    for (auto& t : out) {
        if (t == kCaptionPad || t == kCaptionSep) continue;
        double u = rng.uniform();
        if (u < 0.1)
            t = static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(kCaptionPad)));
    }
    // one random adjacent swap with probability 0.3
    if (out.size() >= 2 && rng.uniform() < 0.3) {
        size_t i = static_cast<size_t>(rng.uniform_int(out.size() - 1));
        if (out[i] < kCaptionPad && out[i + 1] < kCaptionPad)
            std::swap(out[i], out[i + 1]);
    }
    return out;
}

}  // namespace neurovid
