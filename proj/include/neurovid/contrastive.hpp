#pragma once

#include <cstdint>
#include <vector>

#include "neurovid/synthdata.hpp"
#include "neurovid/tensor.hpp"

namespace neurovid {

// Frozen random stand-in for the fixed text/image encoders. Weights never
// receive gradients; outputs are L2-normalized.
class FrozenEmbedder {
public:
    enum class Modality { text, image };

    static FrozenEmbedder text(int64_t vocab, int64_t out_dim, uint64_t seed);
    // images are average-pooled to pool x pool before the linear map
    static FrozenEmbedder image(int64_t pool, int64_t out_dim, uint64_t seed);

    Modality modality() const { return modality_; }
    int64_t out_dim() const { return out_dim_; }

    // [n x out_dim], rows L2-normalized
    Tensor embed_captions(const std::vector<std::vector<int64_t>>& captions) const;
    Tensor embed_clips(const std::vector<VideoClip>& clips) const;

private:
    Modality modality_;
    int64_t out_dim_ = 0;
    int64_t pool_ = 0;
    Tensor table_;  // text: token table [vocab x d]; image: linear [pool^2 x d]
};

enum class ContrastiveMode { full, text_only, image_only };

// CrossEntropy(eps * a.b^T, diag targets); rows of a are the queries
Tensor clip_loss(const Tensor& a, const Tensor& b_emb, double eps,
                 bool normalize = true, bool symmetric = false);

Tensor trimodal_loss(const Tensor& emb_f, const Tensor& emb_t,
                     const Tensor& emb_i, double eps,
                     ContrastiveMode mode = ContrastiveMode::full,
                     bool normalize = true, bool symmetric = false);

// fraction of query rows whose cosine-nearest target row is their own pair
double retrieval_top1(const Tensor& queries, const Tensor& targets);

// index batches with no scene id repeated within a batch
std::vector<std::vector<int64_t>> make_contrastive_batches(
    const std::vector<int64_t>& scene_ids, int64_t batch_size, Rng& rng);

// caption-token augmentation: random in-vocabulary substitution and swaps
std::vector<int64_t> augment_caption(const std::vector<int64_t>& caption,
                                     Rng& rng);

}  // namespace neurovid
