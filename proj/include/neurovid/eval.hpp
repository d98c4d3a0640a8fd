#pragma once

#include <string>
#include <vector>

#include "neurovid/encoder.hpp"
#include "neurovid/synthdata.hpp"

namespace neurovid {

struct SsimConfig {
    double k1 = 0.01;
    double k2 = 0.03;
    double range = 1.0;  // dynamic range L
};

// mean local SSIM over valid 11x11 window positions (Gaussian sigma 1.5)
double ssim(const std::vector<double>& a, const std::vector<double>& b,
            int64_t height, int64_t width, const SsimConfig& cfg = {});

// frame-wise SSIM averaged over a clip
double ssim_clip(const VideoClip& a, const VideoClip& b,
                 const SsimConfig& cfg = {});

// N-way top-K classification test. Candidate set per trial: the ground
// truth's top-k_gt classes plus N-1 distractors sampled uniformly without
// replacement from the remaining classes. Success when any ground-truth
// top-k_gt class lands in the prediction's top-k over the candidates.
// k_gt < 0 means "same as k".
double nway_topk(const std::vector<double>& gt_probs,
                 const std::vector<double>& pred_probs, int64_t n, int64_t k,
                 int64_t trials, uint64_t seed, int64_t k_gt = -1);

// two-sided two-sample t-test p-value between metric sample sets
double ablation_stats(const std::vector<double>& a,
                      const std::vector<double>& b);
// Table-style significance band for a p-value
std::string p_band(double p);

// Small multinomial logistic-regression classifier standing in for the
// external frame / video recognition models.
struct ClassifierStub {
    int64_t classes = 0, features = 0;
    std::vector<double> w;  // [classes x features]
    std::vector<double> b;

    std::vector<double> predict(const std::vector<double>& feat) const;
    static ClassifierStub train(const std::vector<std::vector<double>>& x,
                                const std::vector<int64_t>& y, int64_t classes,
                                int64_t steps, double lr);
};

// 8x8 mean-pooled intensities of a single frame
std::vector<double> frame_features(const std::vector<double>& pixels,
                                   int64_t height, int64_t width);
// temporal-difference features: pooled |diff| map plus mean centroid motion
std::vector<double> video_features(const VideoClip& clip);

// deterministic stubs trained on clean renders of the scene catalog
ClassifierStub train_frame_classifier(const DatasetConfig& cfg);
ClassifierStub train_video_classifier(const DatasetConfig& cfg);

struct AttentionReport {
    std::string stage;
    int64_t layer = 0;
    std::vector<double> region_share;  // sums to 1
};

// Column-mean of the spatial attention maps at one layer, averaged over
// heads and test samples, pushed back from tokens to voxels and summed per
// region.
AttentionReport attention_report(const FmriEncoder& enc,
                                 const Tensor& test_windows, int64_t layer,
                                 const std::vector<int64_t>& region_labels,
                                 int64_t regions, const std::string& stage);

// CSV/SVG report helpers
void write_csv(const std::string& path, const std::string& header,
               const std::vector<std::string>& rows);
void write_bar_svg(const std::string& path, const std::string& title,
                   const std::vector<std::string>& labels,
                   const std::vector<double>& values);

}  // namespace neurovid
