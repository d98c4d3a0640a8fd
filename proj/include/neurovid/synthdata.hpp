#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "neurovid/container.hpp"
#include "neurovid/rng.hpp"

namespace neurovid {

// Sampled double-gamma hemodynamic response kernel.
struct HrfModel {
    std::vector<double> kernel;  // h(t) sampled every dt seconds
    double dt = 2.0;
    double peak_delay = 6.0;
    double undershoot_delay = 16.0;
    double length = 32.0;

    static HrfModel canonical(double dt, double peak_delay = 6.0,
                              double undershoot_delay = 16.0,
                              double length = 32.0);
    double kernel_sum() const;
};

struct SyntheticScene {
    std::vector<double> semantic_code;  // drives content and neural signal
    double motion_code = 0.0;
    int64_t scene_id = 0;
    std::vector<int64_t> caption_tokens;
};

struct VideoClip {
    int64_t frames = 0, height = 0, width = 0, channels = 1;
    int64_t fps = 3;
    std::vector<double> pixels;  // [F x H x W x C], values in [0,1]
    std::vector<int64_t> caption_tokens;
};

struct SubjectRecording {
    int64_t t_scans = 0, voxels = 0;
    std::vector<double> bold;          // [T x V]
    std::vector<uint8_t> signal_mask;  // ground truth, size V
    double tr_seconds = 2.0;
};

// caption vocabulary layout
constexpr int64_t kCaptionVocab = 64;
constexpr int64_t kCaptionPad = 62;
constexpr int64_t kCaptionSep = 63;  // scene-change conjunction
constexpr int64_t kCaptionLen = 8;   // tokens per single-scene caption

// Deterministic scene catalog: semantic code, motion and caption all derive
// from the scene id, so equal ids render identically.
SyntheticScene make_scene(int64_t scene_id, int64_t semantic_dim = 8);

VideoClip render_clip(const SyntheticScene& scene, int64_t frames, int64_t fps,
                      int64_t height, int64_t width);

// Convolves a [T_hi x V] neural drive (sampled every frame_dt seconds) with
// the HRF, downsamples to the TR grid and adds i.i.d. Gaussian noise.
SubjectRecording simulate_bold(const std::vector<double>& drive, int64_t t_hi,
                               int64_t v, const HrfModel& hrf,
                               double frame_dt, double tr_seconds,
                               double noise_sigma, Rng& rng);

struct VoxelSelection {
    std::vector<int64_t> roi;      // sorted selected indices
    std::vector<double> t_stats;   // per raw voxel
    std::vector<double> p_values;  // per raw voxel
};

// Cross-repeat reproducibility screen: mean pairwise Pearson correlation per
// voxel, Fisher z-transformed, one-sample t-test against zero with
// Bonferroni-corrected threshold, then the top half by significance.
VoxelSelection select_voxels(const std::vector<SubjectRecording>& repeats,
                             double p_threshold = 0.01, double keep_frac = 0.5,
                             int64_t dof = -1);

struct DatasetConfig {
    int64_t train_windows = 432;
    int64_t test_windows = 48;
    int64_t voxels = 512;
    int64_t semantic_dim = 8;
    int64_t frames_per_window = 6;
    int64_t fps = 3;
    double tr_seconds = 2.0;
    int64_t height = 16, width = 16;
    int64_t repeats = 6;
    double noise_sigma = 0.4;
    double hrf_peak = 3.0;  // desk default keeps the lag within ~1 scan
    double hrf_undershoot = 16.0;
    double hrf_length = 32.0;
    int64_t regions = 4;
    // "graded": every voxel carries some drive, region 0 strongly;
    // "half": first half signal, second half pure noise
    std::string signal_layout = "graded";
    int64_t catalog_size = 64;   // distinct scenes (frame classifier classes)
    int64_t motion_classes = 8;  // video classifier classes
    int64_t scene_min_frames = 6, scene_max_frames = 15;
    uint64_t seed = 1;
};

// One contiguous scan run plus the per-window stimulus record.
struct SplitData {
    int64_t n_windows = 0;
    int64_t t_scans = 0;       // n_windows + margin so sliding windows fit
    int64_t roi_voxels = 0;
    std::vector<double> fmri;  // [t_scans x roi_voxels], voxelwise z-scored
    std::vector<VideoClip> clips;              // one per window
    std::vector<std::vector<int64_t>> captions;  // fixed length per window
    std::vector<int64_t> scene_ids;            // dominant scene per window
    std::vector<int64_t> motion_ids;           // dominant motion class
    std::vector<int64_t> region_labels;        // per ROI voxel
    std::vector<uint8_t> signal_mask;          // per ROI voxel
};

struct Dataset {
    DatasetConfig cfg;
    SplitData train, test;
    std::vector<int64_t> roi;  // selected raw-voxel indices
};

int64_t caption_slot_count();  // fixed caption record length

Dataset generate_dataset(const DatasetConfig& cfg);

void save_split(const SplitData& split, const DatasetConfig& cfg,
                const std::string& dir);
SplitData load_split(const std::string& dir);

}  // namespace neurovid
