#include "neurovid/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <stdexcept>

#include "neurovid/stats.hpp"

namespace neurovid {

namespace {

double gamma_pdf(double t, double shape, double scale) {
    if (t <= 0.0) return 0.0;
    return std::exp((shape - 1.0) * std::log(t / scale) - t / scale -
                    std::lgamma(shape)) /
           scale;
}

}  // namespace

HrfModel HrfModel::canonical(double dt, double peak_delay,
                             double undershoot_delay, double length) {
    HrfModel h;
    h.dt = dt;
    h.peak_delay = peak_delay;
    h.undershoot_delay = undershoot_delay;
    h.length = length;
    // unit-scale gammas, mode at (shape - 1) * scale
    double a1 = peak_delay + 1.0;
    double a2 = undershoot_delay + 1.0;
    int64_t n = static_cast<int64_t>(std::ceil(length / dt));
    h.kernel.resize(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        double t = static_cast<double>(i) * dt;
        h.kernel[static_cast<size_t>(i)] =
            gamma_pdf(t, a1, 1.0) - gamma_pdf(t, a2, 1.0) / 6.0;
    }
    return h;
}

double HrfModel::kernel_sum() const {
    double s = 0.0;
    for (double v : kernel) s += v;
    return s;
}

SyntheticScene make_scene(int64_t scene_id, int64_t semantic_dim) {
    SyntheticScene s;
    s.scene_id = scene_id;
    Rng rng(0x5ce0c0deULL + static_cast<uint64_t>(scene_id) * 0x9e3779b97f4a7c15ULL);
    s.semantic_code.resize(static_cast<size_t>(semantic_dim));
    for (auto& c : s.semantic_code) c = rng.uniform(-1.0, 1.0);
    s.motion_code = static_cast<double>(scene_id % 8);
    s.caption_tokens.resize(static_cast<size_t>(kCaptionLen));
    for (auto& t : s.caption_tokens)
        t = static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(kCaptionPad)));
    return s;
}

VideoClip render_clip(const SyntheticScene& scene, int64_t frames, int64_t fps,
                      int64_t height, int64_t width) {
    if (frames < 1) throw std::invalid_argument("render_clip: frames must be >= 1");
    const auto& c = scene.semantic_code;
    auto code = [&](size_t i) {
        return c.empty() ? 0.0 : c[i % c.size()];
    };
    VideoClip clip;
    clip.frames = frames;
    clip.height = height;
    clip.width = width;
    clip.channels = 1;
    clip.fps = fps;
    clip.caption_tokens = scene.caption_tokens;
    clip.pixels.assign(static_cast<size_t>(frames * height * width), 0.0);

    // background grating
    double fx = 1.0 + 2.5 * std::fabs(code(0));
    double fy = 1.0 + 2.5 * std::fabs(code(1));
    double phase = 3.14159 * code(2);
    // sprite
    double size = (0.18 + 0.12 * std::fabs(code(3))) *
                  static_cast<double>(std::min(height, width));
    double cx0 = (0.25 + 0.5 * (0.5 + 0.5 * code(4))) * static_cast<double>(width);
    double cy0 = (0.25 + 0.5 * (0.5 + 0.5 * code(5))) * static_cast<double>(height);
    double bright = (code(6) > 0.0) ? 0.95 : 0.05;
    bool square = code(7) > 0.0;
    int64_t mclass = static_cast<int64_t>(scene.motion_code);
    double speed = (mclass == 0) ? 0.0 : 1.0 + 0.4 * static_cast<double>(mclass % 4);
    double ang = 2.0 * 3.14159265358979 * static_cast<double>(mclass) / 8.0;
    double dx = speed * std::cos(ang), dy = speed * std::sin(ang);

    for (int64_t f = 0; f < frames; ++f) {
        double cx = cx0 + dx * static_cast<double>(f);
        double cy = cy0 + dy * static_cast<double>(f);
        cx = cx - std::floor(cx / static_cast<double>(width)) * static_cast<double>(width);
        cy = cy - std::floor(cy / static_cast<double>(height)) * static_cast<double>(height);
        for (int64_t y = 0; y < height; ++y)
            for (int64_t x = 0; x < width; ++x) {
                double v = 0.5 + 0.22 * std::sin(2.0 * 3.14159265358979 *
                                                     (fx * static_cast<double>(x) /
                                                          static_cast<double>(width) +
                                                      fy * static_cast<double>(y) /
                                                          static_cast<double>(height)) +
                                                 phase);
                // wrapped distance to sprite center
                double ddx = std::fabs(static_cast<double>(x) - cx);
                ddx = std::min(ddx, static_cast<double>(width) - ddx);
                double ddy = std::fabs(static_cast<double>(y) - cy);
                ddy = std::min(ddy, static_cast<double>(height) - ddy);
                bool inside = square ? (ddx < size / 2 && ddy < size / 2)
                                     : (ddx * ddx + ddy * ddy < size * size / 4);
                if (inside) v = bright;
                clip.pixels[static_cast<size_t>((f * height + y) * width + x)] =
                    std::clamp(v, 0.0, 1.0);
            }
    }
    return clip;
}

SubjectRecording simulate_bold(const std::vector<double>& drive, int64_t t_hi,
                               int64_t v, const HrfModel& hrf, double frame_dt,
                               double tr_seconds, double noise_sigma, Rng& rng) {
    if (noise_sigma < 0.0)
        throw std::invalid_argument("simulate_bold: negative noise_sigma");
    if (static_cast<int64_t>(drive.size()) != t_hi * v)
        throw std::invalid_argument("simulate_bold: drive size mismatch");
    double ratio = tr_seconds / frame_dt;
    int64_t stride = static_cast<int64_t>(std::llround(ratio));
    if (std::fabs(ratio - static_cast<double>(stride)) > 1e-9 || stride < 1)
        throw std::invalid_argument(
            "simulate_bold: TR must be an integer multiple of the frame interval");
    // HRF sampled on the hi-res grid
    HrfModel hk = hrf;
    if (std::fabs(hrf.dt - frame_dt) > 1e-12)
        hk = HrfModel::canonical(frame_dt, hrf.peak_delay, hrf.undershoot_delay,
                                 hrf.length);
    int64_t klen = static_cast<int64_t>(hk.kernel.size());
    int64_t t_scans = t_hi / stride;
    SubjectRecording rec;
    rec.t_scans = t_scans;
    rec.voxels = v;
    rec.tr_seconds = tr_seconds;
    rec.bold.assign(static_cast<size_t>(t_scans * v), 0.0);
    rec.signal_mask.assign(static_cast<size_t>(v), 0);
    // scale by dt so the discrete sum approximates the continuous convolution
    for (int64_t s = 0; s < t_scans; ++s) {
        int64_t thi = s * stride;
        for (int64_t vi = 0; vi < v; ++vi) {
            double acc = 0.0;
            int64_t kmax = std::min(klen, thi + 1);
            for (int64_t k = 0; k < kmax; ++k)
                acc += hk.kernel[static_cast<size_t>(k)] *
                       drive[static_cast<size_t>((thi - k) * v + vi)];
            rec.bold[static_cast<size_t>(s * v + vi)] = acc * frame_dt;
        }
    }
    if (noise_sigma > 0.0)
        for (auto& b : rec.bold) b += noise_sigma * rng.normal();
    return rec;
}

VoxelSelection select_voxels(const std::vector<SubjectRecording>& repeats,
                             double p_threshold, double keep_frac, int64_t dof) {
    if (repeats.size() < 2)
        throw std::invalid_argument("select_voxels: need >= 2 repeats");
    int64_t t = repeats[0].t_scans, v = repeats[0].voxels;
    for (const auto& r : repeats)
        if (r.t_scans != t || r.voxels != v)
            throw std::invalid_argument("select_voxels: repeats differ in shape");
    int64_t r_count = static_cast<int64_t>(repeats.size());
    if (dof < 1) dof = r_count - 1;

    VoxelSelection sel;
    sel.t_stats.assign(static_cast<size_t>(v), 0.0);
    sel.p_values.assign(static_cast<size_t>(v), 1.0);
    double bonf = p_threshold / static_cast<double>(v);

    std::vector<double> a(static_cast<size_t>(t)), b(static_cast<size_t>(t));
    struct Cand {
        int64_t voxel;
        double t_stat;
        double p;
    };
    std::vector<Cand> passing;
    for (int64_t vi = 0; vi < v; ++vi) {
        std::vector<double> zs;
        for (int64_t i = 0; i < r_count; ++i)
            for (int64_t j = i + 1; j < r_count; ++j) {
                for (int64_t s = 0; s < t; ++s) {
                    a[static_cast<size_t>(s)] =
                        repeats[static_cast<size_t>(i)].bold[static_cast<size_t>(s * v + vi)];
                    b[static_cast<size_t>(s)] =
                        repeats[static_cast<size_t>(j)].bold[static_cast<size_t>(s * v + vi)];
                }
                double r = pearson(a, b);
                zs.push_back(std::isnan(r) ? 0.0 : fisher_z(r));
            }
        double m = mean_of(zs);
        double sd = stddev_of(zs);
        double tstat;
        if (sd == 0.0)
            tstat = (m == 0.0) ? 0.0 : ((m > 0) ? 1e12 : -1e12);
        else
            tstat = m / (sd / std::sqrt(static_cast<double>(zs.size())));
        double p = t_two_sided_p(std::min(std::fabs(tstat), 1e12),
                                 static_cast<double>(dof));
        sel.t_stats[static_cast<size_t>(vi)] = tstat;
        sel.p_values[static_cast<size_t>(vi)] = p;
        if (tstat > 0.0 && p < bonf) passing.push_back({vi, tstat, p});
    }
    // of all voxels, the most significant keep_frac, restricted to passers
    std::sort(passing.begin(), passing.end(), [](const Cand& x, const Cand& y) {
        if (x.t_stat != y.t_stat) return x.t_stat > y.t_stat;
        return x.voxel < y.voxel;
    });
    size_t keep =
        static_cast<size_t>(std::ceil(keep_frac * static_cast<double>(v)));
    passing.resize(std::min(passing.size(), keep));
    for (const auto& c : passing) sel.roi.push_back(c.voxel);
    std::sort(sel.roi.begin(), sel.roi.end());
    return sel;
}

int64_t caption_slot_count() { return 2 * kCaptionLen + 1; }

namespace {

struct SceneSpan {
    SyntheticScene scene;
    int64_t start_frame = 0, n_frames = 0;
};

std::vector<SceneSpan> make_scene_sequence(const DatasetConfig& cfg,
                                           int64_t total_frames, Rng& rng) {
    std::vector<SceneSpan> spans;
    int64_t f = 0;
    int64_t prev_id = -1;
    while (f < total_frames) {
        int64_t id = static_cast<int64_t>(
            rng.uniform_int(static_cast<uint64_t>(cfg.catalog_size)));
        if (id == prev_id) id = (id + 1) % cfg.catalog_size;
        prev_id = id;
        int64_t len = cfg.scene_min_frames +
                      static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(
                          cfg.scene_max_frames - cfg.scene_min_frames + 1)));
        len = std::min(len, total_frames - f);
        spans.push_back({make_scene(id, cfg.semantic_dim), f, len});
        f += len;
    }
    return spans;
}

// per-voxel loading vectors and gains, deterministic in the dataset seed
struct VoxelModel {
    std::vector<double> region_dir;  // [regions x dim]
    std::vector<double> voxel_dir;   // [V x dim]
    std::vector<double> gain;        // [V]
    std::vector<int64_t> region;     // [V]
};

VoxelModel make_voxel_model(const DatasetConfig& cfg, Rng& rng) {
    VoxelModel m;
    int64_t d = cfg.semantic_dim, v = cfg.voxels;
    m.region_dir.resize(static_cast<size_t>(cfg.regions * d));
    for (auto& x : m.region_dir) x = rng.normal();
    for (int64_t r = 0; r < cfg.regions; ++r) {
        double s = 0.0;
        for (int64_t j = 0; j < d; ++j)
            s += m.region_dir[static_cast<size_t>(r * d + j)] *
                 m.region_dir[static_cast<size_t>(r * d + j)];
        s = std::sqrt(s);
        for (int64_t j = 0; j < d; ++j)
            m.region_dir[static_cast<size_t>(r * d + j)] /= s;
    }
    m.voxel_dir.resize(static_cast<size_t>(v * d));
    for (auto& x : m.voxel_dir) x = rng.normal() / std::sqrt(static_cast<double>(d));
    m.gain.resize(static_cast<size_t>(v));
    m.region.resize(static_cast<size_t>(v));
    for (int64_t vi = 0; vi < v; ++vi) {
        int64_t r = vi * cfg.regions / v;
        m.region[static_cast<size_t>(vi)] = r;
        if (cfg.signal_layout == "half")
            m.gain[static_cast<size_t>(vi)] = (vi < v / 2) ? 1.0 : 0.0;
        else if (cfg.signal_layout == "graded")
            m.gain[static_cast<size_t>(vi)] = (r == 0) ? 1.0 : 0.45;
        else
            throw std::invalid_argument("unknown signal_layout: " +
                                        cfg.signal_layout);
    }
    return m;
}

std::vector<double> make_drive(const DatasetConfig& cfg, const VoxelModel& vm,
                               const std::vector<SceneSpan>& spans,
                               int64_t total_frames) {
    int64_t v = cfg.voxels, d = cfg.semantic_dim;
    std::vector<double> drive(static_cast<size_t>(total_frames * v), 0.0);
    for (const auto& span : spans) {
        // region and per-voxel responses to this scene's code
        std::vector<double> resp(static_cast<size_t>(v));
        for (int64_t vi = 0; vi < v; ++vi) {
            int64_t r = vm.region[static_cast<size_t>(vi)];
            double dr = 0.0, dv = 0.0;
            for (int64_t j = 0; j < d; ++j) {
                dr += span.scene.semantic_code[static_cast<size_t>(j)] *
                      vm.region_dir[static_cast<size_t>(r * d + j)];
                dv += span.scene.semantic_code[static_cast<size_t>(j)] *
                      vm.voxel_dir[static_cast<size_t>(vi * d + j)];
            }
            resp[static_cast<size_t>(vi)] =
                vm.gain[static_cast<size_t>(vi)] *
                (std::max(0.0, dr) + 0.6 * std::max(0.0, dv));
        }
        for (int64_t f = span.start_frame; f < span.start_frame + span.n_frames;
             ++f)
            for (int64_t vi = 0; vi < v; ++vi)
                drive[static_cast<size_t>(f * v + vi)] = resp[static_cast<size_t>(vi)];
    }
    return drive;
}

// Rescale each voxel's drive so its clean (noise-free) BOLD trace has a
// standard deviation equal to the voxel gain. Cross-repeat correlation then
// depends only on gain and noise_sigma, independent of HRF shape or content.
void calibrate_drive(const DatasetConfig& cfg, const VoxelModel& vm,
                     std::vector<double>& drive, int64_t total_frames,
                     const HrfModel& hrf, double frame_dt) {
    Rng dummy(0);
    SubjectRecording clean = simulate_bold(drive, total_frames, cfg.voxels, hrf,
                                           frame_dt, cfg.tr_seconds, 0.0, dummy);
    std::vector<double> col(static_cast<size_t>(clean.t_scans));
    for (int64_t vi = 0; vi < cfg.voxels; ++vi) {
        for (int64_t s = 0; s < clean.t_scans; ++s)
            col[static_cast<size_t>(s)] =
                clean.bold[static_cast<size_t>(s * cfg.voxels + vi)];
        double sd = stddev_of(col);
        double f = sd > 1e-9 ? vm.gain[static_cast<size_t>(vi)] / sd : 0.0;
        for (int64_t fr = 0; fr < total_frames; ++fr)
            drive[static_cast<size_t>(fr * cfg.voxels + vi)] *= f;
    }
}

SplitData build_split(const DatasetConfig& cfg, const VoxelModel& vm,
                      const std::vector<int64_t>& roi, int64_t n_windows,
                      Rng& rng, std::vector<SubjectRecording>* repeats_out) {
    const int64_t margin_scans = 4;  // room for sliding windows up to w=3
    int64_t t_scans = n_windows + margin_scans;
    int64_t fpw = cfg.frames_per_window;
    int64_t total_frames = t_scans * fpw;
    double frame_dt = 1.0 / static_cast<double>(cfg.fps);

    auto spans = make_scene_sequence(cfg, total_frames, rng);
    auto drive = make_drive(cfg, vm, spans, total_frames);
    HrfModel hrf = HrfModel::canonical(frame_dt, cfg.hrf_peak,
                                       cfg.hrf_undershoot, cfg.hrf_length);
    calibrate_drive(cfg, vm, drive, total_frames, hrf, frame_dt);
    std::vector<SubjectRecording> repeats;
    for (int64_t r = 0; r < cfg.repeats; ++r)
        repeats.push_back(simulate_bold(drive, total_frames, cfg.voxels, hrf,
                                        frame_dt, cfg.tr_seconds,
                                        cfg.noise_sigma, rng));
    if (repeats_out) *repeats_out = repeats;

    SplitData split;
    split.n_windows = n_windows;
    split.t_scans = t_scans;
    split.roi_voxels = static_cast<int64_t>(roi.size());
    int64_t rv = split.roi_voxels;
    // repeat-averaged recording restricted to the ROI
    split.fmri.assign(static_cast<size_t>(t_scans * rv), 0.0);
    for (int64_t s = 0; s < t_scans; ++s)
        for (int64_t i = 0; i < rv; ++i) {
            double acc = 0.0;
            for (const auto& rep : repeats)
                acc += rep.bold[static_cast<size_t>(s * cfg.voxels +
                                                    roi[static_cast<size_t>(i)])];
            split.fmri[static_cast<size_t>(s * rv + i)] =
                acc / static_cast<double>(cfg.repeats);
        }
    // voxelwise z-scoring
    for (int64_t i = 0; i < rv; ++i) {
        std::vector<double> col(static_cast<size_t>(t_scans));
        for (int64_t s = 0; s < t_scans; ++s)
            col[static_cast<size_t>(s)] = split.fmri[static_cast<size_t>(s * rv + i)];
        double m = mean_of(col), sd = stddev_of(col);
        if (sd < 1e-12) sd = 1.0;
        for (int64_t s = 0; s < t_scans; ++s)
            split.fmri[static_cast<size_t>(s * rv + i)] =
                (split.fmri[static_cast<size_t>(s * rv + i)] - m) / sd;
    }
    for (int64_t i = 0; i < rv; ++i) {
        int64_t raw = roi[static_cast<size_t>(i)];
        split.region_labels.push_back(vm.region[static_cast<size_t>(raw)]);
        split.signal_mask.push_back(vm.gain[static_cast<size_t>(raw)] > 0.5 ? 1 : 0);
    }

    // per-window stimulus record
    for (int64_t wnd = 0; wnd < n_windows; ++wnd) {
        int64_t f0 = wnd * fpw, f1 = f0 + fpw;
        // scenes overlapping [f0, f1)
        std::vector<const SceneSpan*> overlaps;
        for (const auto& sp : spans)
            if (sp.start_frame < f1 && sp.start_frame + sp.n_frames > f0)
                overlaps.push_back(&sp);
        // render window frames scene by scene
        VideoClip clip;
        clip.frames = fpw;
        clip.height = cfg.height;
        clip.width = cfg.width;
        clip.channels = 1;
        clip.fps = cfg.fps;
        clip.pixels.assign(static_cast<size_t>(fpw * cfg.height * cfg.width), 0.0);
        int64_t best_overlap = -1, best_scene = 0, best_motion = 0;
        for (const auto* sp : overlaps) {
            int64_t a = std::max(f0, sp->start_frame);
            int64_t b = std::min(f1, sp->start_frame + sp->n_frames);
            // render the whole span once is wasteful at this size; render the
            // covered frames with the correct in-scene frame offsets
            VideoClip span_clip = render_clip(sp->scene, sp->n_frames, cfg.fps,
                                              cfg.height, cfg.width);
            int64_t px_per_frame = cfg.height * cfg.width;
            for (int64_t f = a; f < b; ++f) {
                int64_t src = f - sp->start_frame;
                std::copy_n(span_clip.pixels.begin() + src * px_per_frame,
                            px_per_frame,
                            clip.pixels.begin() + (f - f0) * px_per_frame);
            }
            if (b - a > best_overlap) {
                best_overlap = b - a;
                best_scene = sp->scene.scene_id;
                best_motion = static_cast<int64_t>(sp->scene.motion_code);
            }
        }
        // fixed-length caption record; scene changes join two captions with
        // the separator token
        std::vector<int64_t> cap(static_cast<size_t>(caption_slot_count()),
                                 kCaptionPad);
        const auto& c0 = overlaps[0]->scene.caption_tokens;
        std::copy(c0.begin(), c0.end(), cap.begin());
        if (overlaps.size() > 1) {
            cap[static_cast<size_t>(kCaptionLen)] = kCaptionSep;
            const auto& c1 = overlaps[1]->scene.caption_tokens;
            std::copy(c1.begin(), c1.end(), cap.begin() + kCaptionLen + 1);
        }
        clip.caption_tokens = cap;
        split.clips.push_back(std::move(clip));
        split.captions.push_back(std::move(cap));
        split.scene_ids.push_back(best_scene);
        split.motion_ids.push_back(best_motion);
    }
    return split;
}

}  // namespace

Dataset generate_dataset(const DatasetConfig& cfg) {
    Dataset ds;
    ds.cfg = cfg;
    Rng root(cfg.seed);
    Rng vm_rng = root.fork();
    Rng train_rng = root.fork();
    Rng test_rng = root.fork();
    VoxelModel vm = make_voxel_model(cfg, vm_rng);

    std::vector<SubjectRecording> train_repeats;
    SplitData train_tmp;
    {
        // first pass to obtain repeats for selection; ROI not yet known
        Rng probe = train_rng;  // copy: the real pass must see identical draws
        const int64_t margin_scans = 4;
        int64_t t_scans = cfg.train_windows + margin_scans;
        int64_t total_frames = t_scans * cfg.frames_per_window;
        double frame_dt = 1.0 / static_cast<double>(cfg.fps);
        auto spans = make_scene_sequence(cfg, total_frames, probe);
        auto drive = make_drive(cfg, vm, spans, total_frames);
        HrfModel hrf = HrfModel::canonical(frame_dt, cfg.hrf_peak,
                                           cfg.hrf_undershoot, cfg.hrf_length);
        calibrate_drive(cfg, vm, drive, total_frames, hrf, frame_dt);
        for (int64_t r = 0; r < cfg.repeats; ++r)
            train_repeats.push_back(simulate_bold(drive, total_frames, cfg.voxels,
                                                  hrf, frame_dt, cfg.tr_seconds,
                                                  cfg.noise_sigma, probe));
        for (auto& rep : train_repeats)
            for (int64_t vi = 0; vi < cfg.voxels; ++vi)
                rep.signal_mask[static_cast<size_t>(vi)] =
                    vm.gain[static_cast<size_t>(vi)] > 0.5 ? 1 : 0;
    }
    VoxelSelection sel = select_voxels(train_repeats, 0.01, 0.5, cfg.repeats - 1);
    if (sel.roi.empty())
        throw std::runtime_error("generate_dataset: voxel selection kept nothing");
    ds.roi = sel.roi;
    ds.train = build_split(cfg, vm, ds.roi, cfg.train_windows, train_rng, nullptr);
    ds.test = build_split(cfg, vm, ds.roi, cfg.test_windows, test_rng, nullptr);
    return ds;
}

void save_split(const SplitData& split, const DatasetConfig& cfg,
                const std::string& dir) {
    std::filesystem::create_directories(dir);
    int64_t n = split.n_windows;
    int64_t fpw = cfg.frames_per_window;
    Container clips;
    std::vector<double> px;
    px.reserve(static_cast<size_t>(n * fpw * cfg.height * cfg.width));
    for (const auto& c : split.clips)
        px.insert(px.end(), c.pixels.begin(), c.pixels.end());
    clips.put_f64("clips", {n, fpw, cfg.height, cfg.width, 1}, std::move(px));
    clips.save(dir + "/clips.bin");

    Container fmri;
    fmri.put_f64("fmri", {split.t_scans, split.roi_voxels}, split.fmri);
    fmri.put_i64("region_labels", {split.roi_voxels}, split.region_labels);
    std::vector<int64_t> mask(split.signal_mask.begin(), split.signal_mask.end());
    fmri.put_i64("signal_mask", {split.roi_voxels}, std::move(mask));
    fmri.save(dir + "/fmri.bin");

    Container caps;
    std::vector<int64_t> flat;
    for (const auto& c : split.captions) flat.insert(flat.end(), c.begin(), c.end());
    caps.put_i64("captions", {n, caption_slot_count()}, std::move(flat));
    caps.put_i64("scene_ids", {n}, split.scene_ids);
    caps.put_i64("motion_ids", {n}, split.motion_ids);
    caps.save(dir + "/captions.bin");

    write_kv_file(dir + "/meta.txt",
                  {{"tr_seconds", std::to_string(cfg.tr_seconds)},
                   {"fps", std::to_string(cfg.fps)},
                   {"window_frames", std::to_string(fpw)},
                   {"voxel_count", std::to_string(split.roi_voxels)},
                   {"seed", std::to_string(cfg.seed)}});
}

SplitData load_split(const std::string& dir) {
    SplitData s;
    Container clips = Container::load(dir + "/clips.bin");
    const auto& ce = clips.get("clips");
    s.n_windows = ce.shape[0];
    int64_t fpw = ce.shape[1], h = ce.shape[2], w = ce.shape[3];
    auto meta = read_kv_file(dir + "/meta.txt");
    int64_t fps = 3;
    for (const auto& [k, v] : meta)
        if (k == "fps") fps = std::stoll(v);
    int64_t px_per_clip = fpw * h * w;
    for (int64_t i = 0; i < s.n_windows; ++i) {
        VideoClip c;
        c.frames = fpw;
        c.height = h;
        c.width = w;
        c.channels = 1;
        c.fps = fps;
        c.pixels.assign(ce.f64.begin() + i * px_per_clip,
                        ce.f64.begin() + (i + 1) * px_per_clip);
        s.clips.push_back(std::move(c));
    }
    Container fmri = Container::load(dir + "/fmri.bin");
    const auto& fe = fmri.get("fmri");
    s.t_scans = fe.shape[0];
    s.roi_voxels = fe.shape[1];
    s.fmri = fe.f64;
    s.region_labels = fmri.get_i64("region_labels");
    for (int64_t m : fmri.get_i64("signal_mask"))
        s.signal_mask.push_back(static_cast<uint8_t>(m));
    Container caps = Container::load(dir + "/captions.bin");
    const auto& cape = caps.get("captions");
    int64_t slots = cape.shape[1];
    for (int64_t i = 0; i < s.n_windows; ++i) {
        std::vector<int64_t> c(cape.i64.begin() + i * slots,
                               cape.i64.begin() + (i + 1) * slots);
        s.clips[static_cast<size_t>(i)].caption_tokens = c;
        s.captions.push_back(std::move(c));
    }
    s.scene_ids = caps.get_i64("scene_ids");
    s.motion_ids = caps.get_i64("motion_ids");
    return s;
}

}  // namespace neurovid
