#include "neurovid/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>

#include "neurovid/container.hpp"
#include "neurovid/contrastive.hpp"
#include "neurovid/eval.hpp"
#include "neurovid/stats.hpp"

namespace fs = std::filesystem;

namespace neurovid {

namespace {

// fixed seeds for the frozen text/image stand-ins; shared by every run so
// the embedding space itself is not part of the experiment
constexpr uint64_t kTextSeed = 0x517;
constexpr uint64_t kImageSeed = 0x912;
constexpr uint64_t kCondTextSeed = 0xCAFE;

std::string fmt(double v) {
    char buf[40];
    snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

int64_t to_i64(const std::string& k, const std::string& v) {
    try {
        size_t pos = 0;
        int64_t r = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + k + "': not an integer: " + v);
    }
}

double to_f64(const std::string& k, const std::string& v) {
    try {
        size_t pos = 0;
        double r = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + k + "': not a number: " + v);
    }
}

}  // namespace

std::vector<std::pair<std::string, std::string>> RunConfig::to_kv() const {
    std::vector<std::pair<std::string, std::string>> kv;
    auto i = [&](const char* k, int64_t v) { kv.emplace_back(k, std::to_string(v)); };
    auto d = [&](const char* k, double v) { kv.emplace_back(k, fmt(v)); };
    auto s = [&](const char* k, const std::string& v) { kv.emplace_back(k, v); };
    i("train_windows", train_windows);
    i("test_windows", test_windows);
    i("voxels", voxels);
    i("height", height);
    i("width", width);
    i("frames_per_window", frames_per_window);
    i("fps", fps);
    d("tr_seconds", tr_seconds);
    i("repeats", repeats);
    d("noise_sigma", noise_sigma);
    d("hrf_peak", hrf_peak);
    i("regions", regions);
    s("signal_layout", signal_layout);
    i("catalog_size", catalog_size);
    i("motion_classes", motion_classes);
    i("patch_size", patch_size);
    i("embed_dim", embed_dim);
    i("depth", depth);
    i("heads", heads);
    i("decoder_dim", decoder_dim);
    i("decoder_depth", decoder_depth);
    d("mask_ratio", mask_ratio);
    i("window", window);
    i("latent_rows", latent_rows);
    i("cond_dim", cond_dim);
    d("dropout", dropout);
    s("contrastive", contrastive);
    d("clip_eps", clip_eps);
    i("clip_symmetric", clip_symmetric);
    i("clip_normalize", clip_normalize);
    d("sparsify_frac", sparsify_frac);
    i("caption_augment", caption_augment);
    i("crop_augment", crop_augment);
    i("pretrain_steps", pretrain_steps);
    d("pretrain_lr", pretrain_lr);
    i("pretrain_batch", pretrain_batch);
    i("contrastive_steps", contrastive_steps);
    d("contrastive_lr", contrastive_lr);
    i("contrastive_batch", contrastive_batch);
    i("traingen_steps", traingen_steps);
    d("traingen_lr", traingen_lr);
    i("traingen_batch", traingen_batch);
    i("cotrain_steps", cotrain_steps);
    d("cotrain_lr", cotrain_lr);
    i("cotrain_batch", cotrain_batch);
    d("cond_drop_prob", cond_drop_prob);
    i("timesteps", timesteps);
    d("beta_start", beta_start);
    d("beta_end", beta_end);
    i("gen_model_dim", gen_model_dim);
    i("gen_depth", gen_depth);
    i("gen_heads", gen_heads);
    s("guidance", guidance);
    d("guidance_scale", guidance_scale);
    i("ddim_steps", ddim_steps);
    i("nway_trials", nway_trials);
    i("eval_k", eval_k);
    i("ablate_seeds", ablate_seeds);
    s("ablate_axes", ablate_axes);
    i("seed", (int64_t)seed);
    return kv;
}

void RunConfig::apply(
    const std::vector<std::pair<std::string, std::string>>& kv) {
    std::map<std::string, std::function<void(const std::string&, const std::string&)>> set;
    auto i = [&](const char* k, int64_t* p) {
        set[k] = [p](const std::string& key, const std::string& v) { *p = to_i64(key, v); };
    };
    auto d = [&](const char* k, double* p) {
        set[k] = [p](const std::string& key, const std::string& v) { *p = to_f64(key, v); };
    };
    auto s = [&](const char* k, std::string* p) {
        set[k] = [p](const std::string&, const std::string& v) { *p = v; };
    };
    i("train_windows", &train_windows);
    i("test_windows", &test_windows);
    i("voxels", &voxels);
    i("height", &height);
    i("width", &width);
    i("frames_per_window", &frames_per_window);
    i("fps", &fps);
    d("tr_seconds", &tr_seconds);
    i("repeats", &repeats);
    d("noise_sigma", &noise_sigma);
    d("hrf_peak", &hrf_peak);
    i("regions", &regions);
    s("signal_layout", &signal_layout);
    i("catalog_size", &catalog_size);
    i("motion_classes", &motion_classes);
    i("patch_size", &patch_size);
    i("embed_dim", &embed_dim);
    i("depth", &depth);
    i("heads", &heads);
    i("decoder_dim", &decoder_dim);
    i("decoder_depth", &decoder_depth);
    d("mask_ratio", &mask_ratio);
    i("window", &window);
    i("latent_rows", &latent_rows);
    i("cond_dim", &cond_dim);
    d("dropout", &dropout);
    s("contrastive", &contrastive);
    d("clip_eps", &clip_eps);
    i("clip_symmetric", &clip_symmetric);
    i("clip_normalize", &clip_normalize);
    d("sparsify_frac", &sparsify_frac);
    i("caption_augment", &caption_augment);
    i("crop_augment", &crop_augment);
    i("pretrain_steps", &pretrain_steps);
    d("pretrain_lr", &pretrain_lr);
    i("pretrain_batch", &pretrain_batch);
    i("contrastive_steps", &contrastive_steps);
    d("contrastive_lr", &contrastive_lr);
    i("contrastive_batch", &contrastive_batch);
    i("traingen_steps", &traingen_steps);
    d("traingen_lr", &traingen_lr);
    i("traingen_batch", &traingen_batch);
    i("cotrain_steps", &cotrain_steps);
    d("cotrain_lr", &cotrain_lr);
    i("cotrain_batch", &cotrain_batch);
    d("cond_drop_prob", &cond_drop_prob);
    i("timesteps", &timesteps);
    d("beta_start", &beta_start);
    d("beta_end", &beta_end);
    i("gen_model_dim", &gen_model_dim);
    i("gen_depth", &gen_depth);
    i("gen_heads", &gen_heads);
    s("guidance", &guidance);
    d("guidance_scale", &guidance_scale);
    i("ddim_steps", &ddim_steps);
    i("nway_trials", &nway_trials);
    i("eval_k", &eval_k);
    i("ablate_seeds", &ablate_seeds);
    s("ablate_axes", &ablate_axes);
    set["seed"] = [this](const std::string& key, const std::string& v) {
        seed = (uint64_t)to_i64(key, v);
    };
    for (const auto& [k, v] : kv) {
        auto it = set.find(k);
        if (it == set.end()) throw ConfigError("unknown config key: " + k);
        it->second(k, v);
    }
    validate();
}

RunConfig RunConfig::from_file(const std::string& path) {
    if (!fs::exists(path)) throw ConfigError("config file not found: " + path);
    RunConfig cfg;
    cfg.apply(read_kv_file(path));
    return cfg;
}

void RunConfig::validate() const {
    if (window < 1 || window > 3)
        throw ConfigError("window must be 1, 2 or 3");
    if (contrastive != "full" && contrastive != "text" &&
        contrastive != "image" && contrastive != "off")
        throw ConfigError("contrastive must be full|text|image|off");
    if (guidance != "adversarial" && guidance != "classifier-free")
        throw ConfigError("guidance must be adversarial|classifier-free");
    if (height % 2 || width % 2 || height < 12 || width < 12)
        throw ConfigError("height/width must be even and >= 12");
    if (mask_ratio <= 0.0 || mask_ratio >= 1.0)
        throw ConfigError("mask_ratio must lie in (0, 1)");
    if (clip_eps <= 0.0) throw ConfigError("clip_eps must be positive");
    if (guidance_scale < 0.0) throw ConfigError("guidance_scale must be >= 0");
    if (ddim_steps < 1 || ddim_steps > timesteps)
        throw ConfigError("ddim_steps must lie in [1, timesteps]");
    if (train_windows < 4 || test_windows < 4)
        throw ConfigError("need at least 4 windows per split");
    if (embed_dim % heads || gen_model_dim % gen_heads)
        throw ConfigError("embedding dims must divide by head counts");
    for (auto [k, v] : std::initializer_list<std::pair<const char*, int64_t>>{
             {"voxels", voxels},
             {"patch_size", patch_size},
             {"depth", depth},
             {"pretrain_steps", pretrain_steps},
             {"contrastive_steps", contrastive_steps},
             {"traingen_steps", traingen_steps},
             {"cotrain_steps", cotrain_steps},
             {"timesteps", timesteps},
             {"nway_trials", nway_trials},
             {"ablate_seeds", ablate_seeds}})
        if (v < 1) throw ConfigError(std::string(k) + " must be positive");
}

std::string RunConfig::hash() const {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& [k, v] : to_kv())
        for (char c : k + "=" + v + "\n") {
            h ^= (uint8_t)c;
            h *= 0x100000001b3ULL;
        }
    char buf[24];
    snprintf(buf, sizeof buf, "%016llx", (unsigned long long)h);
    return buf;
}

DatasetConfig RunConfig::dataset_config() const {
    DatasetConfig d;
    d.train_windows = train_windows;
    d.test_windows = test_windows;
    d.voxels = voxels;
    d.frames_per_window = frames_per_window;
    d.fps = fps;
    d.tr_seconds = tr_seconds;
    d.height = height;
    d.width = width;
    d.repeats = repeats;
    d.noise_sigma = noise_sigma;
    d.hrf_peak = hrf_peak;
    d.regions = regions;
    d.signal_layout = signal_layout;
    d.catalog_size = catalog_size;
    d.motion_classes = motion_classes;
    d.seed = seed;
    return d;
}

EncoderConfig RunConfig::encoder_config(int64_t roi_voxels) const {
    EncoderConfig e;
    e.voxels = roi_voxels;
    e.patch_size = patch_size;
    e.embed_dim = embed_dim;
    e.depth = depth;
    e.heads = heads;
    e.decoder_dim = decoder_dim;
    e.decoder_depth = decoder_depth;
    e.mask_ratio = mask_ratio;
    e.window = window;
    e.latent_channels = latent_rows;
    e.cond_dim = cond_dim;
    e.dropout = dropout;
    e.validate();
    return e;
}

DenoiserConfig RunConfig::denoiser_config() const {
    DenoiserConfig g;
    g.frames = frames_per_window;
    g.channels = 4;
    g.latent_h = height / 2;
    g.latent_w = width / 2;
    g.model_dim = gen_model_dim;
    g.heads = gen_heads;
    g.depth = gen_depth;
    g.cond_rows = latent_rows;
    g.cond_dim = cond_dim;
    g.max_timesteps = timesteps;
    return g;
}

// ---------------------------------------------------------------------------

const std::vector<std::string>& Pipeline::stage_names() {
    static const std::vector<std::string> names = {
        "gen-data", "pretrain", "contrastive", "train-gen",
        "cotrain",  "sample",   "evaluate",    "interpret"};
    return names;
}

Pipeline::Pipeline(const RunConfig& cfg, std::string run_dir)
    : cfg_(cfg), dir_(std::move(run_dir)) {
    cfg_.validate();
    fs::create_directories(dir_);
    std::string manifest = dir_ + "/manifest.txt";
    if (fs::exists(manifest)) {
        for (const auto& [k, v] : read_kv_file(manifest))
            if (k == "config_hash" && v != cfg_.hash())
                throw ConfigError("run directory " + dir_ +
                                  " was created with a different config "
                                  "(hash " + v + " != " + cfg_.hash() + ")");
    } else {
        write_kv_file(manifest, {{"config_hash", cfg_.hash()}});
        write_kv_file(dir_ + "/config.resolved.txt", cfg_.to_kv());
    }
}

bool Pipeline::stage_done(const std::string& stage) const {
    for (const auto& [k, v] : read_kv_file(dir_ + "/manifest.txt"))
        if (k == stage + ".done" && v == "1") return true;
    return false;
}

void Pipeline::check_prereqs(const std::string& stage) const {
    auto need = [&](const std::string& pre) {
        if (!stage_done(pre))
            throw PrereqError("stage '" + stage + "' requires completed stage '" +
                              pre + "'");
    };
    if (stage == "pretrain" || stage == "train-gen") need("gen-data");
    if (stage == "contrastive") need("pretrain");
    if (stage == "cotrain") {
        need("train-gen");
        if (cfg_.contrastive == "off")
            need("pretrain");
        else
            need("contrastive");
    }
    if (stage == "sample" || stage == "interpret") need("cotrain");
    if (stage == "evaluate") need("sample");
}

void Pipeline::mark_done(const std::string& stage, double seconds,
                         const std::vector<std::string>& artifacts) {
    auto kv = read_kv_file(dir_ + "/manifest.txt");
    kv.emplace_back(stage + ".done", "1");
    kv.emplace_back(stage + ".seconds", fmt(seconds));
    std::string joined;
    for (const auto& a : artifacts) joined += (joined.empty() ? "" : ";") + a;
    kv.emplace_back(stage + ".artifacts", joined);
    write_kv_file(dir_ + "/manifest.txt", kv);
}

void Pipeline::run_stage(const std::string& stage) {
    const auto& names = stage_names();
    if (std::find(names.begin(), names.end(), stage) == names.end())
        throw ConfigError("unknown stage: " + stage);
    if (stage_done(stage)) return;  // idempotent
    if (stage == "contrastive" && cfg_.contrastive == "off")
        throw ConfigError("contrastive stage disabled (contrastive=off)");
    check_prereqs(stage);
    auto t0 = std::chrono::steady_clock::now();
    std::vector<std::string> artifacts;
    if (stage == "gen-data") stage_gen_data();
    else if (stage == "pretrain") stage_pretrain();
    else if (stage == "contrastive") stage_contrastive();
    else if (stage == "train-gen") stage_train_gen();
    else if (stage == "cotrain") stage_cotrain();
    else if (stage == "sample") stage_sample();
    else if (stage == "evaluate") stage_evaluate();
    else if (stage == "interpret") stage_interpret();
    double secs = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
    static const std::map<std::string, std::vector<std::string>> arts = {
        {"gen-data", {"data/train", "data/test"}},
        {"pretrain", {"encoder_pretrain.nct", "pretrain_metrics.csv"}},
        {"contrastive", {"encoder_contrastive.nct", "contrastive_metrics.csv"}},
        {"train-gen", {"gen_traingen.nct", "traingen_metrics.csv"}},
        {"cotrain",
         {"encoder_cotrain.nct", "gen_cotrain.nct", "cotrain_metrics.csv"}},
        {"sample", {"samples.nct"}},
        {"evaluate", {"metrics.csv", "summary.csv", "metrics.svg"}},
        {"interpret", {"attention csv/svg per stage and layer"}},
    };
    mark_done(stage, secs, arts.at(stage));
}

void Pipeline::run_all() {
    for (const auto& s : stage_names()) {
        if (s == "contrastive" && cfg_.contrastive == "off") continue;
        run_stage(s);
    }
}

// ---------------------------------------------------------------------------

SplitData Pipeline::load_train() const { return load_split(dir_ + "/data/train"); }
SplitData Pipeline::load_test() const { return load_split(dir_ + "/data/test"); }

Tensor Pipeline::windows_tensor(const SplitData& split) const {
    int64_t n = split.n_windows, w = cfg_.window, v = split.roi_voxels;
    // the response peaks hrf_peak seconds after the stimulus, so a window's
    // scans are taken with that lag
    int64_t lag = (int64_t)std::llround(cfg_.hrf_peak / cfg_.tr_seconds);
    if (split.t_scans < n + w - 1 + lag)
        throw NumericError("scan run too short for the configured window");
    std::vector<double> buf((size_t)(n * w * v));
    for (int64_t i = 0; i < n; ++i)
        for (int64_t f = 0; f < w; ++f)
            std::copy_n(split.fmri.begin() + (i + f + lag) * v, v,
                        buf.begin() + (i * w + f) * v);
    return Tensor::from_data({n, w, v}, std::move(buf));
}

void Pipeline::stage_gen_data() {
    Dataset ds = generate_dataset(cfg_.dataset_config());
    save_split(ds.train, ds.cfg, dir_ + "/data/train");
    save_split(ds.test, ds.cfg, dir_ + "/data/test");
}

namespace {

// rows of a "metric,value" CSV
std::vector<std::pair<std::string, double>> read_summary_csv(
    const std::string& path) {
    std::ifstream in(path);
    if (!in) throw NumericError("cannot read " + path);
    std::vector<std::pair<std::string, double>> out;
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        auto pos = line.find(',');
        if (pos == std::string::npos) continue;
        out.emplace_back(line.substr(0, pos),
                         std::stod(line.substr(pos + 1)));
    }
    return out;
}

void require_finite(double loss, const std::string& stage, int64_t step) {
    if (!std::isfinite(loss))
        throw NumericError(stage + ": non-finite loss at step " +
                           std::to_string(step));
}

}  // namespace

void Pipeline::stage_pretrain() {
    SplitData train = load_train();
    FmriEncoder enc(cfg_.encoder_config(train.roi_voxels), cfg_.seed ^ 0xA1);
    Adam opt(enc.params().trainable(), cfg_.pretrain_lr);
    Rng rng(cfg_.seed ^ 0xA1A1);
    int64_t v = train.roi_voxels;
    std::vector<std::string> rows;
    for (int64_t step = 0; step < cfg_.pretrain_steps; ++step) {
        std::vector<double> buf((size_t)(cfg_.pretrain_batch * v));
        for (int64_t i = 0; i < cfg_.pretrain_batch; ++i) {
            int64_t scan = (int64_t)rng.uniform_int((uint64_t)train.t_scans);
            std::copy_n(train.fmri.begin() + scan * v, v, buf.begin() + i * v);
        }
        Tensor batch = Tensor::from_data({cfg_.pretrain_batch, v}, std::move(buf));
        auto res = enc.mbm_step(batch, rng);
        double loss = res.loss.item();
        require_finite(loss, "pretrain", step);
        opt.zero_grad();
        res.loss.backward();
        opt.step();
        rows.push_back(std::to_string(step) + "," + fmt(loss));
    }
    write_csv(dir_ + "/pretrain_metrics.csv", "step,loss", rows);
    enc.save_checkpoint(dir_ + "/encoder_pretrain.nct", "pretrain", cfg_.hash());
}

void Pipeline::stage_contrastive() {
    SplitData train = load_train();
    SplitData test = load_test();
    FmriEncoder enc(cfg_.encoder_config(train.roi_voxels), cfg_.seed ^ 0xA1);
    enc.load_checkpoint(dir_ + "/encoder_pretrain.nct");

    ContrastiveMode mode = ContrastiveMode::full;
    if (cfg_.contrastive == "text") mode = ContrastiveMode::text_only;
    if (cfg_.contrastive == "image") mode = ContrastiveMode::image_only;
    FrozenEmbedder text_emb =
        FrozenEmbedder::text(kCaptionVocab, cfg_.embed_dim, kTextSeed);
    FrozenEmbedder image_emb =
        FrozenEmbedder::image(4, cfg_.embed_dim, kImageSeed);

    Tensor train_windows = windows_tensor(train);
    Tensor test_windows = windows_tensor(test);
    int64_t v = train.roi_voxels, w = cfg_.window;

    // held-out retrieval targets (no augmentation)
    Tensor t_text = text_emb.embed_captions(test.captions);
    Tensor t_img = image_emb.embed_clips(test.clips);
    Tensor targets;
    if (mode == ContrastiveMode::text_only) targets = t_text;
    else if (mode == ContrastiveMode::image_only) targets = t_img;
    else targets = l2_normalize_rows(scale(add(t_text, t_img), 0.5));

    Adam opt(enc.params().trainable(), cfg_.contrastive_lr);
    Rng rng(cfg_.seed ^ 0xB2B2);
    Rng drop_rng = rng.fork();
    std::vector<std::string> rows;
    std::vector<std::vector<int64_t>> batches;
    size_t batch_at = 0;
    double retrieval = 0.0;
    for (int64_t step = 0; step < cfg_.contrastive_steps; ++step) {
        if (batch_at >= batches.size()) {
            batches = make_contrastive_batches(train.scene_ids,
                                               cfg_.contrastive_batch, rng);
            batch_at = 0;
        }
        const auto& idx = batches[batch_at++];
        int64_t bs = (int64_t)idx.size();
        Tensor fwin = gather(train_windows, 0, idx);
        if (cfg_.sparsify_frac > 0)
            fwin = sparsify_voxels(fwin, cfg_.sparsify_frac, rng);
        std::vector<std::vector<int64_t>> caps;
        std::vector<VideoClip> clips;
        for (int64_t j : idx) {
            caps.push_back(cfg_.caption_augment
                               ? augment_caption(train.captions[j], rng)
                               : train.captions[j]);
            VideoClip c = train.clips[j];
            if (cfg_.crop_augment && rng.uniform() < 0.5 && c.height > 4 &&
                c.width > 4) {
                // random 2-pixel-margin crop
                int64_t r0 = (int64_t)rng.uniform_int(3);
                int64_t c0 = (int64_t)rng.uniform_int(3);
                VideoClip cc = c;
                cc.height = c.height - 2;
                cc.width = c.width - 2;
                cc.pixels.assign((size_t)(c.frames * cc.height * cc.width), 0.0);
                for (int64_t f = 0; f < c.frames; ++f)
                    for (int64_t r = 0; r < cc.height; ++r)
                        for (int64_t cl = 0; cl < cc.width; ++cl)
                            cc.pixels[(f * cc.height + r) * cc.width + cl] =
                                c.pixels[(f * c.height + r + r0) * c.width + cl +
                                         c0];
                c = std::move(cc);
            }
            clips.push_back(std::move(c));
        }
        Tensor pooled =
            enc.project(enc.encode_tokens(fwin, nullptr,
                                          cfg_.dropout > 0 ? &drop_rng : nullptr))
                .pooled;
        Tensor loss = trimodal_loss(pooled, text_emb.embed_captions(caps),
                                    image_emb.embed_clips(clips), cfg_.clip_eps,
                                    mode, cfg_.clip_normalize != 0,
                                    cfg_.clip_symmetric != 0);
        double lv = loss.item();
        require_finite(lv, "contrastive", step);
        opt.zero_grad();
        loss.backward();
        opt.step();
        if (step % 25 == 0 || step == cfg_.contrastive_steps - 1) {
            Tensor q = enc.forward(test_windows).pooled;
            retrieval = retrieval_top1(l2_normalize_rows(q), targets);
        }
        (void)w;
        (void)bs;
        rows.push_back(std::to_string(step) + "," + fmt(lv) + "," +
                       fmt(retrieval));
    }
    write_csv(dir_ + "/contrastive_metrics.csv", "step,loss,retrieval@1", rows);
    enc.save_checkpoint(dir_ + "/encoder_contrastive.nct", "contrastive",
                        cfg_.hash());
    (void)v;
}

namespace {

// batch of pixel clips -> [n x F x 4 x h/2 x w/2] latents
Tensor clip_latents(const std::vector<VideoClip>& clips,
                    const std::vector<int64_t>& idx) {
    std::vector<double> buf;
    Shape s;
    for (int64_t j : idx) {
        const VideoClip& c = clips[j];
        auto z = LatentMap::encode_raw(c.pixels, c.frames, c.height, c.width);
        if (s.empty())
            s = {(int64_t)idx.size(), c.frames, 4, c.height / 2, c.width / 2};
        buf.insert(buf.end(), z.begin(), z.end());
    }
    return Tensor::from_data(s, std::move(buf));
}

// zero out the conditioning rows of dropped samples (null condition)
Tensor drop_cond(const Tensor& cond, double prob, Rng& rng) {
    if (prob <= 0) return cond;
    const Shape& s = cond.shape();
    std::vector<double> mask(cond.numel(), 1.0);
    int64_t per = s[1] * s[2];
    for (int64_t i = 0; i < s[0]; ++i)
        if (rng.uniform() < prob)
            std::fill_n(mask.begin() + i * per, per, 0.0);
    return mul(cond, Tensor::from_data(s, std::move(mask)));
}

}  // namespace

void Pipeline::stage_train_gen() {
    SplitData train = load_train();
    VideoDenoiser gen(cfg_.denoiser_config(), cfg_.seed ^ 0xC3);
    NoiseSchedule sched =
        NoiseSchedule::linear(cfg_.timesteps, cfg_.beta_start, cfg_.beta_end);
    FrozenEmbedder cond_emb = FrozenEmbedder::text(
        kCaptionVocab, cfg_.latent_rows * cfg_.cond_dim, kCondTextSeed);
    Adam opt(gen.params().trainable(), cfg_.traingen_lr);
    Rng rng(cfg_.seed ^ 0xC3C3);
    std::vector<std::string> rows;
    for (int64_t step = 0; step < cfg_.traingen_steps; ++step) {
        std::vector<int64_t> idx(cfg_.traingen_batch);
        for (auto& j : idx)
            j = (int64_t)rng.uniform_int((uint64_t)train.n_windows);
        Tensor z0 = clip_latents(train.clips, idx);
        std::vector<std::vector<int64_t>> caps;
        for (int64_t j : idx) caps.push_back(train.captions[j]);
        Tensor cond = reshape(cond_emb.embed_captions(caps),
                              {cfg_.traingen_batch, cfg_.latent_rows,
                               cfg_.cond_dim});
        cond = drop_cond(cond, cfg_.cond_drop_prob, rng);
        int64_t t = 1 + (int64_t)rng.uniform_int((uint64_t)cfg_.timesteps);
        Tensor noise = Tensor::randn(z0.shape(), rng);
        Tensor zt = q_sample(z0, t, sched, noise);
        Tensor pred = gen.forward(
            zt, std::vector<int64_t>((size_t)cfg_.traingen_batch, t), cond);
        Tensor loss = mse_loss(pred, noise);
        double lv = loss.item();
        require_finite(lv, "train-gen", step);
        opt.zero_grad();
        loss.backward();
        opt.step();
        rows.push_back(std::to_string(step) + "," + fmt(lv));
    }
    write_csv(dir_ + "/traingen_metrics.csv", "step,loss", rows);
    gen.save_checkpoint(dir_ + "/gen_traingen.nct", "train-gen", cfg_.hash());
}

void Pipeline::stage_cotrain() {
    SplitData train = load_train();
    FmriEncoder enc(cfg_.encoder_config(train.roi_voxels), cfg_.seed ^ 0xA1);
    enc.load_checkpoint(cfg_.contrastive == "off"
                            ? dir_ + "/encoder_pretrain.nct"
                            : dir_ + "/encoder_contrastive.nct");
    VideoDenoiser gen(cfg_.denoiser_config(), cfg_.seed ^ 0xC3);
    gen.load_checkpoint(dir_ + "/gen_traingen.nct");
    NoiseSchedule sched =
        NoiseSchedule::linear(cfg_.timesteps, cfg_.beta_start, cfg_.beta_end);

    // encoder fully trainable; generator restricted to its attention heads
    gen.params().set_all_trainable(false);
    gen.params().set_trainable(gen.attention_prefixes(), true);
    std::vector<Tensor> trainables = enc.params().trainable();
    for (auto& t : gen.params().trainable()) trainables.push_back(t);
    Adam opt(trainables, cfg_.cotrain_lr);

    Tensor train_windows = windows_tensor(train);
    Rng rng(cfg_.seed ^ 0xD4D4);
    std::vector<std::string> rows;
    for (int64_t step = 0; step < cfg_.cotrain_steps; ++step) {
        std::vector<int64_t> idx(cfg_.cotrain_batch);
        for (auto& j : idx)
            j = (int64_t)rng.uniform_int((uint64_t)train.n_windows);
        Tensor fwin = gather(train_windows, 0, idx);
        if (cfg_.sparsify_frac > 0)
            fwin = sparsify_voxels(fwin, cfg_.sparsify_frac, rng);
        Tensor cond = enc.forward(fwin).unpooled;
        cond = drop_cond(cond, cfg_.cond_drop_prob, rng);
        Tensor z0 = clip_latents(train.clips, idx);
        int64_t t = 1 + (int64_t)rng.uniform_int((uint64_t)cfg_.timesteps);
        Tensor noise = Tensor::randn(z0.shape(), rng);
        Tensor zt = q_sample(z0, t, sched, noise);
        Tensor pred = gen.forward(
            zt, std::vector<int64_t>((size_t)cfg_.cotrain_batch, t), cond);
        Tensor loss = mse_loss(pred, noise);
        double lv = loss.item();
        require_finite(lv, "cotrain", step);
        opt.zero_grad();
        loss.backward();
        opt.step();
        rows.push_back(std::to_string(step) + "," + fmt(lv));
    }
    write_csv(dir_ + "/cotrain_metrics.csv", "step,loss", rows);
    enc.save_checkpoint(dir_ + "/encoder_cotrain.nct", "cotrain", cfg_.hash());
    gen.save_checkpoint(dir_ + "/gen_cotrain.nct", "cotrain", cfg_.hash());
}

void Pipeline::stage_sample() {
    SplitData test = load_test();
    FmriEncoder enc(cfg_.encoder_config(test.roi_voxels), cfg_.seed ^ 0xA1);
    enc.load_checkpoint(dir_ + "/encoder_cotrain.nct");
    VideoDenoiser gen(cfg_.denoiser_config(), cfg_.seed ^ 0xC3);
    gen.load_checkpoint(dir_ + "/gen_cotrain.nct");
    NoiseSchedule sched =
        NoiseSchedule::linear(cfg_.timesteps, cfg_.beta_start, cfg_.beta_end);
    Tensor windows = windows_tensor(test);
    int64_t n = test.n_windows;

    GuidanceSpec spec;
    spec.scale = scale_override.value_or(cfg_.guidance_scale);
    spec.positive = enc.forward(windows).unpooled;
    std::string negative = negative_override.value_or(
        cfg_.guidance == "adversarial" ? "avg-fmri" : "null");
    if (negative == "avg-fmri") {
        Tensor avg = enc.forward(average_fmri(windows)).unpooled;  // [1,l,d_c]
        spec.negative = gather(avg, 0, std::vector<int64_t>((size_t)n, 0));
    } else if (negative != "null") {
        throw ConfigError("negative must be avg-fmri|null");
    }
    int64_t steps = steps_override.value_or(cfg_.ddim_steps);
    if (steps < 1 || steps > cfg_.timesteps)
        throw ConfigError("sampler steps out of range");
    Tensor z = ddim_sample(gen, sched, spec, n, steps, cfg_.seed ^ 0xE5);

    int64_t fpw = cfg_.frames_per_window;
    std::vector<double> px;
    px.reserve((size_t)(n * fpw * cfg_.height * cfg_.width));
    int64_t per = fpw * 4 * (cfg_.height / 2) * (cfg_.width / 2);
    for (int64_t i = 0; i < n; ++i) {
        std::vector<double> zi(z.data().begin() + i * per,
                               z.data().begin() + (i + 1) * per);
        auto pix = LatentMap::decode(zi, fpw, cfg_.height, cfg_.width);
        for (auto& v : pix) v = std::clamp(v, 0.0, 1.0);
        px.insert(px.end(), pix.begin(), pix.end());
    }
    Container out;
    out.put_f64("samples", {n, fpw, cfg_.height, cfg_.width}, std::move(px));
    out.put_string("negative", negative);
    out.put_f64("guidance_scale", {1}, {spec.scale});
    out.save(dir_ + "/samples.nct");
}

void Pipeline::stage_evaluate() {
    SplitData test = load_test();
    Container smp = Container::load(dir_ + "/samples.nct");
    const auto& samples = smp.get("samples");
    int64_t n = samples.shape[0], fpw = samples.shape[1];
    int64_t h = samples.shape[2], w = samples.shape[3];
    if (n != test.n_windows)
        throw NumericError("sample count does not match the test split");
    DatasetConfig dcfg = cfg_.dataset_config();
    ClassifierStub frame_cls = train_frame_classifier(dcfg);
    ClassifierStub video_cls = train_video_classifier(dcfg);
    FrozenEmbedder image_emb =
        FrozenEmbedder::image(4, cfg_.embed_dim, kImageSeed);

    auto sample_clip = [&](int64_t i) {
        VideoClip c;
        c.frames = fpw;
        c.height = h;
        c.width = w;
        c.fps = cfg_.fps;
        c.pixels.assign(samples.f64.begin() + i * fpw * h * w,
                        samples.f64.begin() + (i + 1) * fpw * h * w);
        return c;
    };
    auto window_probs = [&](const VideoClip& c) {
        std::vector<double> acc((size_t)frame_cls.classes, 0.0);
        for (int64_t f = 0; f < c.frames; ++f) {
            std::vector<double> frame(c.pixels.begin() + f * h * w,
                                      c.pixels.begin() + (f + 1) * h * w);
            auto p = frame_cls.predict(frame_features(frame, h, w));
            for (size_t k = 0; k < p.size(); ++k) acc[k] += p[k];
        }
        for (auto& v : acc) v /= c.frames;
        return acc;
    };

    int64_t video_n = std::min<int64_t>(50, video_cls.classes);
    std::vector<std::string> rows;
    std::vector<double> ssims, f2, f50, v2, v50;
    std::vector<VideoClip> recon, gts;
    for (int64_t i = 0; i < n; ++i) {
        VideoClip pred = sample_clip(i);
        const VideoClip& gt = test.clips[i];
        double s = ssim_clip(pred, gt);
        auto gt_p = window_probs(gt);
        auto pr_p = window_probs(pred);
        uint64_t es = cfg_.seed ^ 0xF6F6 ^ (uint64_t)i;
        double a2 = nway_topk(gt_p, pr_p, 2, cfg_.eval_k, cfg_.nway_trials, es);
        double a50 =
            nway_topk(gt_p, pr_p, 50, cfg_.eval_k, cfg_.nway_trials, es ^ 1);
        auto gt_v = video_cls.predict(video_features(gt));
        auto pr_v = video_cls.predict(video_features(pred));
        double b2 =
            nway_topk(gt_v, pr_v, 2, cfg_.eval_k, cfg_.nway_trials, es ^ 2);
        double b50 = nway_topk(gt_v, pr_v, video_n, cfg_.eval_k,
                               cfg_.nway_trials, es ^ 3);
        rows.push_back(std::to_string(i) + "," + fmt(s) + "," + fmt(a2) + "," +
                       fmt(a50) + "," + fmt(b2) + "," + fmt(b50));
        ssims.push_back(s);
        f2.push_back(a2);
        f50.push_back(a50);
        v2.push_back(b2);
        v50.push_back(b50);
        recon.push_back(std::move(pred));
        gts.push_back(gt);
    }
    write_csv(dir_ + "/metrics.csv",
              "item,ssim,2way_top1,50way_top1,video_2way,video_50way", rows);

    // retrieval-style 2-way score: does the reconstruction sit closer (in the
    // frozen image-embedding space) to its own stimulus than to a distractor?
    Tensor er = image_emb.embed_clips(recon);
    Tensor eg = image_emb.embed_clips(gts);
    int64_t d = er.shape()[1];
    double hits = 0;
    for (int64_t i = 0; i < n; ++i) {
        int64_t j = (i + n / 2) % n;
        if (test.scene_ids[j] == test.scene_ids[i]) j = (j + 1) % n;
        double own = 0, other = 0;
        for (int64_t k = 0; k < d; ++k) {
            own += er.data()[i * d + k] * eg.data()[i * d + k];
            other += er.data()[i * d + k] * eg.data()[j * d + k];
        }
        hits += own > other ? 1.0 : (own == other ? 0.5 : 0.0);
    }
    double recon_2way = hits / n;

    std::vector<std::pair<std::string, double>> summary = {
        {"ssim", mean_of(ssims)},      {"2way_top1", mean_of(f2)},
        {"50way_top1", mean_of(f50)},  {"video_2way", mean_of(v2)},
        {"video_50way", mean_of(v50)}, {"recon_2way", recon_2way}};
    std::vector<std::string> srows;
    std::vector<std::string> labels;
    std::vector<double> values;
    for (const auto& [k, v] : summary) {
        srows.push_back(k + "," + fmt(v));
        labels.push_back(k);
        values.push_back(v);
    }
    write_csv(dir_ + "/summary.csv", "metric,value", srows);
    write_bar_svg(dir_ + "/metrics.svg", "test metrics (mean)", labels, values);
}

void Pipeline::stage_interpret() {
    SplitData test = load_test();
    Tensor windows = windows_tensor(test);
    std::vector<int64_t> layers = {0, cfg_.depth / 2, cfg_.depth - 1};
    layers.erase(std::unique(layers.begin(), layers.end()), layers.end());
    for (const std::string& stage : {"pretrain", "contrastive", "cotrain"}) {
        std::string ckpt = dir_ + "/encoder_" + stage + ".nct";
        if (!fs::exists(ckpt)) continue;
        FmriEncoder enc(cfg_.encoder_config(test.roi_voxels), cfg_.seed ^ 0xA1);
        enc.load_checkpoint(ckpt);
        for (int64_t layer : layers) {
            AttentionReport rep = attention_report(
                enc, windows, layer, test.region_labels, cfg_.regions, stage);
            std::vector<std::string> rows;
            std::vector<std::string> labels;
            for (int64_t r = 0; r < cfg_.regions; ++r) {
                rows.push_back(std::to_string(r) + "," +
                               fmt(rep.region_share[r]));
                labels.push_back("region " + std::to_string(r));
            }
            std::string base =
                dir_ + "/attention_" + stage + "_" + std::to_string(layer);
            write_csv(base + ".csv", "region,share", rows);
            write_bar_svg(base + ".svg", "attention share: " + stage +
                                             " layer " + std::to_string(layer),
                          labels, rep.region_share);
        }
    }
}

// ---------------------------------------------------------------------------

void Pipeline::ablate() {
    if (!stage_done("evaluate"))
        throw PrereqError("ablate requires a completed base run (evaluate)");

    std::vector<std::string> axes;
    std::string cur;
    for (char c : cfg_.ablate_axes + ",") {
        if (c == ',') {
            if (!cur.empty()) axes.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    // variant name -> config mutation
    std::vector<std::pair<std::string, std::function<void(RunConfig&)>>> variants;
    variants.emplace_back("full", [](RunConfig&) {});
    for (const auto& axis : axes) {
        if (axis == "window") {
            for (int64_t wv : {1, 3})
                if (wv != cfg_.window)
                    variants.emplace_back(
                        "window" + std::to_string(wv),
                        [wv](RunConfig& c) { c.window = wv; });
        } else if (axis == "contrastive") {
            variants.emplace_back("no-contrastive", [](RunConfig& c) {
                c.contrastive = "off";
            });
        } else if (axis == "guidance") {
            variants.emplace_back("no-adversarial", [](RunConfig& c) {
                c.guidance = "classifier-free";
            });
        } else {
            throw ConfigError("unknown ablation axis: " + axis);
        }
    }

    std::map<std::string, std::vector<double>> scores;
    for (const auto& [name, mutate] : variants) {
        for (int64_t s = 0; s < cfg_.ablate_seeds; ++s) {
            RunConfig sub = cfg_;
            sub.seed = cfg_.seed + (uint64_t)s;
            mutate(sub);
            sub.validate();
            std::string subdir =
                dir_ + "/ablation/" + name + "/s" + std::to_string(s);
            Pipeline p(sub, subdir);
            for (const auto& st : stage_names()) {
                if (st == "interpret") continue;
                if (st == "contrastive" && sub.contrastive == "off") continue;
                p.run_stage(st);
            }
            double val = 0.0;
            bool found = false;
            for (const auto& [k, v] : read_summary_csv(subdir + "/summary.csv"))
                if (k == "recon_2way") {
                    val = v;
                    found = true;
                }
            if (!found)
                throw NumericError("ablation run " + subdir +
                                   " produced no recon_2way score");
            scores[name].push_back(val);
        }
    }

    const auto& full = scores.at("full");
    std::vector<std::string> rows;
    std::vector<std::string> labels;
    std::vector<double> means;
    for (const auto& [name, mutate] : variants) {
        const auto& v = scores.at(name);
        double p = ablation_stats(v, full);
        rows.push_back(name + ",recon_2way," + fmt(mean_of(v)) + "," +
                       fmt(stddev_of(v)) + "," + fmt(p) + "," + p_band(p));
        labels.push_back(name);
        means.push_back(mean_of(v));
    }
    write_csv(dir_ + "/ablation.csv", "variant,metric,mean,std,p,band", rows);
    write_bar_svg(dir_ + "/ablation.svg", "recon_2way by variant", labels,
                  means);
    mark_done("ablate", 0.0, {"ablation.csv", "ablation.svg"});
}

void Pipeline::report() {
    if (!stage_done("evaluate"))
        throw PrereqError("report requires a completed evaluate stage");
    std::vector<std::string> lines;
    lines.push_back("run " + dir_ + " (config " + cfg_.hash() + ")");
    for (const auto& [k, v] : read_summary_csv(dir_ + "/summary.csv"))
        lines.push_back("  " + k + " = " + fmt(v));
    if (fs::exists(dir_ + "/ablation.csv")) {
        lines.push_back("ablation:");
        std::ifstream in(dir_ + "/ablation.csv");
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) lines.push_back("  " + line);
    }
    std::ofstream out(dir_ + "/report.txt");
    for (const auto& l : lines) out << l << "\n";
    mark_done("report", 0.0, {"report.txt"});
}

}  // namespace neurovid
