#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "neurovid/eval.hpp"

using namespace neurovid;

namespace {

std::vector<double> random_image(int64_t h, int64_t w, uint64_t seed) {
    Rng rng(seed);
    std::vector<double> img(h * w);
    for (auto& p : img) p = rng.uniform();
    return img;
}

}  // namespace

TEST_CASE("ssim of an image with itself is exactly one") {
    auto img = random_image(16, 16, 1);
    CHECK(ssim(img, img, 16, 16) == 1.0);
}

TEST_CASE("ssim between constant black and white hits the stability floor") {
    std::vector<double> zeros(16 * 16, 0.0), ones(16 * 16, 1.0);
    double c1 = 0.01 * 0.01;
    double expect = c1 / (1.0 + c1);
    CHECK(std::abs(ssim(zeros, ones, 16, 16) - expect) < 1e-9);
}

TEST_CASE("ssim is symmetric and bounded") {
    auto a = random_image(16, 16, 2);
    auto b = random_image(16, 16, 3);
    double ab = ssim(a, b, 16, 16);
    double ba = ssim(b, a, 16, 16);
    CHECK(std::abs(ab - ba) < 1e-12);
    CHECK(ab <= 1.0);
    CHECK(ab > -1.0);
    CHECK(ab < ssim(a, a, 16, 16));
}

TEST_CASE("ssim respects the dynamic range parameter") {
    auto a = random_image(16, 16, 4);
    auto b = random_image(16, 16, 5);
    std::vector<double> a2(a), b2(b);
    for (auto& p : a2) p *= 255.0;
    for (auto& p : b2) p *= 255.0;
    SsimConfig wide;
    wide.range = 255.0;
    CHECK(std::abs(ssim(a, b, 16, 16) - ssim(a2, b2, 16, 16, wide)) < 1e-12);
}

TEST_CASE("ssim degrades with growing noise") {
    auto a = random_image(16, 16, 6);
    Rng rng(7);
    double prev = 1.0;
    for (double sigma : {0.02, 0.1, 0.4}) {
        std::vector<double> noisy(a);
        Rng r(8);
        for (auto& p : noisy) p += sigma * r.normal();
        double s = ssim(a, noisy, 16, 16);
        CHECK(s < prev);
        prev = s;
    }
}

TEST_CASE("ssim input validation") {
    auto a = random_image(16, 16, 9);
    auto b = random_image(8, 8, 10);
    CHECK_THROWS_AS(ssim(a, b, 16, 16), std::invalid_argument);
    CHECK_THROWS_AS(ssim(b, b, 8, 8), std::invalid_argument);  // below window
}

TEST_CASE("ssim_clip averages frame scores") {
    SyntheticScene sc = make_scene(3);
    VideoClip clip = render_clip(sc, 4, 3, 16, 16);
    CHECK(ssim_clip(clip, clip) == 1.0);
    VideoClip other = render_clip(make_scene(9), 4, 3, 16, 16);
    CHECK(ssim_clip(clip, other) < 1.0);
}

TEST_CASE("nway classification trivial cases") {
    // perfect one-hot agreement always succeeds
    std::vector<double> onehot(20, 0.0);
    onehot[7] = 1.0;
    CHECK(nway_topk(onehot, onehot, 5, 1, 200, 1) == 1.0);

    // k == n means every candidate is accepted
    auto gt = random_image(1, 20, 11);
    auto pred = random_image(1, 20, 12);
    CHECK(nway_topk(gt, pred, 4, 4, 200, 2) == 1.0);

    CHECK_THROWS_AS(nway_topk(gt, pred, 21, 1, 10, 3), std::invalid_argument);
    CHECK_THROWS_AS(nway_topk(gt, pred, 1, 1, 10, 3), std::invalid_argument);
}

TEST_CASE("nway accuracy of a random predictor sits at chance") {
    const int64_t classes = 50;
    auto gt = random_image(1, classes, 21);
    // chance for top-1 of n candidates is 1/n; average many fresh predictors
    for (int64_t n : {2, 5}) {
        double acc = 0.0;
        const int reps = 400;
        for (int r = 0; r < reps; ++r)
            acc += nway_topk(gt, random_image(1, classes, 5000 + r), n, 1,
                             100, 77 + r);
        acc /= reps;
        CHECK(std::abs(acc - 1.0 / double(n)) < 0.04);
    }
}

TEST_CASE("nway accuracy grows with k and shrinks with n") {
    auto gt = random_image(1, 30, 31);
    auto pred = random_image(1, 30, 32);
    double k1 = nway_topk(gt, pred, 10, 1, 400, 5);
    double k3 = nway_topk(gt, pred, 10, 3, 400, 5);
    CHECK(k3 >= k1);
    double n2 = nway_topk(gt, pred, 2, 1, 400, 5);
    double n10 = nway_topk(gt, pred, 10, 1, 400, 5);
    CHECK(n2 >= n10);
    // determinism in the trial seed
    CHECK(nway_topk(gt, pred, 10, 1, 400, 5) == k1);
}

TEST_CASE("ablation stats separate and equal samples") {
    std::vector<double> a = {0.50, 0.52, 0.49, 0.51, 0.50};
    std::vector<double> far = {0.90, 0.91, 0.89, 0.92, 0.90};
    double p_far = ablation_stats(a, far);
    CHECK(p_far < 1e-10);
    CHECK(std::abs(ablation_stats(a, far) - ablation_stats(far, a)) < 1e-12);
    CHECK(ablation_stats(a, a) == 1.0);

    std::vector<double> b = {0.505, 0.515, 0.495, 0.505, 0.51};
    double p_near = ablation_stats(a, b);
    CHECK(p_near > 0.05);

    std::vector<double> one = {0.5};
    CHECK_THROWS_AS(ablation_stats(a, one), std::invalid_argument);
}

TEST_CASE("p bands") {
    CHECK(p_band(0.00001) == "p<0.0001");
    CHECK(p_band(0.005) == "p<0.01");
    CHECK(p_band(0.03) == "p<0.05");
    CHECK(p_band(0.5) == "p>0.05");
}

TEST_CASE("classifier stub learns separable data") {
    // two gaussian blobs in 2-D
    Rng rng(41);
    std::vector<std::vector<double>> x;
    std::vector<int64_t> y;
    for (int i = 0; i < 60; ++i) {
        int64_t c = i % 2;
        double cx = c ? 2.0 : -2.0;
        x.push_back({cx + 0.3 * rng.normal(), 0.3 * rng.normal()});
        y.push_back(c);
    }
    ClassifierStub clf = ClassifierStub::train(x, y, 2, 300, 0.1);
    int correct = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        auto p = clf.predict(x[i]);
        CHECK(p.size() == 2);
        double sum = p[0] + p[1];
        CHECK(std::abs(sum - 1.0) < 1e-9);
        if ((p[1] > p[0]) == (y[i] == 1)) ++correct;
    }
    CHECK(correct >= 58);
}

TEST_CASE("frame and video features are deterministic and sized") {
    SyntheticScene sc = make_scene(6);
    VideoClip clip = render_clip(sc, 6, 3, 16, 16);
    auto f1 = frame_features(
        std::vector<double>(clip.pixels.begin(), clip.pixels.begin() + 256),
        16, 16);
    CHECK(f1.size() == 64);
    auto v1 = video_features(clip);
    auto v2 = video_features(clip);
    CHECK(v1 == v2);
    CHECK(v1.size() > 16);
}

TEST_CASE("trained stubs recognize clean catalog renders") {
    DatasetConfig cfg;
    cfg.catalog_size = 16;
    ClassifierStub fc = train_frame_classifier(cfg);
    CHECK(fc.classes == 16);
    int correct = 0;
    for (int64_t id = 0; id < 16; ++id) {
        VideoClip clip = render_clip(make_scene(id), 1, cfg.fps, cfg.height,
                                     cfg.width);
        auto probs = fc.predict(frame_features(clip.pixels, cfg.height,
                                               cfg.width));
        int64_t best = 0;
        for (int64_t c = 1; c < 16; ++c)
            if (probs[c] > probs[best]) best = c;
        if (best == id) ++correct;
    }
    CHECK(correct >= 13);

    ClassifierStub vc = train_video_classifier(cfg);
    CHECK(vc.classes == cfg.motion_classes);
    int vcorrect = 0, vtotal = 0;
    for (int64_t id = 0; id < 16; ++id) {
        SyntheticScene sc = make_scene(id);
        VideoClip clip = render_clip(sc, cfg.frames_per_window, cfg.fps,
                                     cfg.height, cfg.width);
        auto probs = vc.predict(video_features(clip));
        int64_t best = 0;
        for (int64_t c = 1; c < vc.classes; ++c)
            if (probs[c] > probs[best]) best = c;
        ++vtotal;
        if (best == (int64_t)sc.motion_code) ++vcorrect;
    }
    CHECK(vcorrect >= vtotal / 2);
}

TEST_CASE("attention report rows are normalized and uniform maps match voxel shares") {
    EncoderConfig ecfg;
    ecfg.voxels = 64;
    ecfg.patch_size = 8;
    ecfg.embed_dim = 16;
    ecfg.depth = 2;
    ecfg.heads = 2;
    ecfg.decoder_dim = 8;
    ecfg.decoder_depth = 1;
    ecfg.decoder_heads = 2;
    ecfg.window = 2;
    ecfg.latent_channels = 4;
    ecfg.cond_dim = 8;
    FmriEncoder enc(ecfg, 3);

    Rng rng(4);
    Tensor windows = Tensor::randn({6, 2, 64}, rng);
    std::vector<int64_t> labels(64);
    for (int64_t v = 0; v < 64; ++v) labels[v] = v / 16;  // 4 equal regions

    auto rep = attention_report(enc, windows, 1, labels, 4, "pretrain");
    CHECK(rep.stage == "pretrain");
    CHECK(rep.layer == 1);
    REQUIRE((int64_t)rep.region_share.size() == 4);
    double sum = 0.0;
    for (double s : rep.region_share) {
        CHECK(s >= 0.0);
        sum += s;
    }
    CHECK(std::abs(sum - 1.0) < 1e-9);

    // zeroed query/key projections force uniform attention, whose pushback
    // equals each region's share of the voxels
    for (int64_t l = 0; l < 2; ++l) {
        std::string pre = "enc.block" + std::to_string(l) + ".spat.";
        for (const char* mat : {"q", "k"}) {
            for (const char* part : {".w", ".b"}) {
                auto& p = enc.params().at(pre + mat + part);
                std::fill(p.data().begin(), p.data().end(), 0.0);
            }
        }
    }
    auto uni = attention_report(enc, windows, 0, labels, 4, "pretrain");
    for (double s : uni.region_share) CHECK(std::abs(s - 0.25) < 1e-9);

    CHECK_THROWS_AS(attention_report(enc, windows, 5, labels, 4, "x"),
                    std::out_of_range);
}

TEST_CASE("csv and svg writers produce readable artifacts") {
    namespace fs = std::filesystem;
    std::string dir = (fs::temp_directory_path() / "nv_eval_io").string();
    fs::create_directories(dir);
    std::string csv = dir + "/t.csv";
    write_csv(csv, "metric,value", {"ssim,0.5", "2way,0.9"});
    std::ifstream in(csv);
    std::string line;
    std::getline(in, line);
    CHECK(line == "metric,value");
    std::getline(in, line);
    CHECK(line == "ssim,0.5");

    std::string svg = dir + "/t.svg";
    write_bar_svg(svg, "metrics", {"a", "b"}, {0.5, 0.9});
    std::ifstream sin(svg);
    std::string all((std::istreambuf_iterator<char>(sin)),
                    std::istreambuf_iterator<char>());
    CHECK(all.find("<svg") != std::string::npos);
    CHECK(all.find("metrics") != std::string::npos);
    fs::remove_all(dir);
}
