#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "neurovid/contrastive.hpp"

using namespace neurovid;

namespace {

Tensor random_rows(int64_t n, int64_t d, uint64_t seed) {
    Rng rng(seed);
    return l2_normalize_rows(Tensor::randn({n, d}, rng));
}

Tensor orthonormal_rows(int64_t n) {
    // one-hot rows are orthonormal for n <= d
    std::vector<double> data(n * n, 0.0);
    for (int64_t i = 0; i < n; ++i) data[i * n + i] = 1.0;
    return Tensor::from_data({n, n}, data);
}

}  // namespace

TEST_CASE("clip loss on a single pair is zero") {
    Tensor a = random_rows(1, 8, 1);
    Tensor b = random_rows(1, 8, 2);
    CHECK(std::abs(clip_loss(a, b, 20.0).item()) < 1e-12);
}

TEST_CASE("clip loss saturates for well separated matches") {
    Tensor e = orthonormal_rows(8);
    CHECK(clip_loss(e, e, 100.0).item() < 1e-6);
}

TEST_CASE("clip loss decreases as the temperature scale grows") {
    Tensor e = orthonormal_rows(6);
    double prev = clip_loss(e, e, 1.0).item();
    for (double eps : {2.0, 5.0, 10.0, 30.0}) {
        double cur = clip_loss(e, e, eps).item();
        CHECK(cur < prev);
        prev = cur;
    }
}

TEST_CASE("clip loss on random embeddings sits near ln n") {
    const int64_t n = 16;
    double acc = 0.0;
    const int seeds = 100;
    for (int s = 0; s < seeds; ++s) {
        Tensor a = random_rows(n, 12, 1000 + s);
        Tensor b = random_rows(n, 12, 5000 + s);
        acc += clip_loss(a, b, 1.0).item();
    }
    acc /= seeds;
    CHECK(std::abs(acc - std::log(double(n))) < 0.3);
}

TEST_CASE("clip loss input validation") {
    Tensor a = random_rows(4, 8, 1);
    Tensor b = random_rows(5, 8, 2);
    CHECK_THROWS_AS(clip_loss(a, b, 20.0), std::invalid_argument);
    Tensor c = random_rows(4, 6, 3);
    CHECK_THROWS_AS(clip_loss(a, c, 20.0), std::invalid_argument);
}

TEST_CASE("symmetric clip loss averages both directions") {
    Tensor a = random_rows(6, 8, 11);
    Tensor b = random_rows(6, 8, 12);
    double ab = clip_loss(a, b, 10.0).item();
    double ba = clip_loss(b, a, 10.0).item();
    double sym = clip_loss(a, b, 10.0, true, true).item();
    CHECK(std::abs(sym - 0.5 * (ab + ba)) < 1e-9);
}

TEST_CASE("trimodal loss reduces to clip components") {
    Tensor f = random_rows(8, 8, 21);
    Tensor t = random_rows(8, 8, 22);
    Tensor i = random_rows(8, 8, 23);
    double full = trimodal_loss(f, t, i, 10.0).item();
    double ft = clip_loss(f, t, 10.0).item();
    double fi = clip_loss(f, i, 10.0).item();
    CHECK(std::abs(full - 0.5 * (ft + fi)) < 1e-9);
    CHECK(std::abs(trimodal_loss(f, t, i, 10.0, ContrastiveMode::text_only)
                       .item() - ft) < 1e-9);
    CHECK(std::abs(trimodal_loss(f, t, i, 10.0, ContrastiveMode::image_only)
                       .item() - fi) < 1e-9);
    // identical text and image targets collapse the two terms
    double same = trimodal_loss(f, t, t, 10.0).item();
    CHECK(std::abs(same - ft) < 1e-9);
}

TEST_CASE("trimodal loss is invariant to batch permutation") {
    Tensor f = random_rows(6, 8, 31);
    Tensor t = random_rows(6, 8, 32);
    Tensor i = random_rows(6, 8, 33);
    double base = trimodal_loss(f, t, i, 8.0).item();
    std::vector<int64_t> perm = {3, 0, 5, 1, 4, 2};
    auto apply = [&](const Tensor& x) { return gather(x, 0, perm); };
    double permuted =
        trimodal_loss(apply(f), apply(t), apply(i), 8.0).item();
    CHECK(std::abs(base - permuted) < 1e-9);
}

TEST_CASE("trimodal loss gradient matches finite differences") {
    Tensor t = random_rows(5, 8, 42);
    Tensor i = random_rows(5, 8, 43);
    Rng rng(44);
    Tensor f = Tensor::randn({5, 8}, rng, 1.0, true);
    double err = grad_check(
        [&](const Tensor& x) { return trimodal_loss(x, t, i, 5.0); }, f);
    CHECK(err < 1e-4);
}

TEST_CASE("frozen embedders are deterministic unit-norm maps") {
    FrozenEmbedder te = FrozenEmbedder::text(kCaptionVocab, 16, 0x517);
    FrozenEmbedder ie = FrozenEmbedder::image(4, 16, 0x912);

    std::vector<std::vector<int64_t>> caps = {{1, 2, 3, 4}, {5, 6, 7, 8}};
    Tensor e1 = te.embed_captions(caps);
    Tensor e2 = te.embed_captions(caps);
    CHECK(e1.data() == e2.data());
    CHECK(e1.shape() == Shape{2, 16});
    for (int64_t r = 0; r < 2; ++r) {
        double norm = 0;
        for (int64_t c = 0; c < 16; ++c) {
            double v = e1.data()[r * 16 + c];
            norm += v * v;
        }
        CHECK(std::abs(std::sqrt(norm) - 1.0) < 1e-9);
    }

    SyntheticScene s = make_scene(4);
    VideoClip clip = render_clip(s, 2, 3, 16, 16);
    Tensor img = ie.embed_clips({clip, clip});
    CHECK(img.shape() == Shape{2, 16});
    for (int64_t c = 0; c < 16; ++c)
        CHECK(img.data()[c] == img.data()[16 + c]);
    // frozen: no gradient machinery attached
    CHECK(!e1.requires_grad());
    CHECK(!img.requires_grad());
}

TEST_CASE("frozen embedder receives no gradient through the loss") {
    FrozenEmbedder te = FrozenEmbedder::text(kCaptionVocab, 8, 0x517);
    Tensor t = te.embed_captions({{1, 2}, {3, 4}, {5, 6}});
    Rng rng(3);
    Tensor f = Tensor::randn({3, 8}, rng, 1.0, true);
    Tensor loss = clip_loss(f, t, 5.0);
    loss.backward();
    CHECK(t.node()->grad.empty());
    bool nonzero = false;
    for (double g : f.grad())
        if (g != 0.0) nonzero = true;
    CHECK(nonzero);
}

TEST_CASE("retrieval top1 identifies aligned pairs") {
    Tensor e = orthonormal_rows(10);
    CHECK(retrieval_top1(e, e) == 1.0);
    // random pairs should sit near chance
    double acc = 0.0;
    const int reps = 200;
    const int64_t n = 50;
    for (int r = 0; r < reps; ++r)
        acc += retrieval_top1(random_rows(n, 24, 900 + r),
                              random_rows(n, 24, 7700 + r));
    acc /= reps;
    CHECK(acc > 0.005);
    CHECK(acc < 0.05);
}

TEST_CASE("contrastive batches never repeat a scene id") {
    Rng rng(5);
    std::vector<int64_t> scene_ids;
    for (int i = 0; i < 300; ++i)
        scene_ids.push_back((int64_t)rng.uniform_int(40));
    Rng brng(9);
    int batches_seen = 0;
    for (int rep = 0; rep < 50; ++rep) {
        auto batches = make_contrastive_batches(scene_ids, 16, brng);
        CHECK(!batches.empty());
        for (auto& b : batches) {
            ++batches_seen;
            CHECK((int64_t)b.size() <= 16);
            std::set<int64_t> seen;
            for (int64_t idx : b) {
                REQUIRE(idx >= 0);
                REQUIRE(idx < 300);
                CHECK(seen.insert(scene_ids[idx]).second);
            }
        }
    }
    CHECK(batches_seen >= 900);
}

TEST_CASE("caption augmentation stays in vocabulary") {
    SyntheticScene s = make_scene(9);
    Rng rng(13);
    bool changed = false;
    for (int i = 0; i < 50; ++i) {
        auto aug = augment_caption(s.caption_tokens, rng);
        CHECK(aug.size() == s.caption_tokens.size());
        for (int64_t t : aug) {
            CHECK(t >= 0);
            CHECK(t < kCaptionVocab);
        }
        if (aug != s.caption_tokens) changed = true;
    }
    CHECK(changed);
}
