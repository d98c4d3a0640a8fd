#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "neurovid/nn.hpp"
#include "neurovid/tensor.hpp"

using namespace neurovid;

TEST_CASE("matmul known products") {
    Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
    Tensor b = Tensor::from_data({2, 1}, {5, 6});
    Tensor c = matmul(a, b);
    CHECK(c.shape() == Shape{2, 1});
    CHECK(c.data()[0] == doctest::Approx(17.0).epsilon(1e-12));
    CHECK(c.data()[1] == doctest::Approx(39.0).epsilon(1e-12));

    Tensor eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
    Tensor ai = matmul(a, eye);
    for (int i = 0; i < 4; ++i) CHECK(ai.data()[i] == a.data()[i]);
}

TEST_CASE("matmul shape mismatch names both shapes") {
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({4, 2});
    bool threw = false;
    try {
        matmul(a, b);
    } catch (const std::invalid_argument& e) {
        threw = true;
        std::string msg = e.what();
        CHECK(msg.find("[2x3]") != std::string::npos);
        CHECK(msg.find("[4x2]") != std::string::npos);
    }
    CHECK(threw);
}

TEST_CASE("softmax oracle and invariants") {
    Tensor x = Tensor::from_data({1, 3}, {1.0, 2.0, 3.0});
    Tensor s = softmax(x, 1);
    CHECK(std::abs(s.data()[0] - 0.0900) < 1e-4);
    CHECK(std::abs(s.data()[1] - 0.2447) < 1e-4);
    CHECK(std::abs(s.data()[2] - 0.6652) < 1e-4);

    // shift invariance
    Tensor xs = add_scalar(x, 123.456);
    Tensor s2 = softmax(xs, 1);
    for (int i = 0; i < 3; ++i)
        CHECK(std::abs(s.data()[i] - s2.data()[i]) < 1e-12);

    // rows sum to one, entries strictly inside (0, 1)
    Rng rng(77);
    Tensor r = Tensor::randn({5, 9}, rng, 10.0);
    Tensor sr = softmax(r, 1);
    for (int64_t row = 0; row < 5; ++row) {
        double sum = 0.0;
        for (int64_t col = 0; col < 9; ++col) {
            double p = sr.data()[row * 9 + col];
            CHECK(p > 0.0);
            CHECK(p < 1.0);
            sum += p;
        }
        CHECK(std::abs(sum - 1.0) < 1e-12);
    }

    Tensor two = Tensor::from_data({1, 2}, {0.0, 0.0});
    Tensor st = softmax(two, 1);
    CHECK(std::abs(st.data()[0] - 0.5) < 1e-15);
    CHECK(std::abs(st.data()[1] - 0.5) < 1e-15);
}

TEST_CASE("cross entropy oracles") {
    // uniform logits over 4 classes -> ln 4
    Tensor z = Tensor::zeros({1, 4});
    Tensor l = cross_entropy(z, {2});
    CHECK(std::abs(l.item() - std::log(4.0)) < 1e-12);

    // strongly saturated correct logit -> ~0
    Tensor zs = Tensor::from_data({1, 3}, {100.0, 0.0, 0.0});
    CHECK(cross_entropy(zs, {0}).item() < 1e-6);

    // single class is always certain
    Tensor z1 = Tensor::from_data({1, 1}, {3.7});
    CHECK(std::abs(cross_entropy(z1, {0}).item()) < 1e-15);

    CHECK_THROWS_AS(cross_entropy(z, {4}), std::out_of_range);
    CHECK_THROWS_AS(cross_entropy(z, {-1}), std::out_of_range);
}

TEST_CASE("grad_check analytic quadratic") {
    Rng rng(5);
    Tensor x = Tensor::randn({4, 3}, rng, 1.0, true);
    double err = grad_check([](const Tensor& t) { return sum_all(mul(t, t)); }, x);
    CHECK(err < 1e-6);
}

TEST_CASE("grad_check primitives at random points") {
    Rng rng(11);
    auto check_at = [&](const std::function<Tensor(const Tensor&)>& f,
                        const Shape& s, int points) {
        for (int p = 0; p < points; ++p) {
            Tensor x = Tensor::randn(s, rng, 1.0, true);
            CHECK(grad_check(f, x) < 1e-4);
        }
    };
    check_at([](const Tensor& t) { return sum_all(gelu(t)); }, {3, 4}, 10);
    check_at([](const Tensor& t) { return sum_all(tanh_op(t)); }, {3, 4}, 10);
    check_at(
        [](const Tensor& t) {
            Tensor w = Tensor::from_data({2, 5}, {1, -1, 2, 0.5, -2,
                                                  0.3, 1.7, -0.9, 2.2, -1.1});
            return sum_all(mul(softmax(t, 1), w));
        },
        {2, 5}, 10);
    check_at([](const Tensor& t) { return mean_all(mul(t, t)); }, {6}, 10);
    check_at(
        [](const Tensor& t) {
            Tensor w = Tensor::from_data({4, 2}, {1, -2, 0.5, 3, -1, 1.5, 2, -0.5});
            return sum_all(matmul(t, w));
        },
        {3, 4}, 10);
    check_at([](const Tensor& t) { return cross_entropy(t, {1, 0}); }, {2, 3},
             10);
    check_at(
        [](const Tensor& t) {
            Tensor g = Tensor::from_data({4}, {1.3, -0.4, 0.8, 2.1});
            Tensor b = Tensor::from_data({4}, {-0.2, 0.1, 0.0, 0.7});
            Tensor w = Tensor::from_data({4, 2}, {0.9, -1.2, 0.4, 1.6,
                                                  -0.3, 0.8, 1.1, -0.5});
            return sum_all(matmul(layer_norm(t, g, b), w));
        },
        {2, 3, 4}, 10);
    check_at(
        [](const Tensor& t) {
            return sum_all(mul(permute(reshape(t, {2, 3, 2}), {1, 0, 2}),
                               permute(reshape(t, {2, 3, 2}), {1, 0, 2})));
        },
        {3, 4}, 10);
    check_at([](const Tensor& t) { return sum_all(mul(slice(t, 1, 1, 2), slice(t, 1, 1, 2))); },
             {3, 4}, 10);
    check_at(
        [](const Tensor& t) {
            return sum_all(mul(gather(t, 0, {2, 0, 2}), gather(t, 0, {2, 0, 2})));
        },
        {3, 4}, 10);
    check_at(
        [](const Tensor& t) {
            Tensor w = Tensor::from_data({4, 1}, {0.7, -1.4, 2.0, 0.3});
            return sum_all(matmul(l2_normalize_rows(t), w));
        },
        {3, 4}, 5);
    check_at(
        [](const Tensor& t) {
            Tensor other = Tensor::from_data({2, 2}, {0.3, -0.7, 1.1, 0.2});
            return mse_loss(t, other);
        },
        {2, 2}, 10);
    check_at(
        [](const Tensor& t) {
            return sum_all(mul(concat({t, scale(t, 2.0)}, 0),
                               concat({t, scale(t, 2.0)}, 0)));
        },
        {2, 3}, 5);
}

TEST_CASE("backward is deterministic") {
    auto run = [] {
        Rng rng(99);
        Tensor x = Tensor::randn({4, 4}, rng, 1.0, true);
        Tensor y = mean_all(mul(softmax(matmul(x, x), 1), gelu(x)));
        y.backward();
        return x.grad();
    };
    auto g1 = run();
    auto g2 = run();
    REQUIRE(g1.size() == g2.size());
    for (size_t i = 0; i < g1.size(); ++i) CHECK(g1[i] == g2[i]);
}

TEST_CASE("reshape and permute round trips are bit exact") {
    Rng rng(3);
    Tensor x = Tensor::randn({2, 3, 4}, rng);
    Tensor y = reshape(reshape(x, {4, 3, 2}), {2, 3, 4});
    for (int64_t i = 0; i < x.numel(); ++i) CHECK(x.data()[i] == y.data()[i]);
    Tensor z = permute(permute(x, {2, 0, 1}), {1, 2, 0});
    for (int64_t i = 0; i < x.numel(); ++i) CHECK(x.data()[i] == z.data()[i]);
    CHECK_THROWS_AS(reshape(x, {5, 5}), std::invalid_argument);
}

TEST_CASE("layer norm normalizes rows") {
    Rng rng(8);
    Tensor x = Tensor::randn({3, 6}, rng, 4.0);
    Tensor g = Tensor::full({6}, 1.0);
    Tensor b = Tensor::zeros({6});
    Tensor y = layer_norm(x, g, b);
    for (int64_t r = 0; r < 3; ++r) {
        double m = 0, v = 0;
        for (int64_t c = 0; c < 6; ++c) m += y.data()[r * 6 + c];
        m /= 6;
        for (int64_t c = 0; c < 6; ++c) {
            double d = y.data()[r * 6 + c] - m;
            v += d * d;
        }
        v /= 6;
        CHECK(std::abs(m) < 1e-9);
        CHECK(std::abs(v - 1.0) < 1e-4);
    }
}

TEST_CASE("dropout identity at p=0 and inverted scaling") {
    Rng rng(21);
    Tensor x = Tensor::randn({64}, rng);
    Rng drng(1);
    Tensor y = dropout(x, 0.0, drng);
    for (int64_t i = 0; i < 64; ++i) CHECK(x.data()[i] == y.data()[i]);

    // surviving entries are scaled by 1/(1-p)
    Rng drng2(2);
    Tensor z = dropout(x, 0.5, drng2);
    for (int64_t i = 0; i < 64; ++i) {
        bool zero = z.data()[i] == 0.0;
        bool scaled = std::abs(z.data()[i] - 2.0 * x.data()[i]) < 1e-12;
        CHECK((zero || scaled));
    }
}

TEST_CASE("rng reproducibility and moments") {
    Rng a(123), b(123);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    Rng c(7);
    double m = 0, v = 0;
    const int n = 20000;
    std::vector<double> xs(n);
    for (auto& x : xs) x = c.normal();
    for (double x : xs) m += x;
    m /= n;
    for (double x : xs) v += (x - m) * (x - m);
    v /= n;
    CHECK(std::abs(m) < 0.03);
    CHECK(std::abs(v - 1.0) < 0.05);

    auto s = c.sample_without_replacement(10, 4);
    CHECK(s.size() == 4);
    for (size_t i = 1; i < s.size(); ++i) CHECK(s[i] > s[i - 1]);
}

TEST_CASE("adam minimizes a convex bowl") {
    Tensor x = Tensor::from_data({2}, {5.0, -3.0}, true);
    Adam opt({x}, 0.1);
    for (int i = 0; i < 300; ++i) {
        opt.zero_grad();
        Tensor loss = sum_all(mul(x, x));
        loss.backward();
        opt.step();
    }
    CHECK(std::abs(x.data()[0]) < 0.05);
    CHECK(std::abs(x.data()[1]) < 0.05);
}

TEST_CASE("sinusoidal positions are bounded and distinct") {
    Tensor p = sinusoidal_positions(16, 8);
    CHECK(p.shape() == Shape{16, 8});
    for (double v : p.data()) CHECK(std::abs(v) <= 1.0 + 1e-12);
    // rows differ
    bool same = true;
    for (int64_t c = 0; c < 8; ++c)
        if (p.data()[c] != p.data()[8 + c]) same = false;
    CHECK(!same);
}
