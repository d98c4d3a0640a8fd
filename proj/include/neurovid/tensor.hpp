#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "neurovid/rng.hpp"

namespace neurovid {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorNode {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // allocated on first use
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backward_fn;

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }
};

// Value-semantic handle onto a graph node. Copies share storage; every op
// records its backward closure so a later Tensor::backward() can replay the
// graph in reverse topological order.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorNode> n) : node_(std::move(n)) {}

    static Tensor zeros(const Shape& s, bool requires_grad = false);
    static Tensor full(const Shape& s, double v, bool requires_grad = false);
    static Tensor from_data(const Shape& s, std::vector<double> d,
                            bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);
    static Tensor randn(const Shape& s, Rng& rng, double stddev = 1.0,
                        bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int64_t numel() const { return static_cast<int64_t>(node_->data.size()); }
    int64_t rank() const { return static_cast<int64_t>(node_->shape.size()); }
    std::vector<double>& data() { return node_->data; }
    const std::vector<double>& data() const { return node_->data; }
    std::vector<double>& grad() {
        node_->ensure_grad();
        return node_->grad;
    }
    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool rg) { node_->requires_grad = rg; }
    void zero_grad() {
        if (!node_->grad.empty()) node_->grad.assign(node_->data.size(), 0.0);
    }
    double item() const;

    // Reverse-mode sweep from a scalar output. Each node is visited exactly
    // once; leaf gradients accumulate by summation.
    void backward();

    std::shared_ptr<TensorNode> node() const { return node_; }

private:
    std::shared_ptr<TensorNode> node_;
};

// ---- primitive ops (all differentiable) ----

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
// x [..., d] + bias [d]
Tensor add_bias(const Tensor& x, const Tensor& bias);
// a [..., m, k] x b [k, n] (shared weight) or b [..., k, n] (same leading dims)
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose_last2(const Tensor& x);
Tensor permute(const Tensor& x, const std::vector<int64_t>& perm);
Tensor reshape(const Tensor& x, const Shape& s);
Tensor softmax(const Tensor& x, int64_t axis);
Tensor gelu(const Tensor& x);
Tensor tanh_op(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-6);
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);
Tensor mean_axis(const Tensor& x, int64_t axis);
Tensor mse_loss(const Tensor& a, const Tensor& b);
// logits [n, m], one target index per row
Tensor cross_entropy(const Tensor& logits, const std::vector<int64_t>& targets);
Tensor concat(const std::vector<Tensor>& xs, int64_t axis);
Tensor slice(const Tensor& x, int64_t axis, int64_t start, int64_t len);
Tensor gather(const Tensor& x, int64_t axis, const std::vector<int64_t>& idx);
// inverted-scale dropout; identity when p == 0
Tensor dropout(const Tensor& x, double p, Rng& rng);
// rows of an embedding table [v, d] selected by index
Tensor embed_rows(const Tensor& table, const std::vector<int64_t>& ids);
// L2-normalize each row of a 2-D tensor
Tensor l2_normalize_rows(const Tensor& x, double eps = 1e-12);

// ---- gradient checking ----

// Compares reverse-mode gradient of f against central finite differences
// (h = 1e-5). Returns the max relative error with denominator
// max(|a|, |b|, 1e-8). Throws on non-finite values.
double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                  double h = 1e-5);

}  // namespace neurovid
