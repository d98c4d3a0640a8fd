#include "neurovid/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace neurovid {

int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t e : s) n *= e;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
}

namespace {

std::shared_ptr<TensorNode> make_node(const Shape& s) {
    auto n = std::make_shared<TensorNode>();
    n->shape = s;
    n->data.assign(static_cast<size_t>(shape_numel(s)), 0.0);
    return n;
}

Tensor make_result(const Shape& s, std::vector<std::shared_ptr<TensorNode>> parents,
                   std::function<void(TensorNode&)> bw) {
    auto n = make_node(s);
    bool rg = false;
    for (auto& p : parents) rg = rg || p->requires_grad;
    n->requires_grad = rg;
    if (rg) {
        n->parents = std::move(parents);
        n->backward_fn = std::move(bw);
    }
    return Tensor(n);
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                    shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
}

// decompose shape around an axis: (outer, n, inner)
struct AxisView {
    int64_t outer = 1, n = 1, inner = 1;
};

AxisView axis_view(const Shape& s, int64_t axis) {
    if (axis < 0 || axis >= static_cast<int64_t>(s.size()))
        throw std::invalid_argument("axis " + std::to_string(axis) +
                                    " out of range for " + shape_str(s));
    AxisView v;
    for (int64_t i = 0; i < axis; ++i) v.outer *= s[i];
    v.n = s[axis];
    for (int64_t i = axis + 1; i < static_cast<int64_t>(s.size()); ++i)
        v.inner *= s[i];
    return v;
}

}  // namespace

Tensor Tensor::zeros(const Shape& s, bool requires_grad) {
    auto n = make_node(s);
    n->requires_grad = requires_grad;
    return Tensor(n);
}

Tensor Tensor::full(const Shape& s, double v, bool requires_grad) {
    auto n = make_node(s);
    n->data.assign(n->data.size(), v);
    n->requires_grad = requires_grad;
    return Tensor(n);
}

Tensor Tensor::from_data(const Shape& s, std::vector<double> d, bool requires_grad) {
    if (static_cast<int64_t>(d.size()) != shape_numel(s))
        throw std::invalid_argument("from_data: " + std::to_string(d.size()) +
                                    " values for shape " + shape_str(s));
    auto n = std::make_shared<TensorNode>();
    n->shape = s;
    n->data = std::move(d);
    n->requires_grad = requires_grad;
    return Tensor(n);
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    return from_data({1}, {v}, requires_grad);
}

Tensor Tensor::randn(const Shape& s, Rng& rng, double stddev, bool requires_grad) {
    auto n = make_node(s);
    for (auto& x : n->data) x = stddev * rng.normal();
    n->requires_grad = requires_grad;
    return Tensor(n);
}

double Tensor::item() const {
    if (node_->data.size() != 1)
        throw std::logic_error("item(): tensor has " +
                               std::to_string(node_->data.size()) + " elements");
    return node_->data[0];
}

void Tensor::backward() {
    if (node_->data.size() != 1)
        throw std::logic_error("backward(): output must be scalar");
    // iterative post-order DFS; reversed post-order is a topological order
    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> seen;
    std::vector<std::pair<TensorNode*, size_t>> stack;
    stack.push_back({node_.get(), 0});
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, i] = stack.back();
        if (i < n->parents.size()) {
            TensorNode* p = n->parents[i++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    node_->ensure_grad();
    node_->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode* n = *it;
        if (n->backward_fn) {
            for (auto& p : n->parents)
                if (p->requires_grad) p->ensure_grad();
            n->backward_fn(*n);
        }
    }
}

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    auto an = a.node(), bn = b.node();
    Tensor out = make_result(a.shape(), {an, bn}, [an, bn](TensorNode& self) {
        for (size_t i = 0; i < self.grad.size(); ++i) {
            if (an->requires_grad) an->grad[i] += self.grad[i];
            if (bn->requires_grad) bn->grad[i] += self.grad[i];
        }
    });
    for (size_t i = 0; i < out.data().size(); ++i)
        out.data()[i] = an->data[i] + bn->data[i];
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    auto an = a.node(), bn = b.node();
    Tensor out = make_result(a.shape(), {an, bn}, [an, bn](TensorNode& self) {
        for (size_t i = 0; i < self.grad.size(); ++i) {
            if (an->requires_grad) an->grad[i] += self.grad[i];
            if (bn->requires_grad) bn->grad[i] -= self.grad[i];
        }
    });
    for (size_t i = 0; i < out.data().size(); ++i)
        out.data()[i] = an->data[i] - bn->data[i];
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    auto an = a.node(), bn = b.node();
    Tensor out = make_result(a.shape(), {an, bn}, [an, bn](TensorNode& self) {
        for (size_t i = 0; i < self.grad.size(); ++i) {
            if (an->requires_grad) an->grad[i] += self.grad[i] * bn->data[i];
            if (bn->requires_grad) bn->grad[i] += self.grad[i] * an->data[i];
        }
    });
    for (size_t i = 0; i < out.data().size(); ++i)
        out.data()[i] = an->data[i] * bn->data[i];
    return out;
}

Tensor scale(const Tensor& a, double s) {
    auto an = a.node();
    Tensor out = make_result(a.shape(), {an}, [an, s](TensorNode& self) {
        for (size_t i = 0; i < self.grad.size(); ++i)
            an->grad[i] += self.grad[i] * s;
    });
    for (size_t i = 0; i < out.data().size(); ++i) out.data()[i] = an->data[i] * s;
    return out;
}

Tensor add_scalar(const Tensor& a, double s) {
    auto an = a.node();
    Tensor out = make_result(a.shape(), {an}, [an](TensorNode& self) {
        for (size_t i = 0; i < self.grad.size(); ++i)
            an->grad[i] += self.grad[i];
    });
    for (size_t i = 0; i < out.data().size(); ++i) out.data()[i] = an->data[i] + s;
    return out;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
    if (bias.rank() != 1 || x.shape().back() != bias.shape()[0])
        throw std::invalid_argument("add_bias: " + shape_str(x.shape()) +
                                    " with bias " + shape_str(bias.shape()));
    auto xn = x.node(), bn = bias.node();
    int64_t d = bias.shape()[0];
    int64_t rows = x.numel() / d;
    Tensor out = make_result(x.shape(), {xn, bn}, [xn, bn, rows, d](TensorNode& self) {
        for (int64_t r = 0; r < rows; ++r)
            for (int64_t j = 0; j < d; ++j) {
                double g = self.grad[static_cast<size_t>(r * d + j)];
                if (xn->requires_grad)
                    xn->grad[static_cast<size_t>(r * d + j)] += g;
                if (bn->requires_grad) bn->grad[static_cast<size_t>(j)] += g;
            }
    });
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t j = 0; j < d; ++j)
            out.data()[static_cast<size_t>(r * d + j)] =
                xn->data[static_cast<size_t>(r * d + j)] +
                bn->data[static_cast<size_t>(j)];
    return out;
}

namespace {

// C[m x n] += A[m x k] * B[k x n], raw buffers
void gemm_acc(const double* A, const double* B, double* C, int64_t m, int64_t k,
              int64_t n) {
    for (int64_t i = 0; i < m; ++i)
        for (int64_t p = 0; p < k; ++p) {
            double a = A[i * k + p];
            if (a == 0.0) continue;
            const double* brow = B + p * n;
            double* crow = C + i * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += a * brow[j];
        }
}

// C[m x n] += A[m x k] * B^T where B is [n x k]
void gemm_bt_acc(const double* A, const double* B, double* C, int64_t m,
                 int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) {
            double s = 0.0;
            const double* arow = A + i * k;
            const double* brow = B + j * k;
            for (int64_t p = 0; p < k; ++p) s += arow[p] * brow[p];
            C[i * n + j] += s;
        }
}

// C[k x n] += A^T * B where A is [m x k], B is [m x n]
void gemm_at_acc(const double* A, const double* B, double* C, int64_t m,
                 int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i)
        for (int64_t p = 0; p < k; ++p) {
            double a = A[i * k + p];
            if (a == 0.0) continue;
            const double* brow = B + i * n;
            double* crow = C + p * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += a * brow[j];
        }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    const Shape& as = a.shape();
    const Shape& bs = b.shape();
    if (as.size() < 2)
        throw std::invalid_argument("matmul: lhs rank < 2, " + shape_str(as));
    int64_t m = as[as.size() - 2];
    int64_t k = as[as.size() - 1];
    auto an = a.node(), bn = b.node();

    if (bs.size() == 2 && as.size() >= 2) {
        // shared weight applied to every trailing [m x k] block
        if (bs[0] != k)
            throw std::invalid_argument("matmul: inner extents differ, " +
                                        shape_str(as) + " x " + shape_str(bs));
        int64_t n = bs[1];
        int64_t rows = a.numel() / k;
        Shape os = as;
        os.back() = n;
        Tensor out = make_result(os, {an, bn}, [an, bn, rows, k, n](TensorNode& self) {
            if (an->requires_grad)
                gemm_bt_acc(self.grad.data(), bn->data.data(), an->grad.data(),
                            rows, n, k);
            if (bn->requires_grad)
                gemm_at_acc(an->data.data(), self.grad.data(), bn->grad.data(),
                            rows, k, n);
        });
        gemm_acc(an->data.data(), bn->data.data(), out.data().data(), rows, k, n);
        (void)m;
        return out;
    }

    if (as.size() != bs.size())
        throw std::invalid_argument("matmul: rank mismatch, " + shape_str(as) +
                                    " x " + shape_str(bs));
    for (size_t i = 0; i + 2 < as.size(); ++i)
        if (as[i] != bs[i])
            throw std::invalid_argument("matmul: batch dims differ, " +
                                        shape_str(as) + " x " + shape_str(bs));
    if (bs[bs.size() - 2] != k)
        throw std::invalid_argument("matmul: inner extents differ, " +
                                    shape_str(as) + " x " + shape_str(bs));
    int64_t n = bs.back();
    int64_t batch = 1;
    for (size_t i = 0; i + 2 < as.size(); ++i) batch *= as[i];
    Shape os(as.begin(), as.end() - 2);
    os.push_back(m);
    os.push_back(n);
    Tensor out = make_result(os, {an, bn}, [an, bn, batch, m, k, n](TensorNode& self) {
        for (int64_t bidx = 0; bidx < batch; ++bidx) {
            const double* A = an->data.data() + bidx * m * k;
            const double* B = bn->data.data() + bidx * k * n;
            const double* G = self.grad.data() + bidx * m * n;
            if (an->requires_grad)
                gemm_bt_acc(G, B, an->grad.data() + bidx * m * k, m, n, k);
            if (bn->requires_grad)
                gemm_at_acc(A, G, bn->grad.data() + bidx * k * n, m, k, n);
        }
    });
    for (int64_t bidx = 0; bidx < batch; ++bidx)
        gemm_acc(an->data.data() + bidx * m * k, bn->data.data() + bidx * k * n,
                 out.data().data() + bidx * m * n, m, k, n);
    return out;
}

Tensor transpose_last2(const Tensor& x) {
    const Shape& s = x.shape();
    if (s.size() < 2)
        throw std::invalid_argument("transpose_last2: rank < 2");
    int64_t m = s[s.size() - 2], n = s.back();
    int64_t batch = x.numel() / (m * n);
    Shape os = s;
    std::swap(os[os.size() - 2], os[os.size() - 1]);
    auto xn = x.node();
    Tensor out = make_result(os, {xn}, [xn, batch, m, n](TensorNode& self) {
        for (int64_t b = 0; b < batch; ++b)
            for (int64_t i = 0; i < m; ++i)
                for (int64_t j = 0; j < n; ++j)
                    xn->grad[static_cast<size_t>(b * m * n + i * n + j)] +=
                        self.grad[static_cast<size_t>(b * m * n + j * m + i)];
    });
    for (int64_t b = 0; b < batch; ++b)
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < n; ++j)
                out.data()[static_cast<size_t>(b * m * n + j * m + i)] =
                    xn->data[static_cast<size_t>(b * m * n + i * n + j)];
    return out;
}

Tensor permute(const Tensor& x, const std::vector<int64_t>& perm) {
    const Shape& s = x.shape();
    int64_t r = static_cast<int64_t>(s.size());
    if (static_cast<int64_t>(perm.size()) != r)
        throw std::invalid_argument("permute: axis list length mismatch");
    std::vector<bool> used(static_cast<size_t>(r), false);
    Shape os(static_cast<size_t>(r));
    for (int64_t i = 0; i < r; ++i) {
        int64_t a = perm[static_cast<size_t>(i)];
        if (a < 0 || a >= r || used[static_cast<size_t>(a)])
            throw std::invalid_argument("permute: invalid axis list");
        used[static_cast<size_t>(a)] = true;
        os[static_cast<size_t>(i)] = s[static_cast<size_t>(a)];
    }
    // strides of input, and mapping from output multi-index to input offset
    std::vector<int64_t> istride(static_cast<size_t>(r), 1);
    for (int64_t i = r - 2; i >= 0; --i)
        istride[static_cast<size_t>(i)] =
            istride[static_cast<size_t>(i + 1)] * s[static_cast<size_t>(i + 1)];
    std::vector<int64_t> ostride_in(static_cast<size_t>(r));
    for (int64_t i = 0; i < r; ++i)
        ostride_in[static_cast<size_t>(i)] =
            istride[static_cast<size_t>(perm[static_cast<size_t>(i)])];
    int64_t total = x.numel();
    auto xn = x.node();
    auto index_map = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(total));
    {
        std::vector<int64_t> idx(static_cast<size_t>(r), 0);
        for (int64_t o = 0; o < total; ++o) {
            int64_t src = 0;
            for (int64_t i = 0; i < r; ++i)
                src += idx[static_cast<size_t>(i)] * ostride_in[static_cast<size_t>(i)];
            (*index_map)[static_cast<size_t>(o)] = src;
            for (int64_t i = r - 1; i >= 0; --i) {
                if (++idx[static_cast<size_t>(i)] < os[static_cast<size_t>(i)]) break;
                idx[static_cast<size_t>(i)] = 0;
            }
        }
    }
    Tensor out = make_result(os, {xn}, [xn, index_map](TensorNode& self) {
        for (size_t o = 0; o < self.grad.size(); ++o)
            xn->grad[static_cast<size_t>((*index_map)[o])] += self.grad[o];
    });
    for (size_t o = 0; o < out.data().size(); ++o)
        out.data()[o] = xn->data[static_cast<size_t>((*index_map)[o])];
    return out;
}

Tensor reshape(const Tensor& x, const Shape& s) {
    if (shape_numel(s) != x.numel())
        throw std::invalid_argument("reshape: " + shape_str(x.shape()) + " to " +
                                    shape_str(s) + " changes element count");
    auto xn = x.node();
    Tensor out = make_result(s, {xn}, [xn](TensorNode& self) {
        for (size_t i = 0; i < self.grad.size(); ++i)
            xn->grad[i] += self.grad[i];
    });
    out.data() = xn->data;
    return out;
}

Tensor softmax(const Tensor& x, int64_t axis) {
    AxisView v = axis_view(x.shape(), axis);
    auto xn = x.node();
    auto out_node = make_node(x.shape());
    for (int64_t o = 0; o < v.outer; ++o)
        for (int64_t in = 0; in < v.inner; ++in) {
            double mx = -1e300;
            for (int64_t i = 0; i < v.n; ++i)
                mx = std::max(mx, xn->data[static_cast<size_t>(
                                      (o * v.n + i) * v.inner + in)]);
            double z = 0.0;
            for (int64_t i = 0; i < v.n; ++i) {
                size_t idx = static_cast<size_t>((o * v.n + i) * v.inner + in);
                out_node->data[idx] = std::exp(xn->data[idx] - mx);
                z += out_node->data[idx];
            }
            for (int64_t i = 0; i < v.n; ++i)
                out_node->data[static_cast<size_t>((o * v.n + i) * v.inner + in)] /= z;
        }
    out_node->requires_grad = xn->requires_grad;
    if (xn->requires_grad) {
        out_node->parents = {xn};
        out_node->backward_fn = [xn, v](TensorNode& self) {
            for (int64_t o = 0; o < v.outer; ++o)
                for (int64_t in = 0; in < v.inner; ++in) {
                    double dot = 0.0;
                    for (int64_t i = 0; i < v.n; ++i) {
                        size_t idx =
                            static_cast<size_t>((o * v.n + i) * v.inner + in);
                        dot += self.grad[idx] * self.data[idx];
                    }
                    for (int64_t i = 0; i < v.n; ++i) {
                        size_t idx =
                            static_cast<size_t>((o * v.n + i) * v.inner + in);
                        xn->grad[idx] += self.data[idx] * (self.grad[idx] - dot);
                    }
                }
        };
    }
    return Tensor(out_node);
}

Tensor gelu(const Tensor& x) {
    auto xn = x.node();
    Tensor out = make_result(x.shape(), {xn}, [xn](TensorNode& self) {
        constexpr double inv_sqrt2 = 0.70710678118654752440;
        constexpr double inv_sqrt2pi = 0.39894228040143267794;
        for (size_t i = 0; i < self.grad.size(); ++i) {
            double v = xn->data[i];
            double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
            double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
            xn->grad[i] += self.grad[i] * (cdf + v * pdf);
        }
    });
    for (size_t i = 0; i < out.data().size(); ++i) {
        double v = xn->data[i];
        out.data()[i] = 0.5 * v * (1.0 + std::erf(v * 0.70710678118654752440));
    }
    return out;
}

Tensor tanh_op(const Tensor& x) {
    auto xn = x.node();
    auto out_node = make_node(x.shape());
    for (size_t i = 0; i < out_node->data.size(); ++i)
        out_node->data[i] = std::tanh(xn->data[i]);
    out_node->requires_grad = xn->requires_grad;
    if (xn->requires_grad) {
        out_node->parents = {xn};
        out_node->backward_fn = [xn](TensorNode& self) {
            for (size_t i = 0; i < self.grad.size(); ++i)
                xn->grad[i] += self.grad[i] * (1.0 - self.data[i] * self.data[i]);
        };
    }
    return Tensor(out_node);
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
    int64_t d = x.shape().back();
    if (gain.shape() != Shape{d} || bias.shape() != Shape{d})
        throw std::invalid_argument("layer_norm: gain/bias must be [" +
                                    std::to_string(d) + "]");
    int64_t rows = x.numel() / d;
    auto xn = x.node(), gn = gain.node(), bn = bias.node();
    auto stats = std::make_shared<std::vector<double>>(
        static_cast<size_t>(rows) * 2);  // (mean, invstd) per row
    Tensor out = make_result(
        x.shape(), {xn, gn, bn}, [xn, gn, bn, stats, rows, d](TensorNode& self) {
            for (int64_t r = 0; r < rows; ++r) {
                double mu = (*stats)[static_cast<size_t>(2 * r)];
                double istd = (*stats)[static_cast<size_t>(2 * r + 1)];
                double mean_dxh = 0.0, mean_dxh_xh = 0.0;
                for (int64_t j = 0; j < d; ++j) {
                    size_t idx = static_cast<size_t>(r * d + j);
                    double xh = (xn->data[idx] - mu) * istd;
                    double g = self.grad[idx];
                    if (gn->requires_grad) gn->grad[static_cast<size_t>(j)] += g * xh;
                    if (bn->requires_grad) bn->grad[static_cast<size_t>(j)] += g;
                    double dxh = g * gn->data[static_cast<size_t>(j)];
                    mean_dxh += dxh;
                    mean_dxh_xh += dxh * xh;
                }
                mean_dxh /= static_cast<double>(d);
                mean_dxh_xh /= static_cast<double>(d);
                if (xn->requires_grad) {
                    for (int64_t j = 0; j < d; ++j) {
                        size_t idx = static_cast<size_t>(r * d + j);
                        double xh = (xn->data[idx] - mu) * istd;
                        double dxh = self.grad[idx] * gn->data[static_cast<size_t>(j)];
                        xn->grad[idx] += istd * (dxh - mean_dxh - xh * mean_dxh_xh);
                    }
                }
            }
        });
    for (int64_t r = 0; r < rows; ++r) {
        double mu = 0.0;
        for (int64_t j = 0; j < d; ++j) mu += xn->data[static_cast<size_t>(r * d + j)];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (int64_t j = 0; j < d; ++j) {
            double dv = xn->data[static_cast<size_t>(r * d + j)] - mu;
            var += dv * dv;
        }
        var /= static_cast<double>(d);
        double istd = 1.0 / std::sqrt(var + eps);
        (*stats)[static_cast<size_t>(2 * r)] = mu;
        (*stats)[static_cast<size_t>(2 * r + 1)] = istd;
        for (int64_t j = 0; j < d; ++j) {
            size_t idx = static_cast<size_t>(r * d + j);
            out.data()[idx] = (xn->data[idx] - mu) * istd *
                                  gn->data[static_cast<size_t>(j)] +
                              bn->data[static_cast<size_t>(j)];
        }
    }
    return out;
}

Tensor sum_all(const Tensor& x) {
    auto xn = x.node();
    Tensor out = make_result({1}, {xn}, [xn](TensorNode& self) {
        for (size_t i = 0; i < xn->grad.size(); ++i)
            xn->grad[i] += self.grad[0];
    });
    double s = 0.0;
    for (double v : xn->data) s += v;
    out.data()[0] = s;
    return out;
}

Tensor mean_all(const Tensor& x) {
    return scale(sum_all(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor mean_axis(const Tensor& x, int64_t axis) {
    AxisView v = axis_view(x.shape(), axis);
    Shape os;
    for (int64_t i = 0; i < static_cast<int64_t>(x.shape().size()); ++i)
        if (i != axis) os.push_back(x.shape()[static_cast<size_t>(i)]);
    if (os.empty()) os.push_back(1);
    auto xn = x.node();
    double inv = 1.0 / static_cast<double>(v.n);
    Tensor out = make_result(os, {xn}, [xn, v, inv](TensorNode& self) {
        for (int64_t o = 0; o < v.outer; ++o)
            for (int64_t i = 0; i < v.n; ++i)
                for (int64_t in = 0; in < v.inner; ++in)
                    xn->grad[static_cast<size_t>((o * v.n + i) * v.inner + in)] +=
                        inv * self.grad[static_cast<size_t>(o * v.inner + in)];
    });
    for (int64_t o = 0; o < v.outer; ++o)
        for (int64_t in = 0; in < v.inner; ++in) {
            double s = 0.0;
            for (int64_t i = 0; i < v.n; ++i)
                s += xn->data[static_cast<size_t>((o * v.n + i) * v.inner + in)];
            out.data()[static_cast<size_t>(o * v.inner + in)] = s * inv;
        }
    return out;
}

Tensor mse_loss(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mse_loss");
    Tensor d = sub(a, b);
    return mean_all(mul(d, d));
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int64_t>& targets) {
    if (logits.rank() != 2)
        throw std::invalid_argument("cross_entropy: logits must be 2-D, got " +
                                    shape_str(logits.shape()));
    int64_t n = logits.shape()[0], m = logits.shape()[1];
    if (static_cast<int64_t>(targets.size()) != n)
        throw std::invalid_argument("cross_entropy: " +
                                    std::to_string(targets.size()) +
                                    " targets for " + std::to_string(n) + " rows");
    for (int64_t t : targets)
        if (t < 0 || t >= m)
            throw std::out_of_range("cross_entropy: target index " +
                                    std::to_string(t) + " outside [0," +
                                    std::to_string(m) + ")");
    auto ln = logits.node();
    auto probs = std::make_shared<std::vector<double>>(ln->data.size());
    double loss = 0.0;
    for (int64_t r = 0; r < n; ++r) {
        const double* row = ln->data.data() + r * m;
        double mx = row[0];
        for (int64_t j = 1; j < m; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (int64_t j = 0; j < m; ++j) {
            (*probs)[static_cast<size_t>(r * m + j)] = std::exp(row[j] - mx);
            z += (*probs)[static_cast<size_t>(r * m + j)];
        }
        for (int64_t j = 0; j < m; ++j)
            (*probs)[static_cast<size_t>(r * m + j)] /= z;
        loss -= std::log((*probs)[static_cast<size_t>(r * m + targets[static_cast<size_t>(r)])]);
    }
    loss /= static_cast<double>(n);
    auto tgt = targets;
    Tensor out = make_result({1}, {ln}, [ln, probs, tgt, n, m](TensorNode& self) {
        double g = self.grad[0] / static_cast<double>(n);
        for (int64_t r = 0; r < n; ++r)
            for (int64_t j = 0; j < m; ++j) {
                double p = (*probs)[static_cast<size_t>(r * m + j)];
                double y = (j == tgt[static_cast<size_t>(r)]) ? 1.0 : 0.0;
                ln->grad[static_cast<size_t>(r * m + j)] += g * (p - y);
            }
    });
    out.data()[0] = loss;
    return out;
}

Tensor concat(const std::vector<Tensor>& xs, int64_t axis) {
    if (xs.empty()) throw std::invalid_argument("concat: no inputs");
    Shape os = xs[0].shape();
    AxisView v0 = axis_view(os, axis);
    int64_t total = 0;
    for (const auto& x : xs) {
        const Shape& s = x.shape();
        if (s.size() != os.size())
            throw std::invalid_argument("concat: rank mismatch");
        for (size_t i = 0; i < s.size(); ++i)
            if (static_cast<int64_t>(i) != axis && s[i] != os[i])
                throw std::invalid_argument("concat: shapes differ off-axis: " +
                                            shape_str(os) + " vs " + shape_str(s));
        total += s[static_cast<size_t>(axis)];
    }
    os[static_cast<size_t>(axis)] = total;
    std::vector<std::shared_ptr<TensorNode>> parents;
    for (const auto& x : xs) parents.push_back(x.node());
    auto ps = parents;
    AxisView v = v0;
    v.n = total;
    Tensor out = make_result(os, parents, [ps, v, axis](TensorNode& self) {
        int64_t off = 0;
        for (auto& p : ps) {
            int64_t pn = p->shape[static_cast<size_t>(axis)];
            if (p->requires_grad) {
                for (int64_t o = 0; o < v.outer; ++o)
                    for (int64_t i = 0; i < pn; ++i)
                        for (int64_t in = 0; in < v.inner; ++in)
                            p->grad[static_cast<size_t>((o * pn + i) * v.inner + in)] +=
                                self.grad[static_cast<size_t>(
                                    (o * v.n + off + i) * v.inner + in)];
            }
            off += pn;
        }
    });
    int64_t off = 0;
    for (auto& p : ps) {
        int64_t pn = p->shape[static_cast<size_t>(axis)];
        for (int64_t o = 0; o < v.outer; ++o)
            for (int64_t i = 0; i < pn; ++i)
                for (int64_t in = 0; in < v.inner; ++in)
                    out.data()[static_cast<size_t>((o * v.n + off + i) * v.inner + in)] =
                        p->data[static_cast<size_t>((o * pn + i) * v.inner + in)];
        off += pn;
    }
    return out;
}

Tensor slice(const Tensor& x, int64_t axis, int64_t start, int64_t len) {
    AxisView v = axis_view(x.shape(), axis);
    if (start < 0 || len < 0 || start + len > v.n)
        throw std::out_of_range("slice: [" + std::to_string(start) + "," +
                                std::to_string(start + len) + ") outside axis of " +
                                std::to_string(v.n));
    Shape os = x.shape();
    os[static_cast<size_t>(axis)] = len;
    auto xn = x.node();
    Tensor out = make_result(os, {xn}, [xn, v, start, len](TensorNode& self) {
        for (int64_t o = 0; o < v.outer; ++o)
            for (int64_t i = 0; i < len; ++i)
                for (int64_t in = 0; in < v.inner; ++in)
                    xn->grad[static_cast<size_t>((o * v.n + start + i) * v.inner + in)] +=
                        self.grad[static_cast<size_t>((o * len + i) * v.inner + in)];
    });
    for (int64_t o = 0; o < v.outer; ++o)
        for (int64_t i = 0; i < len; ++i)
            for (int64_t in = 0; in < v.inner; ++in)
                out.data()[static_cast<size_t>((o * len + i) * v.inner + in)] =
                    xn->data[static_cast<size_t>((o * v.n + start + i) * v.inner + in)];
    return out;
}

Tensor gather(const Tensor& x, int64_t axis, const std::vector<int64_t>& idx) {
    AxisView v = axis_view(x.shape(), axis);
    for (int64_t i : idx)
        if (i < 0 || i >= v.n)
            throw std::out_of_range("gather: index " + std::to_string(i) +
                                    " outside [0," + std::to_string(v.n) + ")");
    int64_t k = static_cast<int64_t>(idx.size());
    Shape os = x.shape();
    os[static_cast<size_t>(axis)] = k;
    auto xn = x.node();
    auto ids = idx;
    Tensor out = make_result(os, {xn}, [xn, v, ids, k](TensorNode& self) {
        for (int64_t o = 0; o < v.outer; ++o)
            for (int64_t i = 0; i < k; ++i)
                for (int64_t in = 0; in < v.inner; ++in)
                    xn->grad[static_cast<size_t>(
                        (o * v.n + ids[static_cast<size_t>(i)]) * v.inner + in)] +=
                        self.grad[static_cast<size_t>((o * k + i) * v.inner + in)];
    });
    for (int64_t o = 0; o < v.outer; ++o)
        for (int64_t i = 0; i < k; ++i)
            for (int64_t in = 0; in < v.inner; ++in)
                out.data()[static_cast<size_t>((o * k + i) * v.inner + in)] =
                    xn->data[static_cast<size_t>(
                        (o * v.n + ids[static_cast<size_t>(i)]) * v.inner + in)];
    return out;
}

Tensor dropout(const Tensor& x, double p, Rng& rng) {
    if (p < 0.0 || p >= 1.0)
        throw std::invalid_argument("dropout: p must be in [0,1)");
    if (p == 0.0) return x;
    auto xn = x.node();
    auto mask = std::make_shared<std::vector<double>>(xn->data.size());
    double keep = 1.0 - p;
    for (auto& m : *mask) m = (rng.uniform() < p) ? 0.0 : 1.0 / keep;
    Tensor out = make_result(x.shape(), {xn}, [xn, mask](TensorNode& self) {
        for (size_t i = 0; i < self.grad.size(); ++i)
            xn->grad[i] += self.grad[i] * (*mask)[i];
    });
    for (size_t i = 0; i < out.data().size(); ++i)
        out.data()[i] = xn->data[i] * (*mask)[i];
    return out;
}

Tensor embed_rows(const Tensor& table, const std::vector<int64_t>& ids) {
    if (table.rank() != 2)
        throw std::invalid_argument("embed_rows: table must be 2-D");
    return gather(table, 0, ids);
}

Tensor l2_normalize_rows(const Tensor& x, double eps) {
    if (x.rank() != 2)
        throw std::invalid_argument("l2_normalize_rows: input must be 2-D");
    int64_t n = x.shape()[0], d = x.shape()[1];
    auto xn = x.node();
    auto norms = std::make_shared<std::vector<double>>(static_cast<size_t>(n));
    Tensor out = make_result(x.shape(), {xn}, [xn, norms, n, d](TensorNode& self) {
        for (int64_t r = 0; r < n; ++r) {
            double nm = (*norms)[static_cast<size_t>(r)];
            double dot = 0.0;
            for (int64_t j = 0; j < d; ++j)
                dot += self.grad[static_cast<size_t>(r * d + j)] *
                       self.data[static_cast<size_t>(r * d + j)];
            for (int64_t j = 0; j < d; ++j)
                xn->grad[static_cast<size_t>(r * d + j)] +=
                    (self.grad[static_cast<size_t>(r * d + j)] -
                     self.data[static_cast<size_t>(r * d + j)] * dot) /
                    nm;
        }
    });
    for (int64_t r = 0; r < n; ++r) {
        double s = 0.0;
        for (int64_t j = 0; j < d; ++j) {
            double v = xn->data[static_cast<size_t>(r * d + j)];
            s += v * v;
        }
        double nm = std::sqrt(s) + eps;
        (*norms)[static_cast<size_t>(r)] = nm;
        for (int64_t j = 0; j < d; ++j)
            out.data()[static_cast<size_t>(r * d + j)] =
                xn->data[static_cast<size_t>(r * d + j)] / nm;
    }
    return out;
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                  double h) {
    bool old_rg = x.requires_grad();
    x.set_requires_grad(true);
    x.zero_grad();
    Tensor y = f(x);
    if (!std::isfinite(y.item()))
        throw std::runtime_error("grad_check: f(x) is not finite");
    y.backward();
    std::vector<double> analytic = x.grad();
    double max_rel = 0.0;
    for (size_t i = 0; i < x.data().size(); ++i) {
        double orig = x.data()[i];
        x.data()[i] = orig + h;
        double fp = f(x).item();
        x.data()[i] = orig - h;
        double fm = f(x).item();
        x.data()[i] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw std::runtime_error("grad_check: perturbed f(x) is not finite");
        double fd = (fp - fm) / (2.0 * h);
        double a = analytic[i];
        double denom = std::max({std::fabs(a), std::fabs(fd), 1e-8});
        max_rel = std::max(max_rel, std::fabs(a - fd) / denom);
    }
    x.set_requires_grad(old_rg);
    return max_rel;
}

}  // namespace neurovid
