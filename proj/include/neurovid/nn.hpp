#pragma once

#include <map>
#include <string>
#include <vector>

#include "neurovid/tensor.hpp"

namespace neurovid {

// Named parameter registry. Ordered by name so optimizer state and
// checkpoints are deterministic.
class ParamStore {
public:
    Tensor create(const std::string& name, const Shape& s, Rng& rng,
                  double stddev);
    Tensor create_zeros(const std::string& name, const Shape& s);
    Tensor create_ones(const std::string& name, const Shape& s);
    bool has(const std::string& name) const { return params_.count(name) > 0; }
    Tensor& at(const std::string& name);
    const std::map<std::string, Tensor>& all() const { return params_; }
    std::map<std::string, Tensor>& all() { return params_; }
    // parameters whose name starts with any of the given prefixes
    std::vector<Tensor> matching(const std::vector<std::string>& prefixes) const;
    std::vector<Tensor> trainable() const;
    void set_trainable(const std::vector<std::string>& prefixes, bool trainable);
    void set_all_trainable(bool trainable);

private:
    std::map<std::string, Tensor> params_;
};

struct Linear {
    Tensor w, b;
    Linear() = default;
    Linear(ParamStore& ps, const std::string& prefix, int64_t in, int64_t out,
           Rng& rng);
    Tensor forward(const Tensor& x) const { return add_bias(matmul(x, w), b); }
};

struct LayerNormP {
    Tensor g, b;
    LayerNormP() = default;
    LayerNormP(ParamStore& ps, const std::string& prefix, int64_t d);
    Tensor forward(const Tensor& x) const { return layer_norm(x, g, b); }
};

// captured softmax maps for interpretability; one [Tq x Tk] matrix per head
struct AttnTrace {
    std::vector<std::vector<double>> head_maps;
    int64_t tq = 0, tk = 0;
};

struct MultiheadAttention {
    int64_t heads = 1, dim = 0;
    Linear wq, wk, wv, wo;
    MultiheadAttention() = default;
    MultiheadAttention(ParamStore& ps, const std::string& prefix, int64_t dim,
                       int64_t heads, Rng& rng);
    // query [B x Tq x d] attends over kv [B x Tk x d]
    Tensor forward(const Tensor& query, const Tensor& kv,
                   AttnTrace* trace = nullptr) const;
};

struct Mlp {
    Linear fc1, fc2;
    Mlp() = default;
    Mlp(ParamStore& ps, const std::string& prefix, int64_t dim, int64_t hidden,
        Rng& rng);
    Tensor forward(const Tensor& x) const {
        return fc2.forward(gelu(fc1.forward(x)));
    }
};

// AdamW with global-norm gradient clipping
struct Adam {
    double lr = 1e-3;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    double weight_decay = 0.0;
    double clip_norm = 0.8;
    std::vector<Tensor> params;
    std::vector<std::vector<double>> m, v;
    int64_t step_count = 0;

    explicit Adam(std::vector<Tensor> ps, double lr_);
    void zero_grad();
    void step();
};

// fixed sinusoidal encoding table [n x d]
Tensor sinusoidal_positions(int64_t n, int64_t d);

// global L2 norm of all parameter gradients
double grad_global_norm(const std::vector<Tensor>& params);

}  // namespace neurovid
