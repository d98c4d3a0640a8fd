#include "neurovid/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace neurovid {

Tensor ParamStore::create(const std::string& name, const Shape& s, Rng& rng,
                          double stddev) {
    if (params_.count(name))
        throw std::logic_error("parameter already exists: " + name);
    Tensor t = Tensor::randn(s, rng, stddev, true);
    params_.emplace(name, t);
    return t;
}

Tensor ParamStore::create_zeros(const std::string& name, const Shape& s) {
    if (params_.count(name))
        throw std::logic_error("parameter already exists: " + name);
    Tensor t = Tensor::zeros(s, true);
    params_.emplace(name, t);
    return t;
}

Tensor ParamStore::create_ones(const std::string& name, const Shape& s) {
    if (params_.count(name))
        throw std::logic_error("parameter already exists: " + name);
    Tensor t = Tensor::full(s, 1.0, true);
    params_.emplace(name, t);
    return t;
}

Tensor& ParamStore::at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("no parameter: " + name);
    return it->second;
}

std::vector<Tensor> ParamStore::matching(
    const std::vector<std::string>& prefixes) const {
    std::vector<Tensor> out;
    for (const auto& [name, t] : params_)
        for (const auto& p : prefixes)
            if (name.rfind(p, 0) == 0) {
                out.push_back(t);
                break;
            }
    return out;
}

std::vector<Tensor> ParamStore::trainable() const {
    std::vector<Tensor> out;
    for (const auto& [name, t] : params_)
        if (t.requires_grad()) out.push_back(t);
    return out;
}

void ParamStore::set_trainable(const std::vector<std::string>& prefixes,
                               bool trainable) {
    for (auto& [name, t] : params_)
        for (const auto& p : prefixes)
            if (name.rfind(p, 0) == 0) {
                t.set_requires_grad(trainable);
                break;
            }
}

void ParamStore::set_all_trainable(bool trainable) {
    for (auto& [name, t] : params_) t.set_requires_grad(trainable);
}

Linear::Linear(ParamStore& ps, const std::string& prefix, int64_t in,
               int64_t out, Rng& rng) {
    w = ps.create(prefix + ".w", {in, out}, rng, std::sqrt(2.0 / (in + out)));
    b = ps.create_zeros(prefix + ".b", {out});
}

LayerNormP::LayerNormP(ParamStore& ps, const std::string& prefix, int64_t d) {
    g = ps.create_ones(prefix + ".g", {d});
    b = ps.create_zeros(prefix + ".b", {d});
}

MultiheadAttention::MultiheadAttention(ParamStore& ps, const std::string& prefix,
                                       int64_t dim_, int64_t heads_, Rng& rng)
    : heads(heads_), dim(dim_) {
    if (dim % heads != 0)
        throw std::invalid_argument("attention dim " + std::to_string(dim) +
                                    " not divisible by heads " +
                                    std::to_string(heads));
    wq = Linear(ps, prefix + ".q", dim, dim, rng);
    wk = Linear(ps, prefix + ".k", dim, dim, rng);
    wv = Linear(ps, prefix + ".v", dim, dim, rng);
    wo = Linear(ps, prefix + ".o", dim, dim, rng);
}

Tensor MultiheadAttention::forward(const Tensor& query, const Tensor& kv,
                                   AttnTrace* trace) const {
    if (query.rank() != 3 || kv.rank() != 3)
        throw std::invalid_argument("attention expects [B x T x d] inputs, got " +
                                    shape_str(query.shape()) + " and " +
                                    shape_str(kv.shape()));
    int64_t B = query.shape()[0], tq = query.shape()[1];
    int64_t tk = kv.shape()[1];
    int64_t dh = dim / heads;
    Tensor q = reshape(wq.forward(query), {B, tq, heads, dh});
    Tensor k = reshape(wk.forward(kv), {B, tk, heads, dh});
    Tensor v = reshape(wv.forward(kv), {B, tk, heads, dh});
    if (trace) {
        trace->head_maps.assign(static_cast<size_t>(heads),
                                std::vector<double>(static_cast<size_t>(tq * tk), 0.0));
        trace->tq = tq;
        trace->tk = tk;
    }
    std::vector<Tensor> outs;
    for (int64_t h = 0; h < heads; ++h) {
        Tensor qh = reshape(slice(q, 2, h, 1), {B, tq, dh});
        Tensor kh = reshape(slice(k, 2, h, 1), {B, tk, dh});
        Tensor vh = reshape(slice(v, 2, h, 1), {B, tk, dh});
        Tensor scores = scale(matmul(qh, transpose_last2(kh)),
                              1.0 / std::sqrt(static_cast<double>(dh)));
        Tensor attn = softmax(scores, 2);
        if (trace) {
            auto& map = trace->head_maps[static_cast<size_t>(h)];
            const auto& a = attn.data();
            for (int64_t b = 0; b < B; ++b)
                for (int64_t i = 0; i < tq * tk; ++i)
                    map[static_cast<size_t>(i)] +=
                        a[static_cast<size_t>(b * tq * tk + i)] /
                        static_cast<double>(B);
        }
        outs.push_back(matmul(attn, vh));
    }
    Tensor merged = concat(outs, 2);
    return wo.forward(merged);
}

Mlp::Mlp(ParamStore& ps, const std::string& prefix, int64_t dim, int64_t hidden,
         Rng& rng) {
    fc1 = Linear(ps, prefix + ".fc1", dim, hidden, rng);
    fc2 = Linear(ps, prefix + ".fc2", hidden, dim, rng);
}

Adam::Adam(std::vector<Tensor> ps, double lr_) : lr(lr_), params(std::move(ps)) {
    m.resize(params.size());
    v.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
        m[i].assign(params[i].data().size(), 0.0);
        v[i].assign(params[i].data().size(), 0.0);
    }
}

void Adam::zero_grad() {
    for (auto& p : params) p.zero_grad();
}

double grad_global_norm(const std::vector<Tensor>& params) {
    double s = 0.0;
    for (const auto& p : params) {
        const auto& n = p.node();
        for (double g : n->grad) s += g * g;
    }
    return std::sqrt(s);
}

void Adam::step() {
    ++step_count;
    double norm = grad_global_norm(params);
    double gscale = (clip_norm > 0.0 && norm > clip_norm) ? clip_norm / norm : 1.0;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
    for (size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i];
        auto& pd = p.data();
        auto& pg = p.grad();
        for (size_t j = 0; j < pd.size(); ++j) {
            double g = pg[j] * gscale;
            m[i][j] = beta1 * m[i][j] + (1.0 - beta1) * g;
            v[i][j] = beta2 * v[i][j] + (1.0 - beta2) * g * g;
            double mh = m[i][j] / bc1;
            double vh = v[i][j] / bc2;
            pd[j] -= lr * (mh / (std::sqrt(vh) + eps) + weight_decay * pd[j]);
        }
    }
}

Tensor sinusoidal_positions(int64_t n, int64_t d) {
    Tensor t = Tensor::zeros({n, d});
    for (int64_t pos = 0; pos < n; ++pos)
        for (int64_t i = 0; i < d; ++i) {
            double freq =
                std::pow(10000.0, -2.0 * static_cast<double>(i / 2) /
                                      static_cast<double>(d));
            double a = static_cast<double>(pos) * freq;
            t.data()[static_cast<size_t>(pos * d + i)] =
                (i % 2 == 0) ? std::sin(a) : std::cos(a);
        }
    return t;
}

}  // namespace neurovid
