#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "ucr/core.hpp"
#include "ucr/matrix.hpp"

namespace ucr {

// Small MLP encoder: tanh hidden layers, linear output layer, and a final
// row-wise L2 normalization so every embedding lands on the unit sphere.
// Forward/backward are written out by hand; gradients are exact, which the
// finite-difference suites rely on.

struct Layer {
    Matrix w;                // fan_in x fan_out
    std::vector<double> b;   // fan_out
};

struct EncoderParams {
    std::vector<Layer> layers;

    int d_in() const { return layers.front().w.rows; }
    int d_emb() const { return layers.back().w.cols; }

    size_t num_params() const {
        size_t n = 0;
        for (const Layer& l : layers) n += l.w.data.size() + l.b.size();
        return n;
    }
};

// Shape-congruent with EncoderParams; also reused as Adam moment storage.
struct Gradients {
    std::vector<Layer> layers;
};

inline Gradients zeros_like(const EncoderParams& p) {
    Gradients g;
    g.layers.reserve(p.layers.size());
    for (const Layer& l : p.layers) {
        Layer zl;
        zl.w = Matrix(l.w.rows, l.w.cols);
        zl.b.assign(l.b.size(), 0.0);
        g.layers.push_back(std::move(zl));
    }
    return g;
}

inline void accumulate(Gradients& into, const Gradients& g) {
    for (size_t l = 0; l < into.layers.size(); ++l) {
        into.layers[l].w += g.layers[l].w;
        for (size_t i = 0; i < into.layers[l].b.size(); ++i) into.layers[l].b[i] += g.layers[l].b[i];
    }
}

// Xavier-uniform weights, zero biases, drawn from the run Rng.
inline EncoderParams make_encoder(int d_in, const std::vector<int>& hidden, int d_emb, Rng& rng) {
    std::vector<int> dims;
    dims.push_back(d_in);
    for (int h : hidden) dims.push_back(h);
    dims.push_back(d_emb);

    EncoderParams p;
    for (size_t l = 0; l + 1 < dims.size(); ++l) {
        Layer layer;
        layer.w = Matrix(dims[l], dims[l + 1]);
        const double bound = std::sqrt(6.0 / (dims[l] + dims[l + 1]));
        for (double& v : layer.w.data) v = rng.uniform(-bound, bound);
        layer.b.assign(dims[l + 1], 0.0);
        p.layers.push_back(std::move(layer));
    }
    return p;
}

struct ForwardCache {
    // activations[0] is the input batch; activations[l+1] the output of layer l
    // (post-tanh for hidden layers, pre-normalization for the last).
    std::vector<Matrix> activations;
    Matrix unit;                 // normalized output rows
    std::vector<double> norms;   // per-row pre-normalization L2 norm
};

// Returns unit-norm embeddings, one row per input row. When `cache` is given
// it is filled with everything encoder_backward needs.
inline Matrix encoder_forward(const EncoderParams& p, const Matrix& batch, ForwardCache* cache = nullptr) {
    if (batch.cols != p.d_in())
        throw DataError("encoder_forward: input dimension " + std::to_string(batch.cols) +
                        " does not match encoder fan_in " + std::to_string(p.d_in()));

    const size_t num_layers = p.layers.size();
    std::vector<Matrix> acts;
    acts.reserve(num_layers + 1);
    acts.push_back(batch);

    for (size_t l = 0; l < num_layers; ++l) {
        const Layer& layer = p.layers[l];
        Matrix z = matmul(acts.back(), layer.w);
        for (int r = 0; r < z.rows; ++r) {
            double* zr = z.row(r);
            for (int c = 0; c < z.cols; ++c) zr[c] += layer.b[c];
        }
        if (l + 1 < num_layers) {
            for (double& v : z.data) v = std::tanh(v);
        }
        acts.push_back(std::move(z));
    }

    const Matrix& out = acts.back();
    Matrix unit(out.rows, out.cols);
    std::vector<double> norms(out.rows);
    for (int r = 0; r < out.rows; ++r) {
        const double n = l2_norm(out.row(r), out.cols);
        if (n < 1e-12)
            throw TrainError("encoder_forward: zero-norm embedding (row " + std::to_string(r) + ")");
        norms[r] = n;
        const double inv = 1.0 / n;
        for (int c = 0; c < out.cols; ++c) unit(r, c) = out(r, c) * inv;
    }

    if (cache) {
        cache->activations = std::move(acts);
        cache->unit = unit;
        cache->norms = std::move(norms);
    }
    return unit;
}

// Backprop from d(loss)/d(unit embeddings) to parameter gradients. The
// normalization Jacobian is (I - u u^T)/||z|| applied row-wise.
inline Gradients encoder_backward(const EncoderParams& p, const ForwardCache& cache, const Matrix& d_unit) {
    const Matrix& out = cache.activations.back();
    if (!d_unit.same_shape(out))
        throw DataError("encoder_backward: upstream gradient shape mismatch");

    Matrix delta(out.rows, out.cols);
    for (int r = 0; r < out.rows; ++r) {
        const double* u = cache.unit.row(r);
        const double* g = d_unit.row(r);
        const double proj = dot(u, g, out.cols);
        const double inv = 1.0 / cache.norms[r];
        for (int c = 0; c < out.cols; ++c) delta(r, c) = (g[c] - proj * u[c]) * inv;
    }

    Gradients grads = zeros_like(p);
    for (int l = static_cast<int>(p.layers.size()) - 1; l >= 0; --l) {
        const Matrix& input = cache.activations[l];
        Layer& gl = grads.layers[l];

        // dW = input^T * delta, db = column sums of delta
        for (int r = 0; r < input.rows; ++r) {
            const double* in_r = input.row(r);
            const double* d_r = delta.row(r);
            for (int i = 0; i < input.cols; ++i) {
                const double iv = in_r[i];
                if (iv == 0.0) continue;
                double* gw = gl.w.row(i);
                for (int j = 0; j < delta.cols; ++j) gw[j] += iv * d_r[j];
            }
            for (int j = 0; j < delta.cols; ++j) gl.b[j] += d_r[j];
        }

        if (l > 0) {
            const Matrix& w = p.layers[l].w;
            Matrix prev(input.rows, input.cols);
            for (int r = 0; r < input.rows; ++r) {
                const double* d_r = delta.row(r);
                const double* a_r = input.row(r);
                double* p_r = prev.row(r);
                for (int i = 0; i < input.cols; ++i) {
                    double s = 0.0;
                    const double* wr = w.row(i);
                    for (int j = 0; j < delta.cols; ++j) s += wr[j] * d_r[j];
                    // input to layer l is tanh output of layer l-1
                    p_r[i] = s * (1.0 - a_r[i] * a_r[i]);
                }
            }
            delta = std::move(prev);
        }
    }
    return grads;
}

struct AdamState {
    Gradients m;
    Gradients v;
    int64_t step = 0;
};

// Online encoder, its EMA copy, and the expert frozen at the previous
// domain boundary (absent while the first domain trains).
struct EncoderSet {
    EncoderParams online;
    EncoderParams momentum;
    std::optional<EncoderParams> frozen;
    AdamState opt;

    explicit EncoderSet(EncoderParams init) : online(init), momentum(std::move(init)) {
        opt.m = zeros_like(online);
        opt.v = zeros_like(online);
    }
};

// Adam with beta1=0.9, beta2=0.999, eps=1e-8. Weight decay is coupled:
// applied as an L2 term added to the gradient.
inline void adam_step(EncoderSet& set, const Gradients& grads, double lr_now, double weight_decay) {
    constexpr double beta1 = 0.9;
    constexpr double beta2 = 0.999;
    constexpr double eps = 1e-8;

    set.opt.step += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(set.opt.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(set.opt.step));

    for (size_t l = 0; l < set.online.layers.size(); ++l) {
        Layer& layer = set.online.layers[l];
        const Layer& g = grads.layers[l];
        Layer& m = set.opt.m.layers[l];
        Layer& v = set.opt.v.layers[l];
        if (!layer.w.same_shape(g.w) || layer.b.size() != g.b.size())
            throw TrainError("adam_step: gradient shape mismatch at layer " + std::to_string(l));

        auto update = [&](double& param, double grad, double& mm, double& vv) {
            const double gd = grad + weight_decay * param;
            mm = beta1 * mm + (1.0 - beta1) * gd;
            vv = beta2 * vv + (1.0 - beta2) * gd * gd;
            const double mhat = mm / bc1;
            const double vhat = vv / bc2;
            param -= lr_now * mhat / (std::sqrt(vhat) + eps);
        };

        for (size_t i = 0; i < layer.w.data.size(); ++i)
            update(layer.w.data[i], g.w.data[i], m.w.data[i], v.w.data[i]);
        for (size_t i = 0; i < layer.b.size(); ++i)
            update(layer.b[i], g.b[i], m.b[i], v.b[i]);
    }
}

// theta_m <- alpha * theta_m + (1 - alpha) * theta
inline void ema_update(EncoderSet& set, double alpha) {
    for (size_t l = 0; l < set.momentum.layers.size(); ++l) {
        Layer& m = set.momentum.layers[l];
        const Layer& o = set.online.layers[l];
        for (size_t i = 0; i < m.w.data.size(); ++i)
            m.w.data[i] = alpha * m.w.data[i] + (1.0 - alpha) * o.w.data[i];
        for (size_t i = 0; i < m.b.size(); ++i)
            m.b[i] = alpha * m.b[i] + (1.0 - alpha) * o.b[i];
    }
}

// Domain boundary handoff: the momentum encoder becomes both the frozen
// expert and the fresh online starting point; optimizer state restarts.
inline void snapshot_frozen(EncoderSet& set) {
    set.frozen = set.momentum;
    set.online = set.momentum;
    set.opt.m = zeros_like(set.online);
    set.opt.v = zeros_like(set.online);
    set.opt.step = 0;
}

// ---------------------------------------------------------------------------
// Checkpoint format: little-endian, magic "UCRW", version u32, layer count
// u32, then per layer fan_in u32, fan_out u32, weights f32 row-major, bias f32.

namespace detail {

constexpr uint32_t kCheckpointVersion = 1;

inline void put_u32(std::ostream& out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

inline uint32_t take_u32(std::istream& in, const char* what) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw DataError(std::string("truncated file: ") + what);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

inline void put_f32(std::ostream& out, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

inline float take_f32(std::istream& in, const char* what) {
    const uint32_t bits = take_u32(in, what);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

}  // namespace detail

inline void save_checkpoint(const EncoderParams& p, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint: " + path);
    out.write("UCRW", 4);
    detail::put_u32(out, detail::kCheckpointVersion);
    detail::put_u32(out, static_cast<uint32_t>(p.layers.size()));
    for (const Layer& l : p.layers) {
        detail::put_u32(out, static_cast<uint32_t>(l.w.rows));
        detail::put_u32(out, static_cast<uint32_t>(l.w.cols));
        for (double v : l.w.data) detail::put_f32(out, static_cast<float>(v));
        for (double v : l.b) detail::put_f32(out, static_cast<float>(v));
    }
    if (!out) throw DataError("write failed: " + path);
}

inline EncoderParams load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("checkpoint file not found: " + path);
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "UCRW", 4) != 0)
        throw DataError("bad magic in checkpoint: " + path);
    const uint32_t version = detail::take_u32(in, "version");
    if (version != detail::kCheckpointVersion)
        throw DataError("unsupported checkpoint version " + std::to_string(version) + " in " + path);
    const uint32_t num_layers = detail::take_u32(in, "layer count");

    EncoderParams p;
    for (uint32_t l = 0; l < num_layers; ++l) {
        const uint32_t fan_in = detail::take_u32(in, "fan_in");
        const uint32_t fan_out = detail::take_u32(in, "fan_out");
        Layer layer;
        layer.w = Matrix(static_cast<int>(fan_in), static_cast<int>(fan_out));
        for (double& v : layer.w.data) v = detail::take_f32(in, "weights");
        layer.b.resize(fan_out);
        for (double& v : layer.b) v = detail::take_f32(in, "bias");
        p.layers.push_back(std::move(layer));
    }
    return p;
}

}  // namespace ucr
