#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pcv/rng.hpp"

namespace pcv {

enum class Precision : std::uint8_t { Float32 = 0, Int16 = 1, Int8 = 2 };

inline const char* precision_name(Precision p) {
    switch (p) {
        case Precision::Float32: return "float32";
        case Precision::Int16: return "int16";
        case Precision::Int8: return "int8";
    }
    return "?";
}

// Dense affine layer, weights row-major [out][in]. Working weights are kept
// in double; quantized models additionally carry the stored integers and the
// per-layer scale (w == qscale * qw element-wise).
struct Layer {
    std::string name;
    int in = 0;
    int out = 0;
    std::vector<double> w;
    std::vector<double> b;
    std::vector<std::uint8_t> mask;  // empty = dense; else out*in, 1 = kept
    double qscale = 0.0;
    std::vector<std::int32_t> qw;  // empty unless quantized

    std::size_t weight_count() const { return w.size(); }

    void init(const std::string& name_, int in_, int out_, Rng& rng, double gain) {
        name = name_;
        in = in_;
        out = out_;
        w.resize(static_cast<std::size_t>(in) * out);
        b.resize(out);
        double stddev = std::sqrt(gain / in);
        for (double& x : w) x = rng.normal(0.0, stddev);
        // Small nonzero biases keep grouped seed points (local coordinates are
        // exactly zero) off the ReLU kink.
        for (double& x : b) x = rng.normal(0.0, 0.02);
    }

    bool masked() const { return !mask.empty(); }

    void apply_mask() {
        if (mask.empty()) return;
        for (std::size_t i = 0; i < w.size(); ++i)
            if (!mask[i]) w[i] = 0.0;
    }
};

// Gradient buffer mirroring a layer stack.
struct LayerGrad {
    std::vector<double> dw;
    std::vector<double> db;

    void match(const Layer& layer) {
        dw.assign(layer.w.size(), 0.0);
        db.assign(layer.b.size(), 0.0);
    }
    void zero() {
        std::fill(dw.begin(), dw.end(), 0.0);
        std::fill(db.begin(), db.end(), 0.0);
    }
    void add_scaled(const LayerGrad& o, double s) {
        for (std::size_t i = 0; i < dw.size(); ++i) dw[i] += s * o.dw[i];
        for (std::size_t i = 0; i < db.size(); ++i) db[i] += s * o.db[i];
    }
};

namespace nn {

// y = W x + b
inline void affine(const Layer& l, const double* __restrict__ x, double* __restrict__ y) {
    const int in = l.in, out = l.out;
    const double* __restrict__ w = l.w.data();
    const double* __restrict__ b = l.b.data();
    for (int o = 0; o < out; ++o) {
        const double* __restrict__ row = w + static_cast<std::size_t>(o) * in;
        double acc = b[o];
        for (int i = 0; i < in; ++i) acc += row[i] * x[i];
        y[o] = acc;
    }
}

inline void relu(double* x, int n) {
    for (int i = 0; i < n; ++i)
        if (x[i] < 0.0) x[i] = 0.0;
}

// dy is modified in place when a relu sat in front of y (y holds post-act).
inline void relu_backward(const double* post_act, double* dy, int n) {
    for (int i = 0; i < n; ++i)
        if (post_act[i] <= 0.0) dy[i] = 0.0;
}

// dx += W^T dy ; dW += dy x^T ; db += dy. dx may be null when the input is data.
inline void affine_backward(const Layer& l, const double* __restrict__ x,
                            const double* __restrict__ dy, double* __restrict__ dx,
                            LayerGrad& g) {
    const int in = l.in, out = l.out;
    const double* __restrict__ w = l.w.data();
    double* __restrict__ dw = g.dw.data();
    double* __restrict__ db = g.db.data();
    for (int o = 0; o < out; ++o) {
        const double d = dy[o];
        if (d == 0.0) continue;
        const double* __restrict__ row = w + static_cast<std::size_t>(o) * in;
        double* __restrict__ grow = dw + static_cast<std::size_t>(o) * in;
        db[o] += d;
        if (dx) {
            for (int i = 0; i < in; ++i) {
                grow[i] += d * x[i];
                dx[i] += d * row[i];
            }
        } else {
            for (int i = 0; i < in; ++i) grow[i] += d * x[i];
        }
    }
}

}  // namespace nn

}  // namespace pcv
