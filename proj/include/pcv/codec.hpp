#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "pcv/nn.hpp"
#include "pcv/patch.hpp"
#include "pcv/sampling.hpp"

namespace pcv {

inline constexpr std::array<int, 9> kCatalogSizes{5, 6, 8, 10, 12, 14, 16, 18, 20};

// Network topology. The stage widths are fixed; the point counts scale with
// n_per_patch so tests can run a reduced variant.
struct ModelSpec {
    int h = 10;
    int w = 10;
    int n_per_patch = kDefaultPatchSize;
    int sa1_centroids = 64;
    int sa1_k = 16;
    int sa2_centroids = 16;
    int sa2_k = 8;
    int coarse_points = 512;
    Precision precision = Precision::Float32;
    double sparsity = 0.0;

    static constexpr int kE1Hidden = 32;
    static constexpr int kE1Out = 64;
    static constexpr int kE2Hidden = 64;
    static constexpr int kE2Out = 128;
    static constexpr int kDecHidden = 256;
    static constexpr int kCondDim = 32;
    static constexpr int kRefineHidden = 64;

    int latent() const { return h * w; }

    static ModelSpec catalog(int size) {
        ModelSpec s;
        s.h = s.w = size;
        return s;
    }

    // n_per_patch = 16 variant used by gradient checks.
    static ModelSpec reduced(int h_, int w_) {
        ModelSpec s;
        s.h = h_;
        s.w = w_;
        s.n_per_patch = 16;
        s.sa1_centroids = 8;
        s.sa1_k = 4;
        s.sa2_centroids = 4;
        s.sa2_k = 2;
        s.coarse_points = 32;
        return s;
    }

    void validate() const {
        if (h < 1 || w < 1) throw std::invalid_argument("ModelSpec: latent dims must be positive");
        if (n_per_patch < 4) throw std::invalid_argument("ModelSpec: n_per_patch too small");
        if (sa1_centroids > n_per_patch || sa2_centroids > sa1_centroids)
            throw std::invalid_argument("ModelSpec: centroid counts exceed available points");
        if (sa1_k > n_per_patch || sa2_k > sa1_centroids)
            throw std::invalid_argument("ModelSpec: group size exceeds available points");
        if (coarse_points < n_per_patch)
            throw std::invalid_argument("ModelSpec: coarse stage must over-generate");
        if (sparsity < 0.0 || sparsity >= 1.0)
            throw std::invalid_argument("ModelSpec: sparsity out of [0,1)");
    }

    bool is_catalog_size() const {
        if (h != w) return false;
        for (int s : kCatalogSizes)
            if (s == h) return true;
        return false;
    }

    bool operator==(const ModelSpec&) const = default;
};

// The transmitted payload for one patch.
struct FeatureMatrix {
    int h = 0;
    int w = 0;
    std::vector<double> values;  // h*w, row-major

    int size() const { return h * w; }
};

inline std::size_t bytes_per_patch(const ModelSpec& spec, int wire_bits = 32) {
    if (wire_bits != 32 && wire_bits != 16)
        throw std::invalid_argument("wire precision must be 16 or 32 bits");
    return static_cast<std::size_t>(spec.latent()) * (wire_bits / 8);
}

// Ratio of raw patch geometry to transmitted features, both at the given
// per-value bit widths.
inline double compression_ratio(const ModelSpec& spec, int wire_bits = 32, int raw_bits = 32) {
    double raw = static_cast<double>(spec.n_per_patch) * 3.0 * (raw_bits / 8.0);
    return raw / (static_cast<double>(spec.latent()) * (wire_bits / 8.0));
}

// Exact multiply-accumulate count of one decoder forward pass.
inline std::uint64_t flops_decode(const ModelSpec& spec) {
    std::uint64_t L = spec.latent();
    std::uint64_t d1 = L * ModelSpec::kDecHidden;
    std::uint64_t d2 = static_cast<std::uint64_t>(ModelSpec::kDecHidden) * 3 * spec.coarse_points;
    std::uint64_t cond = L * ModelSpec::kCondDim;
    std::uint64_t r1 = static_cast<std::uint64_t>(spec.n_per_patch) *
                       (3 + ModelSpec::kCondDim) * ModelSpec::kRefineHidden;
    std::uint64_t r2 = static_cast<std::uint64_t>(spec.n_per_patch) * ModelSpec::kRefineHidden * 3;
    return d1 + d2 + cond + r1 + r2;
}

// Layer indices in CodecModel::layers.
enum LayerId : int {
    kE1a = 0, kE1b, kE2a, kE2b, kFc,   // encoder
    kD1, kD2, kCond, kR1, kR2,         // decoder
    kLayerCount
};

struct CodecModel {
    ModelSpec spec;
    std::vector<Layer> layers;
    std::uint64_t flops = 0;

    static CodecModel init(const ModelSpec& spec, std::uint64_t seed) {
        spec.validate();
        CodecModel m;
        m.spec = spec;
        m.flops = flops_decode(spec);
        m.layers.resize(kLayerCount);
        Rng rng(seed);
        const int L = spec.latent();
        m.layers[kE1a].init("enc.sa1.mlp1", 3, ModelSpec::kE1Hidden, rng, 2.0);
        m.layers[kE1b].init("enc.sa1.mlp2", ModelSpec::kE1Hidden, ModelSpec::kE1Out, rng, 2.0);
        m.layers[kE2a].init("enc.sa2.mlp1", ModelSpec::kE1Out + 3, ModelSpec::kE2Hidden, rng, 2.0);
        m.layers[kE2b].init("enc.sa2.mlp2", ModelSpec::kE2Hidden, ModelSpec::kE2Out, rng, 2.0);
        m.layers[kFc].init("enc.fc", ModelSpec::kE2Out, L, rng, 1.0);
        m.layers[kD1].init("dec.fc1", L, ModelSpec::kDecHidden, rng, 2.0);
        m.layers[kD2].init("dec.coarse", ModelSpec::kDecHidden, 3 * spec.coarse_points, rng, 1.0);
        m.layers[kCond].init("dec.cond", L, ModelSpec::kCondDim, rng, 1.0);
        m.layers[kR1].init("dec.refine1", 3 + ModelSpec::kCondDim, ModelSpec::kRefineHidden, rng, 2.0);
        m.layers[kR2].init("dec.refine2", ModelSpec::kRefineHidden, 3, rng, 1.0);
        return m;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const Layer& l : layers) n += l.w.size() + l.b.size();
        return n;
    }
};

struct ModelGrad {
    std::vector<LayerGrad> layers;

    void match(const CodecModel& m) {
        layers.resize(m.layers.size());
        for (std::size_t i = 0; i < layers.size(); ++i) layers[i].match(m.layers[i]);
    }
    void zero() {
        for (LayerGrad& g : layers) g.zero();
    }
    void add_scaled(const ModelGrad& o, double s) {
        for (std::size_t i = 0; i < layers.size(); ++i) layers[i].add_scaled(o.layers[i], s);
    }
};

namespace codec_detail {

// Cached activations of one encoder pass.
struct EncoderTrace {
    std::vector<int> seeds1, groups1;
    std::vector<Vec3> pos1;
    std::vector<double> in1, h1, o1, f1;
    std::vector<int> amax1;
    std::vector<int> seeds2, groups2;
    std::vector<Vec3> pos2;
    std::vector<double> in2, h2, o2, f2;
    std::vector<int> amax2;
    std::vector<double> g;
    std::vector<int> amaxg;
    std::vector<double> z;
    // backward scratch, reused across calls
    std::vector<double> bk_dg, bk_df2, bk_do2, bk_df1, bk_dh2, bk_din2, bk_do1, bk_dh1;
};

struct DecoderTrace {
    std::vector<double> z_input;
    std::vector<double> a1, coarse;
    std::vector<Vec3> coarse_pts;
    std::vector<int> sel;
    std::vector<double> cond, rin, rh;
    std::vector<Vec3> out;
    // backward scratch, reused across calls
    std::vector<double> bk_dcond, bk_dcoarse, bk_drh, bk_drin, bk_da1;
};

inline void encoder_forward(const CodecModel& m, std::span<const Vec3> pts, EncoderTrace& t) {
    const ModelSpec& s = m.spec;
    const int c1 = s.sa1_centroids, k1 = s.sa1_k;
    const int c2 = s.sa2_centroids, k2 = s.sa2_k;
    constexpr int e1h = ModelSpec::kE1Hidden, e1o = ModelSpec::kE1Out;
    constexpr int e2h = ModelSpec::kE2Hidden, e2o = ModelSpec::kE2Out;

    // stage 1: sample, group, shared MLP, max-pool
    t.seeds1 = farthest_point_sample(pts, c1, 0);
    t.pos1.resize(c1);
    for (int c = 0; c < c1; ++c) t.pos1[c] = pts[t.seeds1[c]];
    t.groups1.resize(static_cast<std::size_t>(c1) * k1);
    t.in1.resize(static_cast<std::size_t>(c1) * k1 * 3);
    for (int c = 0; c < c1; ++c) {
        std::vector<int> g = knn_group(pts, t.pos1[c], k1);
        for (int k = 0; k < k1; ++k) {
            int row = c * k1 + k;
            t.groups1[row] = g[k];
            Vec3 local = pts[g[k]] - t.pos1[c];
            t.in1[row * 3 + 0] = local.x;
            t.in1[row * 3 + 1] = local.y;
            t.in1[row * 3 + 2] = local.z;
        }
    }
    const int rows1 = c1 * k1;
    t.h1.resize(static_cast<std::size_t>(rows1) * e1h);
    t.o1.resize(static_cast<std::size_t>(rows1) * e1o);
    for (int r = 0; r < rows1; ++r) {
        nn::affine(m.layers[kE1a], t.in1.data() + r * 3, t.h1.data() + static_cast<std::size_t>(r) * e1h);
        nn::relu(t.h1.data() + static_cast<std::size_t>(r) * e1h, e1h);
        nn::affine(m.layers[kE1b], t.h1.data() + static_cast<std::size_t>(r) * e1h,
                   t.o1.data() + static_cast<std::size_t>(r) * e1o);
        nn::relu(t.o1.data() + static_cast<std::size_t>(r) * e1o, e1o);
    }
    t.f1.assign(static_cast<std::size_t>(c1) * e1o, 0.0);
    t.amax1.assign(static_cast<std::size_t>(c1) * e1o, 0);
    for (int c = 0; c < c1; ++c) {
        for (int ch = 0; ch < e1o; ++ch) {
            double best = t.o1[static_cast<std::size_t>(c * k1) * e1o + ch];
            int arg = c * k1;
            for (int k = 1; k < k1; ++k) {
                double v = t.o1[static_cast<std::size_t>(c * k1 + k) * e1o + ch];
                if (v > best) {
                    best = v;
                    arg = c * k1 + k;
                }
            }
            t.f1[static_cast<std::size_t>(c) * e1o + ch] = best;
            t.amax1[static_cast<std::size_t>(c) * e1o + ch] = arg;
        }
    }

    // stage 2 over the stage-1 centroids
    t.seeds2 = farthest_point_sample(t.pos1, c2, 0);
    t.pos2.resize(c2);
    for (int c = 0; c < c2; ++c) t.pos2[c] = t.pos1[t.seeds2[c]];
    const int in2dim = e1o + 3;
    t.groups2.resize(static_cast<std::size_t>(c2) * k2);
    t.in2.resize(static_cast<std::size_t>(c2) * k2 * in2dim);
    for (int c = 0; c < c2; ++c) {
        std::vector<int> g = knn_group(t.pos1, t.pos2[c], k2);
        for (int k = 0; k < k2; ++k) {
            int row = c * k2 + k;
            t.groups2[row] = g[k];
            double* dst = t.in2.data() + static_cast<std::size_t>(row) * in2dim;
            const double* feat = t.f1.data() + static_cast<std::size_t>(g[k]) * e1o;
            for (int i = 0; i < e1o; ++i) dst[i] = feat[i];
            Vec3 local = t.pos1[g[k]] - t.pos2[c];
            dst[e1o + 0] = local.x;
            dst[e1o + 1] = local.y;
            dst[e1o + 2] = local.z;
        }
    }
    const int rows2 = c2 * k2;
    t.h2.resize(static_cast<std::size_t>(rows2) * e2h);
    t.o2.resize(static_cast<std::size_t>(rows2) * e2o);
    for (int r = 0; r < rows2; ++r) {
        nn::affine(m.layers[kE2a], t.in2.data() + static_cast<std::size_t>(r) * in2dim,
                   t.h2.data() + static_cast<std::size_t>(r) * e2h);
        nn::relu(t.h2.data() + static_cast<std::size_t>(r) * e2h, e2h);
        nn::affine(m.layers[kE2b], t.h2.data() + static_cast<std::size_t>(r) * e2h,
                   t.o2.data() + static_cast<std::size_t>(r) * e2o);
        nn::relu(t.o2.data() + static_cast<std::size_t>(r) * e2o, e2o);
    }
    t.f2.assign(static_cast<std::size_t>(c2) * e2o, 0.0);
    t.amax2.assign(static_cast<std::size_t>(c2) * e2o, 0);
    for (int c = 0; c < c2; ++c) {
        for (int ch = 0; ch < e2o; ++ch) {
            double best = t.o2[static_cast<std::size_t>(c * k2) * e2o + ch];
            int arg = c * k2;
            for (int k = 1; k < k2; ++k) {
                double v = t.o2[static_cast<std::size_t>(c * k2 + k) * e2o + ch];
                if (v > best) {
                    best = v;
                    arg = c * k2 + k;
                }
            }
            t.f2[static_cast<std::size_t>(c) * e2o + ch] = best;
            t.amax2[static_cast<std::size_t>(c) * e2o + ch] = arg;
        }
    }

    // global max-pool + linear head
    t.g.resize(e2o);
    t.amaxg.resize(e2o);
    for (int ch = 0; ch < e2o; ++ch) {
        double best = t.f2[ch];
        int arg = 0;
        for (int c = 1; c < c2; ++c) {
            double v = t.f2[static_cast<std::size_t>(c) * e2o + ch];
            if (v > best) {
                best = v;
                arg = c;
            }
        }
        t.g[ch] = best;
        t.amaxg[ch] = arg;
    }
    t.z.resize(s.latent());
    nn::affine(m.layers[kFc], t.g.data(), t.z.data());
}

// Accumulates weight gradients; input points are data so no dx flows out.
inline void encoder_backward(const CodecModel& m, EncoderTrace& t, const double* dz,
                             ModelGrad& g) {
    const ModelSpec& s = m.spec;
    const int c1 = s.sa1_centroids, k1 = s.sa1_k;
    const int c2 = s.sa2_centroids, k2 = s.sa2_k;
    constexpr int e1h = ModelSpec::kE1Hidden, e1o = ModelSpec::kE1Out;
    constexpr int e2h = ModelSpec::kE2Hidden, e2o = ModelSpec::kE2Out;
    const int in2dim = e1o + 3;

    t.bk_dg.assign(e2o, 0.0);
    nn::affine_backward(m.layers[kFc], t.g.data(), dz, t.bk_dg.data(), g.layers[kFc]);

    t.bk_df2.assign(static_cast<std::size_t>(c2) * e2o, 0.0);
    for (int ch = 0; ch < e2o; ++ch)
        t.bk_df2[static_cast<std::size_t>(t.amaxg[ch]) * e2o + ch] += t.bk_dg[ch];

    t.bk_do2.assign(static_cast<std::size_t>(c2 * k2) * e2o, 0.0);
    for (int c = 0; c < c2; ++c)
        for (int ch = 0; ch < e2o; ++ch)
            t.bk_do2[static_cast<std::size_t>(t.amax2[static_cast<std::size_t>(c) * e2o + ch]) * e2o +
                     ch] += t.bk_df2[static_cast<std::size_t>(c) * e2o + ch];

    t.bk_df1.assign(static_cast<std::size_t>(c1) * e1o, 0.0);
    t.bk_dh2.resize(e2h);
    t.bk_din2.resize(in2dim);
    for (int r = 0; r < c2 * k2; ++r) {
        double* do2r = t.bk_do2.data() + static_cast<std::size_t>(r) * e2o;
        nn::relu_backward(t.o2.data() + static_cast<std::size_t>(r) * e2o, do2r, e2o);
        std::fill(t.bk_dh2.begin(), t.bk_dh2.end(), 0.0);
        nn::affine_backward(m.layers[kE2b], t.h2.data() + static_cast<std::size_t>(r) * e2h, do2r,
                            t.bk_dh2.data(), g.layers[kE2b]);
        nn::relu_backward(t.h2.data() + static_cast<std::size_t>(r) * e2h, t.bk_dh2.data(), e2h);
        std::fill(t.bk_din2.begin(), t.bk_din2.end(), 0.0);
        nn::affine_backward(m.layers[kE2a], t.in2.data() + static_cast<std::size_t>(r) * in2dim,
                            t.bk_dh2.data(), t.bk_din2.data(), g.layers[kE2a]);
        double* dst = t.bk_df1.data() + static_cast<std::size_t>(t.groups2[r]) * e1o;
        for (int i = 0; i < e1o; ++i) dst[i] += t.bk_din2[i];  // relative positions are data
    }

    t.bk_do1.assign(static_cast<std::size_t>(c1 * k1) * e1o, 0.0);
    for (int c = 0; c < c1; ++c)
        for (int ch = 0; ch < e1o; ++ch)
            t.bk_do1[static_cast<std::size_t>(t.amax1[static_cast<std::size_t>(c) * e1o + ch]) * e1o +
                     ch] += t.bk_df1[static_cast<std::size_t>(c) * e1o + ch];

    t.bk_dh1.resize(e1h);
    for (int r = 0; r < c1 * k1; ++r) {
        double* do1r = t.bk_do1.data() + static_cast<std::size_t>(r) * e1o;
        nn::relu_backward(t.o1.data() + static_cast<std::size_t>(r) * e1o, do1r, e1o);
        std::fill(t.bk_dh1.begin(), t.bk_dh1.end(), 0.0);
        nn::affine_backward(m.layers[kE1b], t.h1.data() + static_cast<std::size_t>(r) * e1h, do1r,
                            t.bk_dh1.data(), g.layers[kE1b]);
        nn::relu_backward(t.h1.data() + static_cast<std::size_t>(r) * e1h, t.bk_dh1.data(), e1h);
        nn::affine_backward(m.layers[kE1a], t.in1.data() + r * 3, t.bk_dh1.data(), nullptr,
                            g.layers[kE1a]);
    }
}

inline void decoder_forward(const CodecModel& m, const double* z, DecoderTrace& t) {
    const ModelSpec& s = m.spec;
    constexpr int dh = ModelSpec::kDecHidden, cd = ModelSpec::kCondDim, rh = ModelSpec::kRefineHidden;
    const int n = s.n_per_patch, cp = s.coarse_points;
    const int rin_dim = 3 + cd;

    t.z_input.assign(z, z + s.latent());
    t.a1.resize(dh);
    nn::affine(m.layers[kD1], z, t.a1.data());
    nn::relu(t.a1.data(), dh);

    t.coarse.resize(static_cast<std::size_t>(cp) * 3);
    nn::affine(m.layers[kD2], t.a1.data(), t.coarse.data());
    t.coarse_pts.resize(cp);
    for (int i = 0; i < cp; ++i)
        t.coarse_pts[i] = {t.coarse[i * 3], t.coarse[i * 3 + 1], t.coarse[i * 3 + 2]};

    t.sel = farthest_point_sample(t.coarse_pts, n, 0);

    t.cond.resize(cd);
    nn::affine(m.layers[kCond], z, t.cond.data());

    t.rin.resize(static_cast<std::size_t>(n) * rin_dim);
    t.rh.resize(static_cast<std::size_t>(n) * rh);
    t.out.resize(n);
    std::array<double, 3> off;
    for (int i = 0; i < n; ++i) {
        const Vec3& p = t.coarse_pts[t.sel[i]];
        double* rin = t.rin.data() + static_cast<std::size_t>(i) * rin_dim;
        rin[0] = p.x;
        rin[1] = p.y;
        rin[2] = p.z;
        for (int c = 0; c < cd; ++c) rin[3 + c] = t.cond[c];
        double* rhp = t.rh.data() + static_cast<std::size_t>(i) * rh;
        nn::affine(m.layers[kR1], rin, rhp);
        nn::relu(rhp, rh);
        nn::affine(m.layers[kR2], rhp, off.data());
        t.out[i] = {p.x + off[0], p.y + off[1], p.z + off[2]};
    }
}

// dout: gradient w.r.t. the n output points. Returns gradient accumulated
// into dz (caller-provided, already sized L and zeroed or accumulating).
inline void decoder_backward(const CodecModel& m, DecoderTrace& t, std::span<const Vec3> dout,
                             double* dz, ModelGrad& g) {
    const ModelSpec& s = m.spec;
    constexpr int dh = ModelSpec::kDecHidden, cd = ModelSpec::kCondDim, rh = ModelSpec::kRefineHidden;
    const int n = s.n_per_patch, cp = s.coarse_points;
    const int rin_dim = 3 + cd;

    t.bk_dcond.assign(cd, 0.0);
    t.bk_dcoarse.assign(static_cast<std::size_t>(cp) * 3, 0.0);
    t.bk_drh.resize(rh);
    t.bk_drin.resize(rin_dim);
    std::array<double, 3> doff;
    for (int i = 0; i < n; ++i) {
        doff = {dout[i].x, dout[i].y, dout[i].z};
        std::fill(t.bk_drh.begin(), t.bk_drh.end(), 0.0);
        nn::affine_backward(m.layers[kR2], t.rh.data() + static_cast<std::size_t>(i) * rh,
                            doff.data(), t.bk_drh.data(), g.layers[kR2]);
        nn::relu_backward(t.rh.data() + static_cast<std::size_t>(i) * rh, t.bk_drh.data(), rh);
        std::fill(t.bk_drin.begin(), t.bk_drin.end(), 0.0);
        nn::affine_backward(m.layers[kR1], t.rin.data() + static_cast<std::size_t>(i) * rin_dim,
                            t.bk_drh.data(), t.bk_drin.data(), g.layers[kR1]);
        double* dc = t.bk_dcoarse.data() + static_cast<std::size_t>(t.sel[i]) * 3;
        dc[0] += dout[i].x + t.bk_drin[0];  // identity path + refine input path
        dc[1] += dout[i].y + t.bk_drin[1];
        dc[2] += dout[i].z + t.bk_drin[2];
        for (int c = 0; c < cd; ++c) t.bk_dcond[c] += t.bk_drin[3 + c];
    }

    nn::affine_backward(m.layers[kCond], t.z_input.data(), t.bk_dcond.data(), dz, g.layers[kCond]);

    t.bk_da1.assign(dh, 0.0);
    nn::affine_backward(m.layers[kD2], t.a1.data(), t.bk_dcoarse.data(), t.bk_da1.data(),
                        g.layers[kD2]);
    nn::relu_backward(t.a1.data(), t.bk_da1.data(), dh);
    nn::affine_backward(m.layers[kD1], t.z_input.data(), t.bk_da1.data(), dz, g.layers[kD1]);
}

}  // namespace codec_detail

// Deterministic feature extraction from a normalized patch.
inline FeatureMatrix encode(const CodecModel& model, const Patch& patch) {
    if (static_cast<int>(patch.points.size()) != model.spec.n_per_patch)
        throw std::invalid_argument("encode: patch has wrong cardinality");
    if (!patch.normalized()) throw std::invalid_argument("encode: patch is not normalized");
    codec_detail::EncoderTrace t;
    codec_detail::encoder_forward(model, patch.points, t);
    FeatureMatrix fm;
    fm.h = model.spec.h;
    fm.w = model.spec.w;
    fm.values = std::move(t.z);
    return fm;
}

// Reconstruction in the normalized patch frame: coarse points, farthest point
// downsampling, latent-conditioned refinement offsets.
inline Patch decode(const CodecModel& model, const FeatureMatrix& fm) {
    if (fm.h != model.spec.h || fm.w != model.spec.w || fm.size() != static_cast<int>(fm.values.size()))
        throw std::invalid_argument("decode: feature matrix dimension mismatch");
    codec_detail::DecoderTrace t;
    codec_detail::decoder_forward(model, fm.values.data(), t);
    Patch p;
    p.points = std::move(t.out);
    p.centroid = {0, 0, 0};
    p.scale = 1.0;
    return p;
}

}  // namespace pcv
