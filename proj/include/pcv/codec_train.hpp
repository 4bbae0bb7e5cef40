#pragma once

#include <atomic>
#include <cfenv>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <thread>

#include "pcv/codec.hpp"
#include "pcv/emd.hpp"
#include "pcv/metrics.hpp"

namespace pcv {

enum class Optimizer { SgdMomentum, Adam };

struct TrainingConfig {
    double learning_rate = 3e-3;
    double lr_final = 1e-4;  // > 0 enables cosine decay down to this rate
    int epochs = 200;
    int batch_size = 32;
    std::uint64_t seed = 0;
    double momentum = 0.9;        // SGD momentum / Adam beta1
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    Optimizer optimizer = Optimizer::Adam;
    int threads = 0;  // 0: PCVLAB_THREADS env var, else hardware concurrency

    double lr_at(int epoch) const {
        if (lr_final <= 0.0 || epochs <= 1) return learning_rate;
        double t = static_cast<double>(epoch) / (epochs - 1);
        return lr_final + 0.5 * (learning_rate - lr_final) * (1.0 + std::cos(M_PI * t));
    }
};

class TrainingDivergedError : public std::runtime_error {
public:
    TrainingDivergedError(int epoch_)
        : std::runtime_error("training diverged (non-finite loss) at epoch " +
                             std::to_string(epoch_)),
          epoch(epoch_) {}
    int epoch;
};

inline int resolve_threads(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("PCVLAB_THREADS")) {
        int n = std::atoi(env);
        if (n > 0) return n;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

namespace codec_detail {

struct Workspace {
    EncoderTrace enc;
    DecoderTrace dec;
};

// Autoencoder loss for one patch: EMD(decode(encode(patch)), patch), with
// gradients accumulated into g. Returns the loss value.
inline double patch_loss_grad(const CodecModel& m, const Patch& patch, ModelGrad& g,
                              Workspace& ws) {
    encoder_forward(m, patch.points, ws.enc);
    decoder_forward(m, ws.enc.z.data(), ws.dec);
    EmdResult e = emd_with_gradient(ws.dec.out, patch.points);
    std::vector<double> dz(m.spec.latent(), 0.0);
    decoder_backward(m, ws.dec, e.gradient, dz.data(), g);
    encoder_backward(m, ws.enc, dz.data(), g);
    return e.value;
}

inline double patch_loss(const CodecModel& m, const Patch& patch, Workspace& ws) {
    encoder_forward(m, patch.points, ws.enc);
    decoder_forward(m, ws.enc.z.data(), ws.dec);
    return emd(ws.dec.out, patch.points);
}

// Gradients of a batch are reduced in fixed chunks of kChunk patches, merged
// in chunk order, so the result is independent of the worker count.
inline constexpr int kChunk = 8;

struct BatchReducer {
    std::vector<ModelGrad> chunk_grads;
    std::vector<double> chunk_loss;
    std::vector<Workspace> workspaces;

    void prepare(const CodecModel& m, int max_chunks, int n_threads) {
        if (static_cast<int>(chunk_grads.size()) < max_chunks) {
            chunk_grads.resize(max_chunks);
            chunk_loss.resize(max_chunks);
        }
        for (ModelGrad& g : chunk_grads) g.match(m);
        if (static_cast<int>(workspaces.size()) < n_threads) workspaces.resize(n_threads);
    }

    // Returns mean loss over the batch; grad receives the mean gradient.
    double run(const CodecModel& m, const std::vector<Patch>& patches,
               std::span<const int> batch, int n_threads, ModelGrad& grad) {
        const int n = static_cast<int>(batch.size());
        const int n_chunks = (n + kChunk - 1) / kChunk;
        prepare(m, n_chunks, n_threads);

        std::atomic<int> next{0};
        auto worker = [&](int tid) {
            Workspace& ws = workspaces[tid];
            for (;;) {
                int c = next.fetch_add(1);
                if (c >= n_chunks) break;
                ModelGrad& g = chunk_grads[c];
                g.zero();
                double loss = 0.0;
                int lo = c * kChunk, hi = std::min(n, lo + kChunk);
                for (int i = lo; i < hi; ++i)
                    loss += patch_loss_grad(m, patches[batch[i]], g, ws);
                chunk_loss[c] = loss;
            }
        };
        if (n_threads <= 1 || n_chunks <= 1) {
            worker(0);
        } else {
            std::vector<std::thread> pool;
            int spawn = std::min(n_threads, n_chunks);
            pool.reserve(spawn);
            for (int t = 0; t < spawn; ++t) pool.emplace_back(worker, t);
            for (std::thread& t : pool) t.join();
        }

        grad.zero();
        double total = 0.0;
        const double inv = 1.0 / n;
        for (int c = 0; c < n_chunks; ++c) {
            grad.add_scaled(chunk_grads[c], inv);
            total += chunk_loss[c];
        }
        return total * inv;
    }
};

}  // namespace codec_detail

struct TrainResult {
    CodecModel model;                // best checkpoint
    std::vector<double> epoch_loss;  // raw per-epoch training EMD
    std::vector<double> best_loss;   // running minimum (monotone non-increasing)
    int best_epoch = 0;
};

namespace codec_detail {

// Training weights stay double; files store float32, so checkpoints are
// rounded through float32 to make serialize/deserialize lossless.
inline void canonicalize_f32(CodecModel& m) {
    for (Layer& l : m.layers) {
        for (double& x : l.w) x = static_cast<double>(static_cast<float>(x));
        for (double& x : l.b) x = static_cast<double>(static_cast<float>(x));
        l.apply_mask();
    }
}

inline void validate_dataset(const std::vector<Patch>& patches, const ModelSpec& spec) {
    if (patches.empty()) throw std::invalid_argument("train: empty dataset");
    for (const Patch& p : patches) {
        if (static_cast<int>(p.points.size()) != spec.n_per_patch)
            throw std::invalid_argument("train: patch cardinality does not match spec");
        if (!p.normalized()) throw std::invalid_argument("train: dataset patch is not normalized");
    }
}

inline TrainResult train_loop(CodecModel model, const std::vector<Patch>& patches,
                              const TrainingConfig& cfg) {
    validate_dataset(patches, model.spec);
    const int n_threads = resolve_threads(cfg.threads);
    const int n = static_cast<int>(patches.size());
    const int batch_size = std::max(1, std::min(cfg.batch_size, n));

    ModelGrad grad, velocity, second_moment;
    grad.match(model);
    velocity.match(model);
    if (cfg.optimizer == Optimizer::Adam) second_moment.match(model);
    BatchReducer reducer;
    std::uint64_t adam_step = 0;

    Rng shuffle_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);

    TrainResult result;
    result.model = model;
    double best = std::numeric_limits<double>::infinity();

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        const double lr = cfg.lr_at(epoch);
        double epoch_sum = 0.0;
        for (int start = 0; start < n; start += batch_size) {
            int end = std::min(n, start + batch_size);
            std::span<const int> batch(order.data() + start, end - start);
            double batch_loss = reducer.run(model, patches, batch, n_threads, grad);
            if (!std::isfinite(batch_loss)) throw TrainingDivergedError(epoch);
            epoch_sum += batch_loss * batch.size();

            if (cfg.optimizer == Optimizer::Adam) ++adam_step;
            const double bc1 = 1.0 - std::pow(cfg.momentum, static_cast<double>(adam_step));
            const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(adam_step));
            for (int li = 0; li < kLayerCount; ++li) {
                Layer& l = model.layers[li];
                LayerGrad& g = grad.layers[li];
                LayerGrad& v = velocity.layers[li];
                auto step = [&](double& w, double& vel, double grad_w, double* m2) {
                    if (cfg.optimizer == Optimizer::SgdMomentum) {
                        vel = cfg.momentum * vel - lr * grad_w;
                        w += vel;
                    } else {
                        vel = cfg.momentum * vel + (1.0 - cfg.momentum) * grad_w;
                        *m2 = cfg.adam_beta2 * *m2 + (1.0 - cfg.adam_beta2) * grad_w * grad_w;
                        w -= lr * (vel / bc1) / (std::sqrt(*m2 / bc2) + cfg.adam_eps);
                    }
                };
                double* m2w = cfg.optimizer == Optimizer::Adam
                                  ? second_moment.layers[li].dw.data()
                                  : nullptr;
                double* m2b = cfg.optimizer == Optimizer::Adam
                                  ? second_moment.layers[li].db.data()
                                  : nullptr;
                if (l.masked()) {
                    for (std::size_t i = 0; i < l.w.size(); ++i) {
                        if (!l.mask[i]) continue;
                        step(l.w[i], v.dw[i], g.dw[i], m2w ? m2w + i : nullptr);
                    }
                } else {
                    for (std::size_t i = 0; i < l.w.size(); ++i)
                        step(l.w[i], v.dw[i], g.dw[i], m2w ? m2w + i : nullptr);
                }
                for (std::size_t i = 0; i < l.b.size(); ++i)
                    step(l.b[i], v.db[i], g.db[i], m2b ? m2b + i : nullptr);
            }
        }
        double epoch_loss = epoch_sum / n;
        result.epoch_loss.push_back(epoch_loss);
        if (epoch_loss < best) {
            best = epoch_loss;
            result.model = model;
            result.best_epoch = epoch;
        }
        result.best_loss.push_back(best);
    }
    canonicalize_f32(result.model);
    return result;
}

}  // namespace codec_detail

// End-to-end training from a fresh seeded initialization.
inline TrainResult train(const ModelSpec& spec, const std::vector<Patch>& patches,
                         const TrainingConfig& cfg) {
    return codec_detail::train_loop(CodecModel::init(spec, cfg.seed), patches, cfg);
}

// Continues training an existing model; pruning masks are respected (masked
// weights receive no updates).
inline TrainResult fine_tune(const CodecModel& model, const std::vector<Patch>& patches,
                             const TrainingConfig& cfg) {
    if (model.spec.precision != Precision::Float32)
        throw std::invalid_argument("fine_tune: only float32 models are trainable");
    return codec_detail::train_loop(model, patches, cfg);
}

// Mean EMD of the autoencoder over a patch set (no gradients).
inline double evaluate_emd(const CodecModel& m, const std::vector<Patch>& patches) {
    codec_detail::Workspace ws;
    double sum = 0.0;
    for (const Patch& p : patches) sum += codec_detail::patch_loss(m, p, ws);
    return sum / patches.size();
}

// Mean reconstruction F-score at threshold tau over a patch set.
inline double evaluate_fscore(const CodecModel& m, const std::vector<Patch>& patches,
                              double tau = kDefaultTau) {
    codec_detail::Workspace ws;
    double sum = 0.0;
    for (const Patch& p : patches) {
        codec_detail::encoder_forward(m, p.points, ws.enc);
        codec_detail::decoder_forward(m, ws.enc.z.data(), ws.dec);
        sum += precision_recall_f(ws.dec.out, p.points, tau).fscore;
    }
    return sum / patches.size();
}

// Zeroes the given fraction of smallest-magnitude weights per layer and
// installs the pruning mask. Biases are untouched.
inline CodecModel prune(const CodecModel& model, double sparsity) {
    if (sparsity < 0.0 || sparsity >= 1.0) throw std::invalid_argument("prune: sparsity out of [0,1)");
    if (model.spec.precision != Precision::Float32)
        throw std::invalid_argument("prune: model must be float32");
    if (sparsity == 0.0) return model;

    CodecModel out = model;
    out.spec.sparsity = sparsity;
    for (Layer& l : out.layers) {
        const std::size_t n = l.w.size();
        const std::size_t k = static_cast<std::size_t>(sparsity * static_cast<double>(n));
        if (l.mask.empty()) l.mask.assign(n, 1);
        if (k == 0) continue;
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            return std::abs(l.w[a]) < std::abs(l.w[b]);
        });
        for (std::size_t i = 0; i < k; ++i) {
            l.w[idx[i]] = 0.0;
            l.mask[idx[i]] = 0;
        }
    }
    return out;
}

// Per-layer symmetric linear quantization of weights to 8 or 16 bits.
// scale = max|w| / (2^(bits-1) - 1), integers round-to-nearest-even.
inline CodecModel quantize(const CodecModel& model, int bits) {
    if (bits != 8 && bits != 16)
        throw std::invalid_argument("quantize: unsupported bit width (use 8 or 16)");
    if (model.spec.precision != Precision::Float32)
        throw std::invalid_argument("quantize: model must be float32");

    CodecModel out = model;
    out.spec.precision = bits == 8 ? Precision::Int8 : Precision::Int16;
    const double qmax = bits == 8 ? 127.0 : 32767.0;
    for (Layer& l : out.layers) {
        double maxabs = 0.0;
        for (double x : l.w) maxabs = std::max(maxabs, std::abs(x));
        l.qw.resize(l.w.size());
        if (maxabs == 0.0) {
            l.qscale = 0.0;
            std::fill(l.qw.begin(), l.qw.end(), 0);
            continue;
        }
        l.qscale = maxabs / qmax;
        for (std::size_t i = 0; i < l.w.size(); ++i) {
            double q = std::nearbyint(l.w[i] / l.qscale);  // FE_TONEAREST: half to even
            q = std::clamp(q, -qmax, qmax);
            l.qw[i] = static_cast<std::int32_t>(q);
            l.w[i] = l.qw[i] * l.qscale;  // dequantized inference path
        }
    }
    return out;
}

}  // namespace pcv
