#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <mutex>
#include <numeric>
#include <thread>

#include "pcv/codec_io.hpp"
#include "pcv/netsim.hpp"

namespace pcv {

inline constexpr int kStateDim = 8;
inline constexpr int kPolicyHidden = 32;
inline constexpr double kBandwidthNorm = 200.0;  // Mbps
inline constexpr int kBandwidthHistory = 5;

struct ControllerState {
    std::array<double, kStateDim> features{};
};

// Fixed-length feature vector: 5 bandwidth history slots (Mbps / 200, clamped
// to [0, 1.5]), device level / 4, target FPS / 30, last action (index+1)/K.
// Missing history pads with the oldest measurement; cold start pads with the
// profile mean.
inline ControllerState observe(const StepContext& ctx) {
    ControllerState s;
    const std::size_t n = ctx.throughput_history.size();
    for (int i = 0; i < kBandwidthHistory; ++i) {
        double mbps;
        std::size_t want = n + i;  // history slot i corresponds to frame n-5+i
        if (n == 0) {
            mbps = ctx.profile_mean_mbps;
        } else if (want < static_cast<std::size_t>(kBandwidthHistory)) {
            mbps = ctx.throughput_history[0];  // pad with oldest available
        } else {
            mbps = ctx.throughput_history[want - kBandwidthHistory];
        }
        s.features[i] = std::clamp(mbps / kBandwidthNorm, 0.0, 1.5);
    }
    s.features[5] = ctx.device_level / 4.0;
    s.features[6] = ctx.target_fps / 30.0;
    s.features[7] = ctx.n_actions > 0 ? (ctx.last_action + 1.0) / ctx.n_actions : 0.0;
    return s;
}

struct PolicyModel {
    int n_actions = 0;
    Layer actor1, actor2, critic1, critic2;

    static PolicyModel init(int n_actions, std::uint64_t seed) {
        if (n_actions < 1) throw std::invalid_argument("PolicyModel: need at least one action");
        PolicyModel p;
        p.n_actions = n_actions;
        Rng rng(seed);
        p.actor1.init("actor.fc1", kStateDim, kPolicyHidden, rng, 1.0);
        p.actor2.init("actor.fc2", kPolicyHidden, n_actions, rng, 1.0);
        p.critic1.init("critic.fc1", kStateDim, kPolicyHidden, rng, 1.0);
        p.critic2.init("critic.fc2", kPolicyHidden, 1, rng, 1.0);
        // near-uniform initial policy
        for (double& w : p.actor2.w) w *= 0.01;
        for (double& b : p.actor2.b) b = 0.0;
        return p;
    }

    std::array<Layer*, 4> layers() { return {&actor1, &actor2, &critic1, &critic2}; }
    std::array<const Layer*, 4> layers() const { return {&actor1, &actor2, &critic1, &critic2}; }

    std::vector<double> actor_logits(const ControllerState& s) const {
        std::vector<double> h(kPolicyHidden), out(n_actions);
        nn::affine(actor1, s.features.data(), h.data());
        for (double& x : h) x = std::tanh(x);
        nn::affine(actor2, h.data(), out.data());
        return out;
    }

    std::vector<double> action_probs(const ControllerState& s) const {
        return softmax(actor_logits(s));
    }

    double value(const ControllerState& s) const {
        std::vector<double> h(kPolicyHidden);
        nn::affine(critic1, s.features.data(), h.data());
        for (double& x : h) x = std::tanh(x);
        double v;
        nn::affine(critic2, h.data(), &v);
        return v;
    }

    static std::vector<double> softmax(std::vector<double> z) {
        double zmax = *std::max_element(z.begin(), z.end());
        double sum = 0.0;
        for (double& x : z) {
            x = std::exp(x - zmax);
            sum += x;
        }
        for (double& x : z) x /= sum;
        return z;
    }
};

enum class ActionMode { Sample, Greedy };

// Greedy: argmax probability, ties to the lowest index. Sample: seeded draw.
inline int select_action(const PolicyModel& policy, const ControllerState& s, ActionMode mode,
                         Rng* rng = nullptr) {
    std::vector<double> probs = policy.action_probs(s);
    if (mode == ActionMode::Greedy) {
        int best = 0;
        for (int i = 1; i < static_cast<int>(probs.size()); ++i)
            if (probs[i] > probs[best]) best = i;
        return best;
    }
    if (!rng) throw std::invalid_argument("select_action: sampling needs an RNG");
    double u = rng->uniform();
    double cum = 0.0;
    for (int i = 0; i < static_cast<int>(probs.size()); ++i) {
        cum += probs[i];
        if (u < cum) return i;
    }
    return static_cast<int>(probs.size()) - 1;
}

class ControllerDivergedError : public std::runtime_error {
public:
    ControllerDivergedError(int episode, const std::string& what)
        : std::runtime_error("controller training diverged at episode " + std::to_string(episode) +
                             ": " + what),
          episode(episode) {}
    int episode;
};

struct ControllerConfig {
    int episodes = 1200;
    int frames_per_episode = 50;
    double gamma = 0.99;
    double actor_lr = 1e-2;
    double critic_lr = 3e-2;
    double lr_decay_to = 0.1;  // cosine decay of both rates to this fraction
    int episodes_per_update = 4;
    double entropy_beta = 0.03;
    double entropy_beta_final = 0.001;  // cosine decay when < entropy_beta
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
    int workers = 1;  // 1 = deterministic synchronous mode
    int moving_avg_window = 100;
    // environment randomization per episode
    std::vector<NetworkProfile> profiles = default_profiles();
    std::vector<int> device_levels{1, 2, 3, 4};
    std::vector<double> demand_fps{10.0, 15.0, 30.0};  // per-episode target FPS draw
    double trace_duration = 60.0;
    double trace_interval = 0.5;
    int n_patches = kDefaultPatchCount;
};

inline double cosine_decay(double from, double to, double t) {
    return to + 0.5 * (from - to) * (1.0 + std::cos(M_PI * std::clamp(t, 0.0, 1.0)));
}

struct EpisodeStep {
    ControllerState state;
    int action = 0;
    double reward = 0.0;  // per-frame QoE, in [0,1]
    double value = 0.0;   // critic estimate at update time
};

struct EpisodeStats {
    double mean_reward = 0.0;       // mean per-frame QoE
    double discounted_return = 0.0; // G_0 at gamma
};

// Monte-Carlo advantage actor-critic updates with Adam, usable directly on a
// frozen bandit in tests.
class A2cTrainer {
public:
    A2cTrainer(PolicyModel policy, const ControllerConfig& cfg)
        : policy_(std::move(policy)), cfg_(cfg) {
        for (Layer* l : policy_.layers()) {
            grads_.emplace_back();
            grads_.back().match(*l);
            m_.emplace_back();
            m_.back().match(*l);
            v_.emplace_back();
            v_.back().match(*l);
        }
    }

    PolicyModel& policy() { return policy_; }
    const PolicyModel& policy() const { return policy_; }
    const ControllerConfig& config() const { return cfg_; }

    // Fills step.value, applies one gradient step, returns episode stats.
    EpisodeStats update(std::span<EpisodeStep> episode, int episode_index = 0) {
        begin_batch();
        EpisodeStats stats = accumulate(episode, 1.0, episode_index);
        apply_adam(episode_index);
        return stats;
    }

    // Batched variant: gradients of several episodes averaged into one step.
    void begin_batch() {
        for (auto& g : grads_) g.zero();
    }
    void end_batch(int episode_index) { apply_adam(episode_index); }

    EpisodeStats accumulate(std::span<EpisodeStep> episode, double weight, int episode_index) {
        const int T = static_cast<int>(episode.size());
        if (T == 0) throw std::invalid_argument("A2cTrainer: empty episode");

        // Episodes are truncated windows of a continuing stream, so the tail
        // bootstraps from the critic; without this the returns carry a pure
        // horizon ramp that swamps the action signal.
        std::vector<double> returns(T);
        double g_acc = policy_.value(episode[T - 1].state);
        for (int t = T - 1; t >= 0; --t) {
            g_acc = episode[t].reward + cfg_.gamma * g_acc;
            returns[t] = g_acc;
        }

        const double inv_t = weight / T;
        std::vector<double> ha(kPolicyHidden), hc(kPolicyHidden);
        std::vector<double> logits(policy_.n_actions);
        std::vector<double> dlogits(policy_.n_actions), dha(kPolicyHidden), dhc(kPolicyHidden);
        double sum_reward = 0.0;
        for (int t = 0; t < T; ++t) {
            const EpisodeStep& st = episode[t];
            sum_reward += st.reward;

            // critic forward
            nn::affine(policy_.critic1, st.state.features.data(), hc.data());
            for (double& x : hc) x = std::tanh(x);
            double value;
            nn::affine(policy_.critic2, hc.data(), &value);
            episode[t].value = value;
            double advantage = returns[t] - value;

            // actor forward
            nn::affine(policy_.actor1, st.state.features.data(), ha.data());
            for (double& x : ha) x = std::tanh(x);
            nn::affine(policy_.actor2, ha.data(), logits.data());
            std::vector<double> probs = PolicyModel::softmax(logits);

            double entropy = 0.0;
            for (double p : probs)
                if (p > 0.0) entropy -= p * std::log(p);

            // d(actor loss)/d logits, loss = -(log pi(a) * adv + beta * H) / T
            double beta = cfg_.entropy_beta_final < cfg_.entropy_beta && cfg_.episodes > 1
                              ? cosine_decay(cfg_.entropy_beta, cfg_.entropy_beta_final,
                                             static_cast<double>(episode_index) /
                                                 (cfg_.episodes - 1))
                              : cfg_.entropy_beta;
            for (int i = 0; i < policy_.n_actions; ++i) {
                double onehot = i == st.action ? 1.0 : 0.0;
                double ph = probs[i] > 0.0
                                ? probs[i] * (std::log(probs[i]) + entropy)
                                : 0.0;
                dlogits[i] = ((probs[i] - onehot) * advantage + beta * ph) * inv_t;
            }
            std::fill(dha.begin(), dha.end(), 0.0);
            nn::affine_backward(policy_.actor2, ha.data(), dlogits.data(), dha.data(), grads_[1]);
            for (int i = 0; i < kPolicyHidden; ++i) dha[i] *= 1.0 - ha[i] * ha[i];
            nn::affine_backward(policy_.actor1, st.state.features.data(), dha.data(), nullptr,
                                grads_[0]);

            // d(critic loss)/d value, loss = (value - G)^2 / T
            double dvalue = 2.0 * (value - returns[t]) * inv_t;
            std::fill(dhc.begin(), dhc.end(), 0.0);
            nn::affine_backward(policy_.critic2, hc.data(), &dvalue, dhc.data(), grads_[3]);
            for (int i = 0; i < kPolicyHidden; ++i) dhc[i] *= 1.0 - hc[i] * hc[i];
            nn::affine_backward(policy_.critic1, st.state.features.data(), dhc.data(), nullptr,
                                grads_[2]);

            if (!std::isfinite(advantage) || !std::isfinite(entropy))
                throw ControllerDivergedError(episode_index, "non-finite advantage or entropy");
        }

        EpisodeStats stats;
        stats.mean_reward = sum_reward / T;
        stats.discounted_return = returns[0];
        return stats;
    }

private:
    void apply_adam(int episode_index) {
        ++step_;
        const double bc1 = 1.0 - std::pow(cfg_.adam_beta1, static_cast<double>(step_));
        const double bc2 = 1.0 - std::pow(cfg_.adam_beta2, static_cast<double>(step_));
        double decay = 1.0;
        if (cfg_.lr_decay_to < 1.0 && cfg_.episodes > 1) {
            double t = std::min(1.0, static_cast<double>(episode_index) / (cfg_.episodes - 1));
            decay = cfg_.lr_decay_to + 0.5 * (1.0 - cfg_.lr_decay_to) * (1.0 + std::cos(M_PI * t));
        }
        auto layers = policy_.layers();
        for (std::size_t li = 0; li < layers.size(); ++li) {
            const double lr = (li < 2 ? cfg_.actor_lr : cfg_.critic_lr) * decay;
            Layer& l = *layers[li];
            auto step_param = [&](double& w, double g, double& m, double& v) {
                m = cfg_.adam_beta1 * m + (1.0 - cfg_.adam_beta1) * g;
                v = cfg_.adam_beta2 * v + (1.0 - cfg_.adam_beta2) * g * g;
                w -= lr * (m / bc1) / (std::sqrt(v / bc2) + cfg_.adam_eps);
                if (!std::isfinite(w))
                    throw ControllerDivergedError(episode_index, "non-finite weight in " + l.name);
            };
            for (std::size_t i = 0; i < l.w.size(); ++i)
                step_param(l.w[i], grads_[li].dw[i], m_[li].dw[i], v_[li].dw[i]);
            for (std::size_t i = 0; i < l.b.size(); ++i)
                step_param(l.b[i], grads_[li].db[i], m_[li].db[i], v_[li].db[i]);
        }
    }

    PolicyModel policy_;
    ControllerConfig cfg_;
    std::vector<LayerGrad> grads_, m_, v_;
    std::uint64_t step_ = 0;
};

struct ControllerTrainResult {
    PolicyModel policy;
    std::vector<EpisodeStats> episodes;

    std::vector<double> moving_average(int window) const {
        std::vector<double> ma(episodes.size());
        double acc = 0.0;
        for (std::size_t i = 0; i < episodes.size(); ++i) {
            acc += episodes[i].mean_reward;
            if (i >= static_cast<std::size_t>(window)) acc -= episodes[i - window].mean_reward;
            ma[i] = acc / std::min<std::size_t>(i + 1, window);
        }
        return ma;
    }
};

namespace controller_detail {

struct EpisodeEnv {
    NetworkProfile profile;
    DeviceProfile device;
    BandwidthTrace trace;
    double target_fps = 30.0;
};

inline EpisodeEnv draw_env(const ControllerConfig& cfg, Rng& rng) {
    EpisodeEnv env;
    env.profile = cfg.profiles[rng.below(cfg.profiles.size())];
    env.device.level = cfg.device_levels[rng.below(cfg.device_levels.size())];
    env.target_fps = cfg.demand_fps[rng.below(cfg.demand_fps.size())];
    env.trace = synth_trace(env.profile, cfg.trace_duration, cfg.trace_interval, rng.next_u64());
    return env;
}

// Runs one episode with the sampling policy; rewards are per-frame QoE.
inline std::vector<EpisodeStep> run_episode(const PolicyModel& policy, const EpisodeEnv& env,
                                            const ControllerConfig& cfg, std::uint64_t session_seed,
                                            const ModelCatalog& catalog, Rng& action_rng) {
    std::vector<EpisodeStep> steps;
    steps.reserve(cfg.frames_per_episode);
    PolicySelector selector = [&](const StepContext& ctx) {
        EpisodeStep step;
        step.state = observe(ctx);
        step.action = select_action(policy, step.state, ActionMode::Sample, &action_rng);
        steps.push_back(step);
        return step.action;
    };
    SessionConfig scfg;
    scfg.n_frames = cfg.frames_per_episode;
    scfg.n_patches = cfg.n_patches;
    scfg.t_budget = 1.0 / env.target_fps;
    scfg.target_fps = env.target_fps;
    scfg.seed = session_seed;
    scfg.profile = env.profile;
    scfg.device = env.device;
    SessionResult sr = simulate_session(catalog, selector, env.trace, scfg);
    for (std::size_t t = 0; t < steps.size(); ++t) steps[t].reward = sr.frames[t].qoe;
    return steps;
}

}  // namespace controller_detail

// Advantage actor-critic over randomized (profile, device, trace) episodes.
// workers == 1 is the deterministic synchronous mode; more workers share the
// policy A3C-style (updates applied atomically in arrival order).
inline ControllerTrainResult train_controller(const ModelCatalog& catalog,
                                              const ControllerConfig& cfg) {
    if (catalog.entries.empty()) throw std::invalid_argument("train_controller: empty catalog");
    A2cTrainer trainer(PolicyModel::init(static_cast<int>(catalog.size()), cfg.seed), cfg);
    ControllerTrainResult result;
    result.episodes.resize(cfg.episodes);

    const int k_batch = std::max(1, cfg.episodes_per_update);
    if (cfg.workers <= 1) {
        Rng env_rng(cfg.seed ^ 0xe9172a5cULL);
        Rng action_rng(cfg.seed ^ 0x51e5a3d1ULL);
        for (int e = 0; e < cfg.episodes; e += k_batch) {
            int k = std::min(k_batch, cfg.episodes - e);
            trainer.begin_batch();
            for (int i = 0; i < k; ++i) {
                controller_detail::EpisodeEnv env = controller_detail::draw_env(cfg, env_rng);
                std::vector<EpisodeStep> steps = controller_detail::run_episode(
                    trainer.policy(), env, cfg, env_rng.next_u64(), catalog, action_rng);
                result.episodes[e + i] = trainer.accumulate(steps, 1.0 / k, e + i);
            }
            trainer.end_batch(e);
        }
    } else {
        std::mutex mu;
        std::atomic<int> next{0};
        auto worker = [&](int wid) {
            Rng env_rng(cfg.seed ^ (0xe9172a5cULL + 0x9e3779b9ULL * (wid + 1)));
            Rng action_rng(cfg.seed ^ (0x51e5a3d1ULL + 0x85ebca6bULL * (wid + 1)));
            for (;;) {
                int e = next.fetch_add(k_batch);
                if (e >= cfg.episodes) break;
                int k = std::min(k_batch, cfg.episodes - e);
                PolicyModel snapshot;
                {
                    std::scoped_lock lock(mu);
                    snapshot = trainer.policy();
                }
                std::vector<std::vector<EpisodeStep>> batch(k);
                for (int i = 0; i < k; ++i) {
                    controller_detail::EpisodeEnv env = controller_detail::draw_env(cfg, env_rng);
                    batch[i] = controller_detail::run_episode(snapshot, env, cfg, env_rng.next_u64(),
                                                              catalog, action_rng);
                }
                {
                    std::scoped_lock lock(mu);
                    trainer.begin_batch();
                    for (int i = 0; i < k; ++i)
                        result.episodes[e + i] = trainer.accumulate(batch[i], 1.0 / k, e + i);
                    trainer.end_batch(e);
                }
            }
        };
        std::vector<std::thread> pool;
        for (int w = 0; w < cfg.workers; ++w) pool.emplace_back(worker, w);
        for (std::thread& t : pool) t.join();
    }
    result.policy = trainer.policy();
    return result;
}

inline PolicySelector greedy_selector(const PolicyModel& policy) {
    return [&policy](const StepContext& ctx) {
        return select_action(policy, observe(ctx), ActionMode::Greedy);
    };
}

// Spearman rank correlation with average ranks for ties; 0 when either series
// is constant.
inline double spearman(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.empty())
        throw std::invalid_argument("spearman: mismatched or empty series");
    auto ranks = [](std::span<const double> x) {
        const std::size_t n = x.size();
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) {
            return x[i] < x[j];
        });
        std::vector<double> r(n);
        std::size_t i = 0;
        while (i < n) {
            std::size_t j = i;
            while (j + 1 < n && x[idx[j + 1]] == x[idx[i]]) ++j;
            double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
            for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
            i = j + 1;
        }
        return r;
    };
    std::vector<double> ra = ranks(a), rb = ranks(b);
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= ra.size();
    mb /= rb.size();
    double cov = 0, va = 0, vb = 0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        cov += (ra[i] - ma) * (rb[i] - mb);
        va += (ra[i] - ma) * (ra[i] - ma);
        vb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (va == 0.0 || vb == 0.0) return 0.0;
    return cov / std::sqrt(va * vb);
}

struct EvalCell {
    std::string trace_name;
    int device_level = 0;
    double policy_qoe = 0.0;
    std::vector<double> fixed_qoe;  // one per catalog entry
    double best_fixed_qoe = 0.0;
    double spearman_bw_latent = 0.0;
};

struct EvalTrace {
    BandwidthTrace trace;
    NetworkProfile profile;
};

// Mean QoE of the greedy policy and of every fixed-model baseline, plus the
// bandwidth/latent-size rank correlation, per (trace, device).
inline std::vector<EvalCell> evaluate_policy(const PolicyModel& policy, const ModelCatalog& catalog,
                                             std::span<const EvalTrace> traces,
                                             std::span<const int> device_levels,
                                             const SessionConfig& base_cfg) {
    std::vector<EvalCell> cells;
    for (const EvalTrace& et : traces) {
        for (int level : device_levels) {
            SessionConfig cfg = base_cfg;
            cfg.profile = et.profile;
            cfg.device.level = level;
            EvalCell cell;
            cell.trace_name = et.trace.name;
            cell.device_level = level;
            SessionResult pr = simulate_session(catalog, greedy_selector(policy), et.trace, cfg);
            cell.policy_qoe = pr.mean_qoe;
            std::vector<double> bw, latent;
            for (const FrameRecord& fr : pr.frames) {
                bw.push_back(fr.bw_at_start);
                latent.push_back(static_cast<double>(fr.model_h) * fr.model_h);
            }
            cell.spearman_bw_latent = spearman(bw, latent);
            for (int a = 0; a < static_cast<int>(catalog.size()); ++a) {
                SessionResult fr = simulate_session(catalog, fixed_policy(a), et.trace, cfg);
                cell.fixed_qoe.push_back(fr.mean_qoe);
            }
            cell.best_fixed_qoe = *std::max_element(cell.fixed_qoe.begin(), cell.fixed_qoe.end());
            cells.push_back(std::move(cell));
        }
    }
    return cells;
}

// Policy files use the same layer container as codec model files.
inline void save_policy(const PolicyModel& policy, const std::string& path) {
    using namespace io_detail;
    ByteWriter w;
    w.put_bytes("PCVP", 4);
    w.put<std::uint32_t>(kModelVersion);
    std::size_t payload_begin = w.bytes.size();
    w.put<std::uint32_t>(static_cast<std::uint32_t>(policy.n_actions));
    for (const Layer* l : policy.layers()) write_layer(w, *l, Precision::Float32);
    w.put<std::uint64_t>(fnv1a64(w.bytes.data() + payload_begin, w.bytes.size() - payload_begin));
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ModelFileError("cannot open '" + path + "' for writing");
    out.write(reinterpret_cast<const char*>(w.bytes.data()),
              static_cast<std::streamsize>(w.bytes.size()));
    if (!out) throw ModelFileError("write failed for '" + path + "'");
}

inline PolicyModel load_policy(const std::string& path) {
    using namespace io_detail;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ModelFileError("cannot open '" + path + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    ByteReader r{bytes.data(), bytes.size()};
    const std::uint8_t* magic = r.get_bytes(4);
    if (std::memcmp(magic, "PCVP", 4) != 0) throw ModelFileError("not a policy file (bad magic)");
    std::uint32_t version = r.get<std::uint32_t>();
    if (version != kModelVersion) throw ModelFileError("policy file version mismatch");
    if (bytes.size() < r.pos + sizeof(std::uint64_t)) throw ModelFileError("policy file truncated");
    std::size_t payload_begin = r.pos;
    std::size_t payload_end = bytes.size() - sizeof(std::uint64_t);
    std::uint64_t stored;
    std::memcpy(&stored, bytes.data() + payload_end, sizeof(stored));
    if (stored != fnv1a64(bytes.data() + payload_begin, payload_end - payload_begin))
        throw ModelFileError("policy file checksum failure");
    PolicyModel p;
    p.n_actions = static_cast<int>(r.get<std::uint32_t>());
    p.actor1 = read_layer(r, Precision::Float32);
    p.actor2 = read_layer(r, Precision::Float32);
    p.critic1 = read_layer(r, Precision::Float32);
    p.critic2 = read_layer(r, Precision::Float32);
    return p;
}

}  // namespace pcv
