#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "pcv/catalog.hpp"
#include "pcv/csv.hpp"
#include "pcv/metrics.hpp"
#include "pcv/rng.hpp"

namespace pcv {

struct NetworkProfile {
    std::string name;
    double mean_mbps = 10.0;
    double std_mbps = 0.0;
    double delay_ms = 10.0;   // base one-way propagation delay
    double jitter_ms = 0.0;
};

// Synthetic defaults; ordering and rough magnitudes only, all configurable.
inline std::vector<NetworkProfile> default_profiles() {
    return {
        {"3G", 2.0, 0.5, 60.0, 10.0},
        {"4G", 20.0, 5.0, 40.0, 8.0},
        {"WiFi", 50.0, 10.0, 10.0, 2.0},
        {"5G", 200.0, 50.0, 15.0, 3.0},
    };
}

inline constexpr double kMinBandwidthMbps = 0.1;

struct BandwidthTrace {
    std::string name;
    std::vector<double> t;     // strictly increasing, starting at 0
    std::vector<double> mbps;  // positive
    double duration = 0.0;     // > t.back(); the trace wraps past this point

    void validate() const {
        if (t.empty() || t.size() != mbps.size())
            throw std::invalid_argument("BandwidthTrace: empty or mismatched columns");
        if (t.front() != 0.0) throw std::invalid_argument("BandwidthTrace: first sample must be at t=0");
        for (std::size_t i = 1; i < t.size(); ++i)
            if (t[i] <= t[i - 1])
                throw std::invalid_argument("BandwidthTrace: timestamps must strictly increase");
        for (double b : mbps)
            if (!(b > 0.0)) throw std::invalid_argument("BandwidthTrace: bandwidths must be positive");
        if (!(duration > t.back())) throw std::invalid_argument("BandwidthTrace: duration too short");
    }

    // piecewise-constant bandwidth, wrapping past duration
    double bandwidth_at(double time) const {
        double s = std::fmod(time, duration);
        if (s < 0) s += duration;
        std::size_t lo = 0, hi = t.size();
        while (lo + 1 < hi) {  // last sample index with t[i] <= s
            std::size_t mid = (lo + hi) / 2;
            if (t[mid] <= s) lo = mid;
            else hi = mid;
        }
        return mbps[lo];
    }
};

// One sample per interval, bandwidth = max(0.1, Normal(mean, std)).
inline BandwidthTrace synth_trace(const NetworkProfile& profile, double duration, double interval,
                                  std::uint64_t seed) {
    if (!(duration > 0.0) || !(interval > 0.0))
        throw std::invalid_argument("synth_trace: duration and interval must be positive");
    BandwidthTrace trace;
    trace.name = profile.name;
    trace.duration = duration;
    Rng rng(seed);
    for (double time = 0.0; time < duration; time += interval) {
        trace.t.push_back(time);
        trace.mbps.push_back(std::max(kMinBandwidthMbps, rng.normal(profile.mean_mbps, profile.std_mbps)));
    }
    trace.validate();
    return trace;
}

// Completion time of sending `bytes` starting at t_start: the earliest t with
// integral of bandwidth over [t_start, t] equal to 8*bytes. Exact piecewise-
// constant integration; the trace repeats when exhausted.
inline double transmit(double bytes, const BandwidthTrace& trace, double t_start) {
    if (!(bytes > 0.0)) throw std::invalid_argument("transmit: bytes must be positive");
    if (t_start < 0.0) throw std::invalid_argument("transmit: t_start must be >= 0");
    double remaining_bits = bytes * 8.0;
    double elapsed = 0.0;
    double s = std::fmod(t_start, trace.duration);
    // segment index containing s
    std::size_t i = 0, hi = trace.t.size();
    while (i + 1 < hi) {
        std::size_t mid = (i + hi) / 2;
        if (trace.t[mid] <= s) i = mid;
        else hi = mid;
    }
    for (;;) {
        double seg_end = (i + 1 < trace.t.size()) ? trace.t[i + 1] : trace.duration;
        double rate = trace.mbps[i] * 1e6;  // bits per second
        double dt_full = seg_end - s;
        double capacity = rate * dt_full;
        if (capacity >= remaining_bits) {
            elapsed += remaining_bits / rate;
            return t_start + elapsed;
        }
        remaining_bits -= capacity;
        elapsed += dt_full;
        ++i;
        if (i >= trace.t.size()) {
            i = 0;
            s = 0.0;
        } else {
            s = trace.t[i];
        }
    }
}

struct DeviceProfile {
    int level = 4;               // 1..4 -> 1,2,4,8 cores
    double base_rate = 1e9;      // multiply-accumulates per second per core

    int cores() const {
        static constexpr int kCores[4] = {1, 2, 4, 8};
        if (level < 1 || level > 4) throw std::invalid_argument("DeviceProfile: level out of 1..4");
        return kCores[level - 1];
    }
    double throughput() const { return cores() * base_rate; }
};

inline double quantization_speedup(Precision p) {
    switch (p) {
        case Precision::Int8: return 0.5;
        case Precision::Int16: return 0.75;
        case Precision::Float32: return 1.0;
    }
    return 1.0;
}

// Seconds to decode one patch on the device.
inline double decode_time(const ModelInfo& model, const DeviceProfile& device) {
    if (model.flops_decode == 0) throw std::invalid_argument("decode_time: zero flops");
    return static_cast<double>(model.flops_decode) / device.throughput() *
           quantization_speedup(model.precision);
}

// What a per-frame policy sees before choosing a model.
struct StepContext {
    std::span<const double> throughput_history;  // measured Mbps, oldest first
    double profile_mean_mbps = 0.0;
    int device_level = 1;
    double target_fps = 30.0;
    int last_action = -1;  // -1 before the first frame
    int n_actions = 0;
    int frame = 0;
};

using PolicySelector = std::function<int(const StepContext&)>;

inline PolicySelector fixed_policy(int action) {
    return [action](const StepContext&) { return action; };
}

struct FrameRecord {
    int frame = 0;
    int action = 0;
    int model_h = 0;
    double bytes = 0.0;
    double t_start = 0.0;        // trace time when transmission began
    double bw_at_start = 0.0;    // instantaneous trace bandwidth (Mbps)
    double measured_mbps = 0.0;  // throughput seen by this transmission
    double t_transmit = 0.0;
    double t_decode = 0.0;
    double t_propagation = 0.0;
    double t_total = 0.0;
    double accuracy = 0.0;
    double qoe = 0.0;
};

struct SessionResult {
    std::vector<FrameRecord> frames;
    double achieved_fps = 0.0;  // frames / sum of t_total
    double mean_qoe = 0.0;
};

struct SessionConfig {
    int n_frames = 100;
    int n_patches = kDefaultPatchCount;
    double t_budget = kDefaultFrameBudget;
    double target_fps = 30.0;
    std::uint64_t seed = 0;
    NetworkProfile profile;  // propagation delay/jitter and observe() padding
    DeviceProfile device;
    // optional exact-accuracy hook (action, frame) -> F-score; when absent the
    // catalog's measured per-model F-score is used
    std::function<double(int, int)> accuracy_fn;
};

// Frame loop: observe -> choose model -> transmit features -> decode -> QoE.
// Playout is serialized: the trace clock advances by each frame's t_total.
inline SessionResult simulate_session(const ModelCatalog& catalog, const PolicySelector& policy,
                                      const BandwidthTrace& trace, const SessionConfig& cfg) {
    if (catalog.entries.empty()) throw std::invalid_argument("simulate_session: empty catalog");
    if (cfg.n_frames < 1) throw std::invalid_argument("simulate_session: no frames");
    trace.validate();

    Rng prop_rng(cfg.seed ^ 0x9d2c5680u);
    SessionResult result;
    result.frames.reserve(cfg.n_frames);
    std::vector<double> history;
    double t_now = 0.0;
    int last_action = -1;
    double sum_total = 0.0, sum_qoe = 0.0;

    for (int f = 0; f < cfg.n_frames; ++f) {
        StepContext ctx{history, cfg.profile.mean_mbps, cfg.device.level,
                        cfg.target_fps, last_action, static_cast<int>(catalog.size()), f};
        int action = policy(ctx);
        if (action < 0 || action >= static_cast<int>(catalog.size()))
            throw std::out_of_range("simulate_session: policy chose an invalid action");
        const ModelInfo& model = catalog.info(action);

        FrameRecord rec;
        rec.frame = f;
        rec.action = action;
        rec.model_h = model.h;
        rec.bytes = static_cast<double>(cfg.n_patches) * model.bytes_per_patch;
        rec.t_start = t_now;
        rec.bw_at_start = trace.bandwidth_at(t_now);
        rec.t_transmit = transmit(rec.bytes, trace, t_now) - t_now;
        rec.t_decode = cfg.n_patches * decode_time(model, cfg.device);
        rec.t_propagation =
            std::max(0.0, prop_rng.normal(cfg.profile.delay_ms, cfg.profile.jitter_ms)) * 1e-3;
        rec.t_total = rec.t_transmit + rec.t_decode + rec.t_propagation;
        rec.measured_mbps = rec.bytes * 8.0 / rec.t_transmit / 1e6;
        rec.accuracy = cfg.accuracy_fn ? cfg.accuracy_fn(action, f) : model.fscore;
        rec.qoe = qoe(rec.accuracy, rec.t_total, cfg.t_budget).qoe;

        history.push_back(rec.measured_mbps);
        last_action = action;
        t_now += rec.t_total;
        sum_total += rec.t_total;
        sum_qoe += rec.qoe;
        result.frames.push_back(rec);
    }
    result.achieved_fps = cfg.n_frames / sum_total;
    result.mean_qoe = sum_qoe / cfg.n_frames;
    return result;
}

// Trace CSV: header "t_s,bw_mbps", one row per sample.
inline void save_trace_csv(const BandwidthTrace& trace, const std::string& path) {
    trace.validate();
    CsvWriter w(path);
    w.header({"t_s", "bw_mbps"});
    for (std::size_t i = 0; i < trace.t.size(); ++i)
        w.line({fmt_double(trace.t[i]), fmt_double(trace.mbps[i])});
    w.close();
}

// Duration defaults to last timestamp + mean sample spacing.
inline BandwidthTrace load_trace_csv(const std::string& path, double duration_hint = 0.0) {
    auto rows = read_csv(path);
    if (rows.empty() || rows[0].size() < 2 || rows[0][0] != "t_s" || rows[0][1] != "bw_mbps")
        throw std::invalid_argument("trace CSV must start with header t_s,bw_mbps");
    BandwidthTrace trace;
    trace.name = path;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        trace.t.push_back(std::stod(rows[i].at(0)));
        trace.mbps.push_back(std::stod(rows[i].at(1)));
    }
    if (trace.t.empty()) throw std::invalid_argument("trace CSV has no samples");
    if (duration_hint > 0.0) {
        trace.duration = duration_hint;
    } else {
        double spacing = trace.t.size() > 1 ? trace.t.back() / (trace.t.size() - 1) : 1.0;
        trace.duration = trace.t.back() + spacing;
    }
    trace.validate();
    return trace;
}

}  // namespace pcv
