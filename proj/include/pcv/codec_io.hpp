#pragma once

#include <cstring>
#include <fstream>

#include "pcv/catalog.hpp"
#include "pcv/codec_train.hpp"

namespace pcv {

class ModelFileError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace io_detail {

inline constexpr std::uint32_t kModelVersion = 1;

inline std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t n) {
    std::uint64_t h = 14695981039346656037ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= data[i];
        h *= 1099511628211ULL;
    }
    return h;
}

struct ByteWriter {
    std::vector<std::uint8_t> bytes;
    template <typename T>
    void put(T v) {
        static_assert(std::is_trivially_copyable_v<T>);
        std::size_t off = bytes.size();
        bytes.resize(off + sizeof(T));
        std::memcpy(bytes.data() + off, &v, sizeof(T));
    }
    void put_bytes(const void* p, std::size_t n) {
        std::size_t off = bytes.size();
        bytes.resize(off + n);
        std::memcpy(bytes.data() + off, p, n);
    }
};

struct ByteReader {
    const std::uint8_t* data;
    std::size_t size;
    std::size_t pos = 0;
    template <typename T>
    T get() {
        static_assert(std::is_trivially_copyable_v<T>);
        if (pos + sizeof(T) > size) throw ModelFileError("model file truncated");
        T v;
        std::memcpy(&v, data + pos, sizeof(T));
        pos += sizeof(T);
        return v;
    }
    const std::uint8_t* get_bytes(std::size_t n) {
        if (pos + n > size) throw ModelFileError("model file truncated");
        const std::uint8_t* p = data + pos;
        pos += n;
        return p;
    }
};

inline void write_layer(ByteWriter& w, const Layer& l, Precision prec) {
    w.put<std::uint16_t>(static_cast<std::uint16_t>(l.name.size()));
    w.put_bytes(l.name.data(), l.name.size());
    w.put<std::int32_t>(l.in);
    w.put<std::int32_t>(l.out);
    w.put<std::uint8_t>(l.masked() ? 1 : 0);
    const std::size_t n = l.w.size();
    if (prec == Precision::Float32) {
        for (double x : l.w) w.put<float>(static_cast<float>(x));
    } else {
        w.put<double>(l.qscale);
        if (prec == Precision::Int8) {
            for (std::int32_t q : l.qw) w.put<std::int8_t>(static_cast<std::int8_t>(q));
        } else {
            for (std::int32_t q : l.qw) w.put<std::int16_t>(static_cast<std::int16_t>(q));
        }
    }
    for (double x : l.b) w.put<float>(static_cast<float>(x));
    if (l.masked()) {
        std::vector<std::uint8_t> bits((n + 7) / 8, 0);
        for (std::size_t i = 0; i < n; ++i)
            if (l.mask[i]) bits[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
        w.put_bytes(bits.data(), bits.size());
    }
}

inline Layer read_layer(ByteReader& r, Precision prec) {
    Layer l;
    std::uint16_t name_len = r.get<std::uint16_t>();
    const std::uint8_t* nb = r.get_bytes(name_len);
    l.name.assign(reinterpret_cast<const char*>(nb), name_len);
    l.in = r.get<std::int32_t>();
    l.out = r.get<std::int32_t>();
    if (l.in <= 0 || l.out <= 0) throw ModelFileError("model file has invalid layer dims");
    bool has_mask = r.get<std::uint8_t>() != 0;
    const std::size_t n = static_cast<std::size_t>(l.in) * l.out;
    l.w.resize(n);
    if (prec == Precision::Float32) {
        for (std::size_t i = 0; i < n; ++i) l.w[i] = static_cast<double>(r.get<float>());
    } else {
        l.qscale = r.get<double>();
        l.qw.resize(n);
        if (prec == Precision::Int8) {
            for (std::size_t i = 0; i < n; ++i) l.qw[i] = r.get<std::int8_t>();
        } else {
            for (std::size_t i = 0; i < n; ++i) l.qw[i] = r.get<std::int16_t>();
        }
        for (std::size_t i = 0; i < n; ++i) l.w[i] = l.qw[i] * l.qscale;
    }
    l.b.resize(l.out);
    for (int i = 0; i < l.out; ++i) l.b[i] = static_cast<double>(r.get<float>());
    if (has_mask) {
        const std::uint8_t* bits = r.get_bytes((n + 7) / 8);
        l.mask.resize(n);
        for (std::size_t i = 0; i < n; ++i) l.mask[i] = (bits[i / 8] >> (i % 8)) & 1u;
    }
    return l;
}

}  // namespace io_detail

inline std::vector<std::uint8_t> serialize_model(const CodecModel& m) {
    using namespace io_detail;
    ByteWriter w;
    w.put_bytes("PCVM", 4);
    w.put<std::uint32_t>(kModelVersion);
    std::size_t payload_begin = w.bytes.size();
    w.put<std::int32_t>(m.spec.h);
    w.put<std::int32_t>(m.spec.w);
    w.put<std::int32_t>(m.spec.n_per_patch);
    w.put<std::int32_t>(m.spec.sa1_centroids);
    w.put<std::int32_t>(m.spec.sa1_k);
    w.put<std::int32_t>(m.spec.sa2_centroids);
    w.put<std::int32_t>(m.spec.sa2_k);
    w.put<std::int32_t>(m.spec.coarse_points);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(m.spec.precision));
    w.put<double>(m.spec.sparsity);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(m.layers.size()));
    for (const Layer& l : m.layers) write_layer(w, l, m.spec.precision);
    std::uint64_t sum = fnv1a64(w.bytes.data() + payload_begin, w.bytes.size() - payload_begin);
    w.put<std::uint64_t>(sum);
    return std::move(w.bytes);
}

inline CodecModel deserialize_model(std::span<const std::uint8_t> bytes) {
    using namespace io_detail;
    ByteReader r{bytes.data(), bytes.size()};
    const std::uint8_t* magic = r.get_bytes(4);
    if (std::memcmp(magic, "PCVM", 4) != 0) throw ModelFileError("not a model file (bad magic)");
    std::uint32_t version = r.get<std::uint32_t>();
    if (version != kModelVersion)
        throw ModelFileError("model file version mismatch: got " + std::to_string(version) +
                             ", expected " + std::to_string(kModelVersion));
    if (bytes.size() < r.pos + sizeof(std::uint64_t)) throw ModelFileError("model file truncated");
    std::size_t payload_begin = r.pos;
    std::size_t payload_end = bytes.size() - sizeof(std::uint64_t);
    std::uint64_t stored;
    std::memcpy(&stored, bytes.data() + payload_end, sizeof(stored));
    std::uint64_t computed = fnv1a64(bytes.data() + payload_begin, payload_end - payload_begin);
    if (stored != computed) throw ModelFileError("model file checksum failure");

    CodecModel m;
    m.spec.h = r.get<std::int32_t>();
    m.spec.w = r.get<std::int32_t>();
    m.spec.n_per_patch = r.get<std::int32_t>();
    m.spec.sa1_centroids = r.get<std::int32_t>();
    m.spec.sa1_k = r.get<std::int32_t>();
    m.spec.sa2_centroids = r.get<std::int32_t>();
    m.spec.sa2_k = r.get<std::int32_t>();
    m.spec.coarse_points = r.get<std::int32_t>();
    m.spec.precision = static_cast<Precision>(r.get<std::uint8_t>());
    m.spec.sparsity = r.get<double>();
    m.spec.validate();
    std::uint32_t n_layers = r.get<std::uint32_t>();
    if (n_layers != kLayerCount) throw ModelFileError("model file has unexpected layer count");
    m.layers.reserve(n_layers);
    for (std::uint32_t i = 0; i < n_layers; ++i)
        m.layers.push_back(io_detail::read_layer(r, m.spec.precision));
    m.flops = flops_decode(m.spec);
    return m;
}

inline void save_model(const CodecModel& m, const std::string& path) {
    std::vector<std::uint8_t> bytes = serialize_model(m);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ModelFileError("cannot open '" + path + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ModelFileError("write failed for '" + path + "'");
}

inline CodecModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ModelFileError("cannot open '" + path + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return deserialize_model(bytes);
}

// ---------------------------------------------------------------------------

struct BuiltCatalog {
    ModelCatalog catalog;
    std::vector<CodecModel> models;  // same order as catalog entries
    std::vector<TrainResult> training;
    // (smaller latent index, larger latent index) pairs where held-out
    // F-score decreased with latent size
    std::vector<std::pair<int, int>> fscore_violations;
    std::vector<Patch> holdout;
};

// Trains one model per size over a shared train/holdout split, records
// per-model wire bytes, decode MACs and held-out F-score, and reports
// F-score monotonicity violations across latent sizes.
inline BuiltCatalog build_catalog(const std::vector<Patch>& dataset, const std::vector<int>& sizes,
                                  const TrainingConfig& cfg, double holdout_fraction = 0.2,
                                  int wire_bits = 32) {
    if (sizes.empty()) throw std::invalid_argument("build_catalog: no sizes given");
    if (dataset.empty()) throw std::invalid_argument("build_catalog: empty dataset");

    std::vector<int> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(cfg.seed ^ 0xa110c470ULL);
    rng.shuffle(order);
    std::size_t n_holdout =
        std::max<std::size_t>(1, static_cast<std::size_t>(holdout_fraction * dataset.size()));
    if (n_holdout >= dataset.size()) n_holdout = dataset.size() - 1;
    std::vector<Patch> holdout, trainset;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        (i < n_holdout ? holdout : trainset).push_back(dataset[order[i]]);
    }

    BuiltCatalog out;
    out.catalog.wire_bits = wire_bits;
    out.holdout = holdout;
    for (int size : sizes) {
        ModelSpec spec = ModelSpec::catalog(size);
        if (!spec.is_catalog_size())
            throw std::invalid_argument("build_catalog: inadmissible size " + std::to_string(size));
        TrainResult tr = train(spec, trainset, cfg);
        CatalogEntry entry;
        entry.info.h = spec.h;
        entry.info.w = spec.w;
        entry.info.bytes_per_patch = bytes_per_patch(spec, wire_bits);
        entry.info.flops_decode = flops_decode(spec);
        entry.info.fscore = evaluate_fscore(tr.model, holdout);
        entry.info.precision = spec.precision;
        out.catalog.entries.push_back(entry);
        out.models.push_back(tr.model);
        out.training.push_back(std::move(tr));
    }
    for (std::size_t i = 0; i < out.catalog.entries.size(); ++i) {
        for (std::size_t j = 0; j < out.catalog.entries.size(); ++j) {
            const ModelInfo& a = out.catalog.entries[i].info;
            const ModelInfo& b = out.catalog.entries[j].info;
            if (a.latent() < b.latent() && a.fscore > b.fscore)
                out.fscore_violations.emplace_back(static_cast<int>(i), static_cast<int>(j));
        }
    }
    return out;
}

}  // namespace pcv
