#pragma once

#include <algorithm>
#include <cstring>
#include <deque>
#include <fstream>
#include <span>
#include <vector>

#include "pcv/point_cloud.hpp"

namespace pcv {

class OctreeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct OctreeConfig {
    int qp = 8;   // quantization bits per axis
    int cl = 10;  // compression level; >= 5 entropy-codes the occupancy stream

    void validate() const {
        if (qp < 1 || qp > 16) throw std::invalid_argument("OctreeConfig: qp out of [1,16]");
        if (cl < 0 || cl > 10) throw std::invalid_argument("OctreeConfig: cl out of [0,10]");
    }
};

namespace octree_detail {

// Carry-less byte range coder (Subbotin style) with an adaptive order-0
// byte model. Encoder and decoder update the model identically.
class ByteModel {
public:
    ByteModel() { freq_.assign(256, 1); total_ = 256; }

    void cum_freq(int sym, std::uint32_t& cum, std::uint32_t& f) const {
        cum = 0;
        for (int s = 0; s < sym; ++s) cum += freq_[s];
        f = freq_[sym];
    }
    int find(std::uint32_t scaled, std::uint32_t& cum, std::uint32_t& f) const {
        std::uint32_t acc = 0;
        for (int s = 0; s < 256; ++s) {
            if (acc + freq_[s] > scaled) {
                cum = acc;
                f = freq_[s];
                return s;
            }
            acc += freq_[s];
        }
        cum = acc - freq_[255];
        f = freq_[255];
        return 255;
    }
    std::uint32_t total() const { return total_; }
    void update(int sym) {
        freq_[sym] += 32;
        total_ += 32;
        if (total_ >= kRescaleAt) {
            total_ = 0;
            for (auto& f : freq_) {
                f = (f + 1) / 2;
                total_ += f;
            }
        }
    }

private:
    static constexpr std::uint32_t kRescaleAt = 1u << 16;
    std::vector<std::uint32_t> freq_;
    std::uint32_t total_ = 0;
};

class RangeEncoder {
public:
    explicit RangeEncoder(std::vector<std::uint8_t>& out) : out_(out) {}

    void encode(std::uint32_t cum, std::uint32_t freq, std::uint32_t total) {
        low_ += cum * (range_ /= total);
        range_ *= freq;
        normalize();
    }
    void flush() {
        for (int i = 0; i < 4; ++i) {
            out_.push_back(static_cast<std::uint8_t>(low_ >> 24));
            low_ <<= 8;
        }
    }

private:
    void normalize() {
        while ((low_ ^ (low_ + range_)) < kTop ||
               (range_ < kBot && ((range_ = (0u - low_) & (kBot - 1)), true))) {
            out_.push_back(static_cast<std::uint8_t>(low_ >> 24));
            low_ <<= 8;
            range_ <<= 8;
        }
    }
    static constexpr std::uint32_t kTop = 1u << 24;
    static constexpr std::uint32_t kBot = 1u << 16;
    std::uint32_t low_ = 0;
    std::uint32_t range_ = 0xFFFFFFFFu;
    std::vector<std::uint8_t>& out_;
};

class RangeDecoder {
public:
    RangeDecoder(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {
        for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next_byte();
    }
    std::uint32_t decode_scaled(std::uint32_t total) {
        return (code_ - low_) / (range_ /= total);
    }
    void decode_update(std::uint32_t cum, std::uint32_t freq) {
        low_ += cum * range_;
        range_ *= freq;
        while ((low_ ^ (low_ + range_)) < kTop ||
               (range_ < kBot && ((range_ = (0u - low_) & (kBot - 1)), true))) {
            code_ = (code_ << 8) | next_byte();
            low_ <<= 8;
            range_ <<= 8;
        }
    }

private:
    std::uint8_t next_byte() {
        if (pos_ >= size_) throw OctreeError("truncated entropy-coded stream");
        return data_[pos_++];
    }
    static constexpr std::uint32_t kTop = 1u << 24;
    static constexpr std::uint32_t kBot = 1u << 16;
    const std::uint8_t* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
    std::uint32_t low_ = 0;
    std::uint32_t range_ = 0xFFFFFFFFu;
    std::uint32_t code_ = 0;
};

inline std::vector<std::uint8_t> range_encode(const std::vector<std::uint8_t>& raw) {
    std::vector<std::uint8_t> out;
    out.reserve(raw.size() / 2 + 16);
    ByteModel model;
    RangeEncoder enc(out);
    for (std::uint8_t sym : raw) {
        std::uint32_t cum, f;
        model.cum_freq(sym, cum, f);
        enc.encode(cum, f, model.total());
        model.update(sym);
    }
    enc.flush();
    return out;
}

inline std::vector<std::uint8_t> range_decode(const std::uint8_t* data, std::size_t size,
                                              std::size_t n_symbols) {
    std::vector<std::uint8_t> out;
    out.reserve(n_symbols);
    ByteModel model;
    RangeDecoder dec(data, size);
    for (std::size_t i = 0; i < n_symbols; ++i) {
        std::uint32_t scaled = dec.decode_scaled(model.total());
        std::uint32_t cum, f;
        int sym = model.find(scaled, cum, f);
        dec.decode_update(cum, f);
        model.update(sym);
        out.push_back(static_cast<std::uint8_t>(sym));
    }
    return out;
}

}  // namespace octree_detail

// Header + breadth-first occupancy byte stream. Child octant index is
// (xbit<<2)|(ybit<<1)|zbit from the level's coordinate bit; occupancy bit i
// of a node byte marks child i (LSB first). Serialized layout is
// little-endian:
//   "PCVO" u32 version  u8 qp  u8 cl  u8 flags(bit0=entropy)  u8 reserved
//   u64 point_count  u64 voxel_count  f64 bbox_min[3]  f64 extent
//   u64 raw_occupancy_size  u64 payload_size  payload bytes
struct EncodedCloud {
    int qp = 8;
    int cl = 10;
    bool entropy_coded = false;
    std::uint64_t point_count = 0;
    std::uint64_t voxel_count = 0;
    Vec3 bbox_min;
    double extent = 0.0;
    std::uint64_t raw_occupancy_size = 0;
    std::vector<std::uint8_t> payload;

    std::size_t total_bytes() const { return kHeaderSize + payload.size(); }

    static constexpr std::size_t kHeaderSize = 4 + 4 + 4 + 8 + 8 + 24 + 8 + 8 + 8;
    static constexpr std::uint32_t kVersion = 1;

    std::vector<std::uint8_t> to_bytes() const {
        std::vector<std::uint8_t> out;
        out.reserve(total_bytes());
        auto put = [&](const void* p, std::size_t n) {
            const auto* b = static_cast<const std::uint8_t*>(p);
            out.insert(out.end(), b, b + n);
        };
        put("PCVO", 4);
        std::uint32_t version = kVersion;
        put(&version, 4);
        std::uint8_t b;
        b = static_cast<std::uint8_t>(qp); put(&b, 1);
        b = static_cast<std::uint8_t>(cl); put(&b, 1);
        b = entropy_coded ? 1 : 0; put(&b, 1);
        b = 0; put(&b, 1);
        put(&point_count, 8);
        put(&voxel_count, 8);
        put(&bbox_min.x, 8);
        put(&bbox_min.y, 8);
        put(&bbox_min.z, 8);
        put(&extent, 8);
        put(&raw_occupancy_size, 8);
        std::uint64_t psize = payload.size();
        put(&psize, 8);
        put(payload.data(), payload.size());
        return out;
    }

    static EncodedCloud from_bytes(std::span<const std::uint8_t> bytes) {
        if (bytes.size() < kHeaderSize) throw OctreeError("encoded stream shorter than header");
        std::size_t pos = 0;
        auto get = [&](void* p, std::size_t n) {
            std::memcpy(p, bytes.data() + pos, n);
            pos += n;
        };
        char magic[4];
        get(magic, 4);
        if (std::memcmp(magic, "PCVO", 4) != 0) throw OctreeError("bad magic");
        std::uint32_t version;
        get(&version, 4);
        if (version != kVersion) throw OctreeError("version mismatch");
        EncodedCloud e;
        std::uint8_t b;
        get(&b, 1); e.qp = b;
        get(&b, 1); e.cl = b;
        get(&b, 1); e.entropy_coded = (b & 1) != 0;
        get(&b, 1);
        get(&e.point_count, 8);
        get(&e.voxel_count, 8);
        get(&e.bbox_min.x, 8);
        get(&e.bbox_min.y, 8);
        get(&e.bbox_min.z, 8);
        get(&e.extent, 8);
        get(&e.raw_occupancy_size, 8);
        std::uint64_t psize;
        get(&psize, 8);
        if (bytes.size() - pos < psize) throw OctreeError("truncated payload");
        e.payload.assign(bytes.begin() + pos, bytes.begin() + pos + psize);
        return e;
    }
};

inline EncodedCloud octree_encode(const PointCloud& cloud, const OctreeConfig& cfg) {
    cfg.validate();
    cloud.validate();
    const int qp = cfg.qp;
    BoundingBox bb = bounding_box(cloud.points);
    const double extent = bb.max_extent();  // cubic cell grid over the max axis extent
    const std::uint32_t cells = 1u << qp;

    std::vector<std::uint64_t> keys;
    keys.reserve(cloud.points.size());
    for (const Vec3& p : cloud.points) {
        auto cell = [&](double x, double lo) -> std::uint32_t {
            if (extent <= 0.0) return 0;
            double f = (x - lo) / extent * cells;
            auto c = static_cast<std::int64_t>(std::floor(f));
            return static_cast<std::uint32_t>(std::clamp<std::int64_t>(c, 0, cells - 1));
        };
        std::uint32_t vx = cell(p.x, bb.min.x), vy = cell(p.y, bb.min.y), vz = cell(p.z, bb.min.z);
        std::uint64_t morton = 0;
        for (int bit = 0; bit < qp; ++bit) {
            morton |= static_cast<std::uint64_t>((vx >> bit) & 1u) << (3 * bit + 2);
            morton |= static_cast<std::uint64_t>((vy >> bit) & 1u) << (3 * bit + 1);
            morton |= static_cast<std::uint64_t>((vz >> bit) & 1u) << (3 * bit);
        }
        keys.push_back(morton);
    }
    std::sort(keys.begin(), keys.end());
    keys.erase(std::unique(keys.begin(), keys.end()), keys.end());

    // breadth-first occupancy over the sorted morton ranges
    std::vector<std::uint8_t> occupancy;
    struct Node {
        std::size_t begin, end;
        int level;
    };
    std::deque<Node> queue{{0, keys.size(), 0}};
    while (!queue.empty()) {
        Node node = queue.front();
        queue.pop_front();
        if (node.level == qp) continue;  // leaf
        const int shift = 3 * (qp - 1 - node.level);
        std::uint8_t byte = 0;
        std::size_t pos = node.begin;
        for (int child = 0; child < 8 && pos < node.end; ++child) {
            std::size_t child_end = pos;
            while (child_end < node.end &&
                   static_cast<int>((keys[child_end] >> shift) & 7u) == child)
                ++child_end;
            if (child_end > pos) {
                byte |= static_cast<std::uint8_t>(1u << child);
                queue.push_back({pos, child_end, node.level + 1});
                pos = child_end;
            }
        }
        occupancy.push_back(byte);
    }

    EncodedCloud e;
    e.qp = qp;
    e.cl = cfg.cl;
    e.point_count = cloud.points.size();
    e.voxel_count = keys.size();
    e.bbox_min = bb.min;
    e.extent = extent;
    e.raw_occupancy_size = occupancy.size();
    if (cfg.cl >= 5) {
        std::vector<std::uint8_t> coded = octree_detail::range_encode(occupancy);
        if (coded.size() < occupancy.size()) {
            e.entropy_coded = true;
            e.payload = std::move(coded);
        } else {
            e.payload = std::move(occupancy);  // coder did not help, keep raw
        }
    } else {
        e.payload = std::move(occupancy);
    }
    return e;
}

inline PointCloud octree_decode(const EncodedCloud& e) {
    if (e.qp < 1 || e.qp > 16) throw OctreeError("invalid qp in header");
    const int qp = e.qp;
    const std::uint32_t cells = 1u << qp;

    std::vector<std::uint8_t> occupancy;
    if (e.entropy_coded) {
        occupancy = octree_detail::range_decode(e.payload.data(), e.payload.size(),
                                                e.raw_occupancy_size);
    } else {
        if (e.payload.size() != e.raw_occupancy_size)
            throw OctreeError("occupancy size mismatch");
        occupancy = e.payload;
    }

    PointCloud cloud;
    cloud.points.reserve(e.voxel_count);
    struct Node {
        std::uint32_t x, y, z;
        int level;
    };
    std::deque<Node> queue{{0, 0, 0, 0}};
    std::size_t pos = 0;
    const double cell = e.extent / static_cast<double>(cells);
    while (!queue.empty()) {
        Node node = queue.front();
        queue.pop_front();
        if (pos >= occupancy.size()) throw OctreeError("truncated occupancy stream");
        std::uint8_t byte = occupancy[pos++];
        if (byte == 0) throw OctreeError("empty occupancy byte in stream");
        for (int child = 0; child < 8; ++child) {
            if (!(byte & (1u << child))) continue;
            Node c{(node.x << 1) | ((child >> 2) & 1u), (node.y << 1) | ((child >> 1) & 1u),
                   (node.z << 1) | (child & 1u), node.level + 1};
            if (c.level == qp) {
                cloud.points.push_back({e.bbox_min.x + (c.x + 0.5) * cell,
                                        e.bbox_min.y + (c.y + 0.5) * cell,
                                        e.bbox_min.z + (c.z + 0.5) * cell});
            } else {
                queue.push_back(c);
            }
        }
    }
    if (pos != occupancy.size()) throw OctreeError("trailing bytes in occupancy stream");
    if (cloud.points.size() != e.voxel_count)
        throw OctreeError("occupancy/point-count mismatch: decoded " +
                          std::to_string(cloud.points.size()) + ", header says " +
                          std::to_string(e.voxel_count));
    return cloud;
}

}  // namespace pcv
