#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pcv/codec.hpp"

namespace pcv {

// Catalog metadata: everything the simulator and controller need to know
// about a trained model without loading its weights.
struct ModelInfo {
    int h = 0;
    int w = 0;
    std::size_t bytes_per_patch = 0;
    std::uint64_t flops_decode = 0;
    double fscore = 0.0;
    Precision precision = Precision::Float32;

    int latent() const { return h * w; }
};

struct CatalogEntry {
    ModelInfo info;
    std::string file;  // model file, relative to the manifest
};

struct ModelCatalog {
    std::vector<CatalogEntry> entries;
    int wire_bits = 32;

    std::size_t size() const { return entries.size(); }
    const ModelInfo& info(int action) const { return entries.at(action).info; }
};

inline nlohmann::ordered_json catalog_to_json(const ModelCatalog& c) {
    nlohmann::ordered_json j;
    j["wire_bits"] = c.wire_bits;
    j["models"] = nlohmann::ordered_json::array();
    for (const CatalogEntry& e : c.entries) {
        nlohmann::ordered_json m;
        m["h"] = e.info.h;
        m["w"] = e.info.w;
        m["bytes_per_patch"] = e.info.bytes_per_patch;
        m["flops_decode"] = e.info.flops_decode;
        m["fscore"] = e.info.fscore;
        m["precision"] = precision_name(e.info.precision);
        m["file"] = e.file;
        j["models"].push_back(m);
    }
    return j;
}

inline ModelCatalog catalog_from_json(const nlohmann::json& j) {
    ModelCatalog c;
    c.wire_bits = j.at("wire_bits").get<int>();
    for (const auto& m : j.at("models")) {
        CatalogEntry e;
        e.info.h = m.at("h").get<int>();
        e.info.w = m.at("w").get<int>();
        e.info.bytes_per_patch = m.at("bytes_per_patch").get<std::size_t>();
        e.info.flops_decode = m.at("flops_decode").get<std::uint64_t>();
        e.info.fscore = m.at("fscore").get<double>();
        std::string p = m.at("precision").get<std::string>();
        e.info.precision = p == "int8"    ? Precision::Int8
                           : p == "int16" ? Precision::Int16
                                          : Precision::Float32;
        e.file = m.value("file", "");
        c.entries.push_back(e);
    }
    return c;
}

inline void save_catalog(const ModelCatalog& c, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << catalog_to_json(c).dump(2) << '\n';
}

inline ModelCatalog load_catalog(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    nlohmann::json j;
    in >> j;
    return catalog_from_json(j);
}

}  // namespace pcv
