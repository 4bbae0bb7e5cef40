#pragma once

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "pcv/point_cloud.hpp"

namespace pcv {

// Parse/write errors carry the byte offset where the problem was detected.
class PlyError : public std::runtime_error {
public:
    PlyError(const std::string& what, std::size_t byte_offset)
        : std::runtime_error(what + " (byte offset " + std::to_string(byte_offset) + ")"),
          offset(byte_offset) {}
    std::size_t offset;
};

namespace ply_detail {

enum class ScalarType { Char, UChar, Short, UShort, Int, UInt, Float, Double };

inline std::size_t scalar_size(ScalarType t) {
    switch (t) {
        case ScalarType::Char:
        case ScalarType::UChar: return 1;
        case ScalarType::Short:
        case ScalarType::UShort: return 2;
        case ScalarType::Int:
        case ScalarType::UInt:
        case ScalarType::Float: return 4;
        case ScalarType::Double: return 8;
    }
    return 0;
}

inline bool parse_scalar_type(const std::string& s, ScalarType& out) {
    if (s == "char" || s == "int8") out = ScalarType::Char;
    else if (s == "uchar" || s == "uint8") out = ScalarType::UChar;
    else if (s == "short" || s == "int16") out = ScalarType::Short;
    else if (s == "ushort" || s == "uint16") out = ScalarType::UShort;
    else if (s == "int" || s == "int32") out = ScalarType::Int;
    else if (s == "uint" || s == "uint32") out = ScalarType::UInt;
    else if (s == "float" || s == "float32") out = ScalarType::Float;
    else if (s == "double" || s == "float64") out = ScalarType::Double;
    else return false;
    return true;
}

struct Property {
    std::string name;
    ScalarType type = ScalarType::Float;
    bool is_list = false;
};

struct Element {
    std::string name;
    std::size_t count = 0;
    std::vector<Property> props;
};

struct Header {
    bool binary = false;
    std::vector<Element> elements;
    std::size_t body_offset = 0;  // first byte after "end_header\n"
};

inline Header parse_header(const std::string& data) {
    static_assert(std::endian::native == std::endian::little,
                  "binary PLY reader assumes a little-endian host");
    Header h;
    std::size_t pos = 0;
    std::size_t line_no = 0;
    bool saw_format = false;
    bool done = false;
    while (pos < data.size() && !done) {
        std::size_t line_start = pos;
        std::size_t eol = data.find('\n', pos);
        if (eol == std::string::npos) throw PlyError("header not terminated by end_header", data.size());
        std::string line = data.substr(pos, eol - pos);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        pos = eol + 1;

        std::istringstream ls(line);
        std::string tok;
        ls >> tok;
        if (line_no == 0) {
            if (tok != "ply") throw PlyError("missing 'ply' magic", line_start);
            ++line_no;
            continue;
        }
        ++line_no;
        if (tok.empty() || tok == "comment" || tok == "obj_info") continue;
        if (tok == "format") {
            std::string fmt, ver;
            ls >> fmt >> ver;
            if (fmt == "ascii") h.binary = false;
            else if (fmt == "binary_little_endian") h.binary = true;
            else throw PlyError("unsupported format '" + fmt + "'", line_start);
            saw_format = true;
        } else if (tok == "element") {
            Element e;
            if (!(ls >> e.name >> e.count)) throw PlyError("malformed element line", line_start);
            h.elements.push_back(e);
        } else if (tok == "property") {
            if (h.elements.empty()) throw PlyError("property before any element", line_start);
            Property p;
            std::string t;
            ls >> t;
            if (t == "list") {
                std::string count_t, val_t;
                ls >> count_t >> val_t >> p.name;
                p.is_list = true;
                if (!parse_scalar_type(val_t, p.type))
                    throw PlyError("unsupported list value type '" + val_t + "'", line_start);
            } else {
                if (!parse_scalar_type(t, p.type))
                    throw PlyError("unsupported property type '" + t + "'", line_start);
                if (!(ls >> p.name)) throw PlyError("malformed property line", line_start);
            }
            h.elements.back().props.push_back(p);
        } else if (tok == "end_header") {
            if (!saw_format) throw PlyError("end_header before format line", line_start);
            h.body_offset = pos;
            done = true;
        } else {
            throw PlyError("unrecognized header keyword '" + tok + "'", line_start);
        }
    }
    if (!done) throw PlyError("header not terminated by end_header", data.size());
    return h;
}

template <typename T>
inline T read_le(const std::string& data, std::size_t off) {
    T v;
    std::memcpy(&v, data.data() + off, sizeof(T));
    return v;
}

inline double read_scalar(const std::string& data, std::size_t off, ScalarType t) {
    switch (t) {
        case ScalarType::Char: return static_cast<double>(read_le<std::int8_t>(data, off));
        case ScalarType::UChar: return static_cast<double>(read_le<std::uint8_t>(data, off));
        case ScalarType::Short: return static_cast<double>(read_le<std::int16_t>(data, off));
        case ScalarType::UShort: return static_cast<double>(read_le<std::uint16_t>(data, off));
        case ScalarType::Int: return static_cast<double>(read_le<std::int32_t>(data, off));
        case ScalarType::UInt: return static_cast<double>(read_le<std::uint32_t>(data, off));
        case ScalarType::Float: return static_cast<double>(read_le<float>(data, off));
        case ScalarType::Double: return read_le<double>(data, off);
    }
    return 0.0;
}

}  // namespace ply_detail

// Reads an ASCII or binary-little-endian PLY file. Requires x,y,z scalar
// properties on the vertex element; red/green/blue uchar properties are
// loaded as colors when all three are present. Other scalar properties are
// skipped; list properties inside or before the vertex element are rejected.
inline PointCloud load_ply(const std::string& path) {
    using namespace ply_detail;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw PlyError("cannot open '" + path + "'", 0);
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    Header h = parse_header(data);

    const Element* vertex = nullptr;
    std::size_t vertex_index = 0;
    for (std::size_t i = 0; i < h.elements.size(); ++i) {
        if (h.elements[i].name == "vertex") {
            vertex = &h.elements[i];
            vertex_index = i;
            break;
        }
    }
    if (!vertex) throw PlyError("no vertex element", h.body_offset);

    int ix = -1, iy = -1, iz = -1, ir = -1, ig = -1, ib = -1;
    for (std::size_t i = 0; i < vertex->props.size(); ++i) {
        const Property& p = vertex->props[i];
        if (p.is_list)
            throw PlyError("unsupported list property '" + p.name + "' in vertex element", h.body_offset);
        if (p.name == "x") ix = static_cast<int>(i);
        else if (p.name == "y") iy = static_cast<int>(i);
        else if (p.name == "z") iz = static_cast<int>(i);
        else if (p.name == "red") ir = static_cast<int>(i);
        else if (p.name == "green") ig = static_cast<int>(i);
        else if (p.name == "blue") ib = static_cast<int>(i);
    }
    if (ix < 0 || iy < 0 || iz < 0) throw PlyError("vertex element lacks x/y/z", h.body_offset);
    bool with_color = ir >= 0 && ig >= 0 && ib >= 0;

    PointCloud cloud;
    cloud.points.reserve(vertex->count);
    if (with_color) cloud.colors.emplace();

    if (h.binary) {
        std::size_t off = h.body_offset;
        for (std::size_t e = 0; e <= vertex_index; ++e) {
            const Element& el = h.elements[e];
            std::size_t row = 0;
            for (const Property& p : el.props) {
                if (p.is_list)
                    throw PlyError("unsupported list property before vertex data", off);
                row += scalar_size(p.type);
            }
            if (e != vertex_index) {
                off += row * el.count;
                continue;
            }
            std::vector<std::size_t> prop_off(el.props.size());
            std::size_t acc = 0;
            for (std::size_t i = 0; i < el.props.size(); ++i) {
                prop_off[i] = acc;
                acc += scalar_size(el.props[i].type);
            }
            for (std::size_t v = 0; v < el.count; ++v) {
                if (off + row > data.size())
                    throw PlyError("truncated body: vertex " + std::to_string(v) + " of " +
                                       std::to_string(el.count),
                                   data.size());
                Vec3 pt{read_scalar(data, off + prop_off[ix], el.props[ix].type),
                        read_scalar(data, off + prop_off[iy], el.props[iy].type),
                        read_scalar(data, off + prop_off[iz], el.props[iz].type)};
                cloud.points.push_back(pt);
                if (with_color) {
                    cloud.colors->push_back(
                        {static_cast<std::uint8_t>(read_scalar(data, off + prop_off[ir], el.props[ir].type)),
                         static_cast<std::uint8_t>(read_scalar(data, off + prop_off[ig], el.props[ig].type)),
                         static_cast<std::uint8_t>(read_scalar(data, off + prop_off[ib], el.props[ib].type))});
                }
                off += row;
            }
        }
    } else {
        std::size_t off = h.body_offset;
        auto next_line = [&](std::size_t& start) -> std::string {
            if (off >= data.size()) throw PlyError("truncated body: unexpected end of file", data.size());
            start = off;
            std::size_t eol = data.find('\n', off);
            std::string line;
            if (eol == std::string::npos) {
                line = data.substr(off);
                off = data.size();
            } else {
                line = data.substr(off, eol - off);
                off = eol + 1;
            }
            if (!line.empty() && line.back() == '\r') line.pop_back();
            return line;
        };
        for (std::size_t e = 0; e <= vertex_index; ++e) {
            const Element& el = h.elements[e];
            for (std::size_t v = 0; v < el.count; ++v) {
                std::size_t line_start = 0;
                std::string line = next_line(line_start);
                if (e != vertex_index) continue;
                std::istringstream ls(line);
                std::vector<double> vals(el.props.size());
                for (std::size_t i = 0; i < el.props.size(); ++i) {
                    if (!(ls >> vals[i]))
                        throw PlyError("truncated body: vertex " + std::to_string(v) +
                                           " has too few values",
                                       line_start);
                }
                cloud.points.push_back({vals[ix], vals[iy], vals[iz]});
                if (with_color) {
                    cloud.colors->push_back({static_cast<std::uint8_t>(vals[ir]),
                                             static_cast<std::uint8_t>(vals[ig]),
                                             static_cast<std::uint8_t>(vals[ib])});
                }
            }
        }
    }
    cloud.validate();
    return cloud;
}

// Writes float32 x/y/z (plus uchar red/green/blue when colors are present).
inline void save_ply(const PointCloud& cloud, const std::string& path, bool binary = true) {
    cloud.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw PlyError("cannot open '" + path + "' for writing", 0);
    out << "ply\n";
    out << (binary ? "format binary_little_endian 1.0\n" : "format ascii 1.0\n");
    out << "element vertex " << cloud.points.size() << "\n";
    out << "property float x\nproperty float y\nproperty float z\n";
    if (cloud.has_colors()) {
        out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    }
    out << "end_header\n";
    if (binary) {
        for (std::size_t i = 0; i < cloud.points.size(); ++i) {
            std::array<float, 3> xyz{static_cast<float>(cloud.points[i].x),
                                     static_cast<float>(cloud.points[i].y),
                                     static_cast<float>(cloud.points[i].z)};
            out.write(reinterpret_cast<const char*>(xyz.data()), sizeof(xyz));
            if (cloud.has_colors()) {
                const Color8& c = (*cloud.colors)[i];
                out.write(reinterpret_cast<const char*>(&c), 3);
            }
        }
    } else {
        out.precision(9);  // round-trips float32 exactly
        for (std::size_t i = 0; i < cloud.points.size(); ++i) {
            out << static_cast<float>(cloud.points[i].x) << ' '
                << static_cast<float>(cloud.points[i].y) << ' '
                << static_cast<float>(cloud.points[i].z);
            if (cloud.has_colors()) {
                const Color8& c = (*cloud.colors)[i];
                out << ' ' << int(c.r) << ' ' << int(c.g) << ' ' << int(c.b);
            }
            out << '\n';
        }
    }
    if (!out) throw PlyError("write failed for '" + path + "'", 0);
}

}  // namespace pcv
