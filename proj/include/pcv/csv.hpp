#pragma once

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace pcv {

// Shortest round-trip decimal form; locale-independent and deterministic.
inline std::string fmt_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

class CsvWriter {
public:
    explicit CsvWriter(const std::string& path) : out_(path) {
        if (!out_) throw std::runtime_error("cannot open '" + path + "' for writing");
        path_ = path;
    }

    void header(const std::vector<std::string>& cols) { line(cols); }

    void line(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out_ << ',';
            out_ << cells[i];
        }
        out_ << '\n';
    }

    void close() {
        out_.close();
        if (!out_) throw std::runtime_error("write failed for '" + path_ + "'");
    }

private:
    std::ofstream out_;
    std::string path_;
};

// Minimal reader: splits on commas, no quoting (none of our outputs need it).
inline std::vector<std::vector<std::string>> read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        rows.push_back(std::move(cells));
    }
    return rows;
}

}  // namespace pcv
