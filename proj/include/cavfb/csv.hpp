#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace cavfb {

// Shortest round-trip decimal form; identical doubles always yield identical
// bytes, which keeps re-run outputs comparable by digest.
inline std::string format_number(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    if (res.ec != std::errc())
        throw std::runtime_error("number formatting failed");
    return std::string(buf, res.ptr);
}

inline std::string format_number(long long v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::vector<std::string>& columns)
        : path_(path), os_(path, std::ios::binary) {
        if (!os_) throw std::runtime_error("cannot open output file: " + path);
        write_cells(columns);
    }

    void row(std::initializer_list<double> values) {
        std::vector<std::string> cells;
        cells.reserve(values.size());
        for (double v : values) cells.push_back(format_number(v));
        write_cells(cells);
    }

    void row_text(const std::vector<std::string>& cells) { write_cells(cells); }

    const std::string& path() const { return path_; }

    void close() { os_.close(); }

private:
    void write_cells(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) os_ << ',';
            os_ << cells[i];
        }
        os_ << '\n';
    }
    std::string path_;
    std::ofstream os_;
};

} // namespace cavfb
