#pragma once

// Minimal .npy (format version 1.0) reader/writer for little-endian float32
// arrays, plus CSV for small tiles. Only what the tensor container needs.

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "kittensim/errors.hpp"

namespace kittensim {

inline void save_npy_f32(const std::string& path, const std::vector<float>& data,
                         const std::vector<std::size_t>& shape) {
    std::size_t count = 1;
    for (auto s : shape) count *= s;
    if (count != data.size()) throw IoError("save_npy_f32: shape/data mismatch");

    std::ostringstream dict;
    dict << "{'descr': '<f4', 'fortran_order': False, 'shape': (";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        dict << shape[i];
        if (shape.size() == 1 || i + 1 < shape.size()) dict << (shape.size() == 1 ? "," : "");
        if (i + 1 < shape.size()) dict << ", ";
    }
    dict << "), }";
    std::string header = dict.str();
    // magic(6) + version(2) + headerlen(2) + header, padded with spaces to a
    // multiple of 64, newline-terminated.
    std::size_t unpadded = 10 + header.size() + 1;
    std::size_t padded = (unpadded + 63) / 64 * 64;
    header.append(padded - unpadded, ' ');
    header.push_back('\n');

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for write: " + path);
    out.write("\x93NUMPY\x01\x00", 8);
    const std::uint16_t hlen = static_cast<std::uint16_t>(header.size());
    out.write(reinterpret_cast<const char*>(&hlen), 2);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(float)));
    if (!out) throw IoError("write failed: " + path);
}

inline std::vector<float> load_npy_f32(const std::string& path,
                                       std::vector<std::size_t>& shape_out) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, "\x93NUMPY", 6) != 0)
        throw IoError("not an npy file: " + path);
    std::uint16_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), 2);
    std::string header(hlen, '\0');
    in.read(header.data(), hlen);
    if (header.find("'<f4'") == std::string::npos)
        throw IoError("npy: only '<f4' supported: " + path);
    if (header.find("'fortran_order': False") == std::string::npos)
        throw IoError("npy: only C order supported: " + path);

    const auto lp = header.find('(');
    const auto rp = header.find(')', lp);
    if (lp == std::string::npos || rp == std::string::npos)
        throw IoError("npy: bad header: " + path);
    shape_out.clear();
    std::string dims = header.substr(lp + 1, rp - lp - 1);
    std::stringstream ss(dims);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.find_first_not_of(" \t") == std::string::npos) continue;
        shape_out.push_back(static_cast<std::size_t>(std::stoull(tok)));
    }
    std::size_t count = 1;
    for (auto s : shape_out) count *= s;
    std::vector<float> data(count);
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(count * sizeof(float)));
    if (!in) throw IoError("npy: truncated data: " + path);
    return data;
}

inline void save_csv(const std::string& path, const std::vector<float>& data,
                     std::size_t rows, std::size_t cols) {
    if (rows * cols != data.size()) throw IoError("save_csv: shape/data mismatch");
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for write: " + path);
    out.precision(9);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            out << data[r * cols + c];
            if (c + 1 < cols) out << ',';
        }
        out << '\n';
    }
}

} // namespace kittensim
