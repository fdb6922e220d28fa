#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>

#include "proxlangevin/errors.hpp"
#include "proxlangevin/model.hpp"

namespace proxlangevin {

// Binary PGM (P5), 8-bit or 16-bit big-endian.
inline void write_pgm(const std::string& path, const Matrix& img, double lo, double hi,
                      int maxval = 255) {
    if (maxval <= 0 || maxval > 65535)
        throw InvalidParameterError("write_pgm: maxval out of range");
    if (!(hi > lo)) throw InvalidParameterError("write_pgm: requires hi > lo");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidParameterError("write_pgm: cannot open " + path);
    out << "P5\n" << img.cols() << " " << img.rows() << "\n" << maxval << "\n";
    const double scale = maxval / (hi - lo);
    for (Eigen::Index i = 0; i < img.rows(); ++i)
        for (Eigen::Index j = 0; j < img.cols(); ++j) {
            double v = (img(i, j) - lo) * scale;
            v = std::min(static_cast<double>(maxval), std::max(0.0, v));
            const auto q = static_cast<std::uint16_t>(std::lround(v));
            if (maxval > 255) {
                const char bytes[2] = {static_cast<char>(q >> 8), static_cast<char>(q & 0xff)};
                out.write(bytes, 2);
            } else {
                const char byte = static_cast<char>(q & 0xff);
                out.write(&byte, 1);
            }
        }
}

namespace detail {

inline int pgm_next_int(std::istream& in) {
    // skips whitespace and '#' comment lines
    while (true) {
        const int c = in.peek();
        if (c == '#') {
            std::string line;
            std::getline(in, line);
        } else if (std::isspace(c)) {
            in.get();
        } else {
            break;
        }
    }
    int value = 0;
    in >> value;
    if (!in) throw InvalidParameterError("read_pgm: malformed header");
    return value;
}

}  // namespace detail

// Returns raw sample values in [0, maxval]; the maxval is reported through
// the out-parameter when non-null.
inline Matrix read_pgm(const std::string& path, int* maxval_out = nullptr) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidParameterError("read_pgm: cannot open " + path);
    std::string magic;
    in >> magic;
    if (magic != "P5") throw InvalidParameterError("read_pgm: not a binary PGM (P5)");
    const int cols = detail::pgm_next_int(in);
    const int rows = detail::pgm_next_int(in);
    const int maxval = detail::pgm_next_int(in);
    if (cols <= 0 || rows <= 0 || maxval <= 0 || maxval > 65535)
        throw InvalidParameterError("read_pgm: bad dimensions or maxval");
    in.get();  // single whitespace after maxval
    Matrix img(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) {
            int v;
            if (maxval > 255) {
                const int hi_byte = in.get(), lo_byte = in.get();
                v = (hi_byte << 8) | lo_byte;
            } else {
                v = in.get();
            }
            if (!in) throw InvalidParameterError("read_pgm: truncated pixel data");
            img(i, j) = static_cast<double>(v);
        }
    if (maxval_out) *maxval_out = maxval;
    return img;
}

}  // namespace proxlangevin
