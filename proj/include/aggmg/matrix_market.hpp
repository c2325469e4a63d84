#pragma once

// MatrixMarket coordinate (real, general) reader and writer.

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include "linalg.hpp"

namespace aggmg {

inline void write_matrix_market(std::ostream& out, const SparseMatrix& a)
{
    out << "%%MatrixMarket matrix coordinate real general\n";
    out << a.rows() << ' ' << a.cols() << ' ' << a.nnz() << '\n';
    char buf[64];
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto c = a.row_cols(i);
        auto v = a.row_values(i);
        for (std::size_t k = 0; k < c.size(); ++k) {
            // %.17g round-trips every double exactly.
            std::snprintf(buf, sizeof buf, "%.17g", v[k]);
            out << i + 1 << ' ' << c[k] + 1 << ' ' << buf << '\n';
        }
    }
}

inline void write_matrix_market(const std::string& path, const SparseMatrix& a)
{
    std::ofstream out(path);
    if (!out) throw Error("cannot open " + path + " for writing");
    write_matrix_market(out, a);
    if (!out) throw Error("failed writing " + path);
}

inline SparseMatrix read_matrix_market(std::istream& in)
{
    std::string line;
    if (!std::getline(in, line)) throw Error("MatrixMarket: empty input");
    std::istringstream banner(line);
    std::string tag, object, format, field, symmetry;
    banner >> tag >> object >> format >> field >> symmetry;
    if (tag != "%%MatrixMarket" || object != "matrix" || format != "coordinate")
        throw Error("MatrixMarket: expected '%%MatrixMarket matrix coordinate' header");
    if (field != "real" && field != "integer") throw Error("MatrixMarket: unsupported field '" + field + "'");
    const bool symmetric = symmetry == "symmetric";
    if (!symmetric && symmetry != "general") throw Error("MatrixMarket: unsupported symmetry '" + symmetry + "'");

    while (std::getline(in, line))
        if (!line.empty() && line[0] != '%') break;
    std::istringstream sizes(line);
    std::size_t rows = 0, cols = 0, entries = 0;
    if (!(sizes >> rows >> cols >> entries)) throw Error("MatrixMarket: malformed size line");

    std::vector<Triplet> t;
    t.reserve(symmetric ? 2 * entries : entries);
    for (std::size_t e = 0; e < entries; ++e) {
        std::size_t i = 0, j = 0;
        double v = 0.0;
        if (!(in >> i >> j >> v)) throw Error("MatrixMarket: truncated entry list at entry " + std::to_string(e));
        if (i == 0 || j == 0 || i > rows || j > cols)
            throw Error("MatrixMarket: index out of range at entry " + std::to_string(e));
        t.push_back({i - 1, j - 1, v});
        if (symmetric && i != j) t.push_back({j - 1, i - 1, v});
    }
    return SparseMatrix::from_triplets(rows, cols, std::move(t));
}

inline SparseMatrix read_matrix_market(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path);
    return read_matrix_market(in);
}

} // namespace aggmg
