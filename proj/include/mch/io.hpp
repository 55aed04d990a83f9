#pragma once

// Matrix ingestion and emission. Triplet CSV: first line "n,m", then
// "i,j,value" with 0-based indices and '.'-decimal floats. Matrix Market:
// coordinate real general, 1-based, converted on load.

#include <Eigen/Dense>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mch/matstore.hpp"

namespace mch {

namespace detail {

inline double parseDouble(const std::string& field, const std::string& path, std::size_t lineNo) {
    try {
        std::size_t used = 0;
        const double v = std::stod(field, &used);
        while (used < field.size() && std::isspace(static_cast<unsigned char>(field[used]))) ++used;
        if (used != field.size()) throw std::invalid_argument(field);
        return v;
    } catch (const std::exception&) {
        throw Error(path + ":" + std::to_string(lineNo) + ": expected a numeric value, got '" + field + "'");
    }
}

inline std::size_t parseIndex(const std::string& field, const std::string& path, std::size_t lineNo) {
    std::size_t v = 0;
    const char* first = field.data();
    const char* last = field.data() + field.size();
    while (first != last && std::isspace(static_cast<unsigned char>(*first))) ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    while (ptr != last && std::isspace(static_cast<unsigned char>(*ptr))) ++ptr;
    if (ec != std::errc{} || ptr != last) {
        throw Error(path + ":" + std::to_string(lineNo) + ": expected an index, got '" + field + "'");
    }
    return v;
}

inline std::vector<std::string> splitCsv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) out.push_back(field);
    return out;
}

/// Shortest round-trip decimal representation; deterministic across runs.
inline std::string formatDouble(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

}  // namespace detail

inline SampledMatrix loadCsv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("loadCsv: cannot open '" + path + "'");
    std::string line;
    std::size_t lineNo = 0;

    if (!std::getline(in, line)) throw Error(path + ": empty file, expected 'n,m' header");
    ++lineNo;
    auto header = detail::splitCsv(line);
    if (header.size() != 2) throw Error(path + ":1: header must be 'n,m'");
    const std::size_t n = detail::parseIndex(header[0], path, 1);
    const std::size_t m = detail::parseIndex(header[1], path, 1);

    std::vector<Triplet> triplets;
    while (std::getline(in, line)) {
        ++lineNo;
        if (line.empty()) continue;
        auto fields = detail::splitCsv(line);
        if (fields.size() != 3) {
            throw Error(path + ":" + std::to_string(lineNo) + ": expected 'i,j,value', got '" + line + "'");
        }
        triplets.push_back({detail::parseIndex(fields[0], path, lineNo),
                            detail::parseIndex(fields[1], path, lineNo),
                            detail::parseDouble(fields[2], path, lineNo)});
        if (triplets.back().row >= n || triplets.back().col >= m) {
            throw Error(path + ":" + std::to_string(lineNo) + ": index out of range for " +
                        std::to_string(n) + "x" + std::to_string(m));
        }
    }
    return SampledMatrix::build(triplets, n, m);
}

inline SampledMatrix loadMatrixMarket(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("loadMatrixMarket: cannot open '" + path + "'");
    std::string line;
    std::size_t lineNo = 0;

    if (!std::getline(in, line)) throw Error(path + ": empty file");
    ++lineNo;
    if (line.rfind("%%MatrixMarket", 0) != 0 || line.find("coordinate") == std::string::npos) {
        throw Error(path + ":1: expected a '%%MatrixMarket matrix coordinate real general' banner");
    }

    while (std::getline(in, line)) {
        ++lineNo;
        if (!line.empty() && line[0] != '%') break;
    }
    std::istringstream dims(line);
    std::size_t n = 0, m = 0, nnz = 0;
    if (!(dims >> n >> m >> nnz)) throw Error(path + ":" + std::to_string(lineNo) + ": expected 'n m nnz'");

    std::vector<Triplet> triplets;
    triplets.reserve(nnz);
    while (std::getline(in, line)) {
        ++lineNo;
        if (line.empty() || line[0] == '%') continue;
        std::istringstream row(line);
        std::size_t i = 0, j = 0;
        double v = 0.0;
        if (!(row >> i >> j >> v)) {
            throw Error(path + ":" + std::to_string(lineNo) + ": malformed coordinate line '" + line + "'");
        }
        if (i == 0 || j == 0 || i > n || j > m) {
            throw Error(path + ":" + std::to_string(lineNo) + ": 1-based index out of range");
        }
        triplets.push_back({i - 1, j - 1, v});
    }
    if (triplets.size() != nnz) {
        throw Error(path + ": header promised " + std::to_string(nnz) + " entries, found " +
                    std::to_string(triplets.size()));
    }
    return SampledMatrix::build(triplets, n, m);
}

inline void saveCsv(const Eigen::MatrixXd& mat, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("saveCsv: cannot open '" + path + "' for writing");
    out << mat.rows() << "," << mat.cols() << "\n";
    for (Eigen::Index i = 0; i < mat.rows(); ++i) {
        for (Eigen::Index j = 0; j < mat.cols(); ++j) {
            if (mat(i, j) != 0.0) {
                out << i << "," << j << "," << detail::formatDouble(mat(i, j)) << "\n";
            }
        }
    }
}

inline SampledMatrix fromDense(const Eigen::MatrixXd& mat) {
    std::vector<Triplet> triplets;
    for (Eigen::Index i = 0; i < mat.rows(); ++i) {
        for (Eigen::Index j = 0; j < mat.cols(); ++j) {
            if (mat(i, j) != 0.0) {
                triplets.push_back({static_cast<std::size_t>(i), static_cast<std::size_t>(j), mat(i, j)});
            }
        }
    }
    return SampledMatrix::build(triplets, static_cast<std::size_t>(mat.rows()),
                                static_cast<std::size_t>(mat.cols()));
}

inline Eigen::MatrixXd toDense(const SampledMatrix& mat) {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(mat.rows()),
                                                static_cast<Eigen::Index>(mat.cols()));
    for (const Triplet& t : mat.toTriplets()) {
        out(static_cast<Eigen::Index>(t.row), static_cast<Eigen::Index>(t.col)) = t.value;
    }
    return out;
}

}  // namespace mch
