#pragma once

// Two-stage length-square subsampling of a stored matrix H: s columns give
// an implicit n x s matrix R, s rows of R give an explicit s x s matrix C.
// The SVD of C implicitly defines approximated left singular vectors of H,
// column i being (R . omega_i) / sigma_i; they are queried entrywise and
// never formed densely on the algorithmic path. At desk scale an optional
// value cache memoizes the entry queries without changing any result.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <unordered_map>

#include <json.hpp>

#include "mch/matstore.hpp"
#include "mch/rng.hpp"

namespace mch {

struct SketchConfig {
    std::size_t s = 0;          // number of sampled columns and rows
    std::size_t k = 0;          // target rank, k <= s
    double sigmaFloor = 0.0;    // optional minimum retained singular value
    std::uint64_t seed = 0;     // recorded for reproducibility reports
    bool keepC = true;          // keep the dense s x s C (large at big s)
    std::size_t cacheLimit = 10'000'000;  // max n*k entries for the value cache; 0 disables
};

class RankError : public Error {
public:
    RankError(std::size_t achieved, std::size_t requested)
        : Error("subsample: only " + std::to_string(achieved) + " numerically nonzero singular values, " +
                std::to_string(requested) + " requested"),
          achievedRank(achieved) {}
    std::size_t achievedRank;
};

/// Column-stage sample: indices into H's columns and the 1/sqrt(s * P) rescales.
struct ColumnSketch {
    std::vector<std::size_t> colIdx;
    std::vector<double> colScale;
};

/// Row-stage sample over R: row indices of H and their rescales.
struct RowSketch {
    std::vector<std::size_t> rowIdx;
    std::vector<double> rowScale;
};

struct ImplicitBasis {
    std::vector<std::size_t> colIdx;
    std::vector<double> colScale;
    std::vector<std::size_t> rowIdx;
    std::vector<double> rowScale;
    Eigen::MatrixXd c;      // s x s; empty when keepC was false
    Eigen::VectorXd sigma;  // retained singular values of C, descending, k' <= k
    Eigen::MatrixXd omega;  // s x k', matching right singular vectors

    // Desk-scale acceleration (identical values to the implicit queries;
    // rebuilt from indices/scales, never serialized).
    Eigen::MatrixXd vCache;               // n x k', empty when disabled
    Eigen::VectorXd rRowNormSq;           // per-row ||R(l,:)||^2, empty when disabled
    std::vector<WeightTree> vColTrees;    // per-basis-column square trees

    std::size_t s() const { return colIdx.size(); }
    std::size_t rank() const { return static_cast<std::size_t>(sigma.size()); }
    bool cached() const { return vCache.size() > 0; }
};

inline ColumnSketch sampleColumns(const SampledMatrix& h, std::size_t s, Rng& rng) {
    if (h.frobNormSq() <= 0.0) throw Error("sampleColumns: zero matrix has no column distribution");
    ColumnSketch out;
    out.colIdx.resize(s);
    out.colScale.resize(s);
    const double frobSq = h.frobNormSq();
    for (std::size_t u = 0; u < s; ++u) {
        const std::size_t j = h.sampleColIndex(rng);
        out.colIdx[u] = j;
        const double p = h.colNormSq(j) / frobSq;
        out.colScale[u] = 1.0 / std::sqrt(static_cast<double>(s) * p);
    }
    return out;
}

/// ||R(j,:)||^2 for one row of the implicit R.
inline double rRowNormSq(const SampledMatrix& h, const ColumnSketch& cs, std::size_t j) {
    double acc = 0.0;
    for (std::size_t u = 0; u < cs.colIdx.size(); ++u) {
        const double v = h.entry(j, cs.colIdx[u]) * cs.colScale[u];
        acc += v * v;
    }
    return acc;
}

inline RowSketch sampleRows(const SampledMatrix& h, const ColumnSketch& cs, std::size_t s, Rng& rng) {
    RowSketch out;
    out.rowIdx.resize(s);
    out.rowScale.resize(s);
    // Every column of R has squared norm exactly ||H||_F^2 / s_cols, so
    // ||R||_F^2 equals ||H||_F^2 regardless of the column draw.
    const double rFrobSq = h.frobNormSq();
    std::unordered_map<std::size_t, double> rowNorms;
    for (std::size_t t = 0; t < s; ++t) {
        const std::size_t u = uniformIndex(rng, cs.colIdx.size());
        // R(:,u) is a rescaled column of H, so within-column sampling of R
        // coincides with within-column sampling of H.
        const std::size_t j = h.sampleIndexInCol(cs.colIdx[u], rng);
        out.rowIdx[t] = j;
        auto it = rowNorms.find(j);
        if (it == rowNorms.end()) it = rowNorms.emplace(j, rRowNormSq(h, cs, j)).first;
        const double p = it->second / rFrobSq;
        out.rowScale[t] = 1.0 / std::sqrt(static_cast<double>(s) * p);
    }
    return out;
}

/// Assemble C(t,u) = H(rowIdx[t], colIdx[u]) * colScale[u] * rowScale[t].
/// Recomputing from stored indices/scales reproduces C bit-for-bit.
inline Eigen::MatrixXd materializeC(const SampledMatrix& h, const ColumnSketch& cs, const RowSketch& rs) {
    const auto s = static_cast<Eigen::Index>(rs.rowIdx.size());
    const auto sc = static_cast<Eigen::Index>(cs.colIdx.size());
    Eigen::MatrixXd c(s, sc);
    for (Eigen::Index t = 0; t < s; ++t) {
        for (Eigen::Index u = 0; u < sc; ++u) {
            c(t, u) = h.entry(rs.rowIdx[static_cast<std::size_t>(t)], cs.colIdx[static_cast<std::size_t>(u)]) *
                      cs.colScale[static_cast<std::size_t>(u)] * rs.rowScale[static_cast<std::size_t>(t)];
        }
    }
    return c;
}

inline Eigen::MatrixXd materializeC(const SampledMatrix& h, const ImplicitBasis& b) {
    return materializeC(h, ColumnSketch{b.colIdx, b.colScale}, RowSketch{b.rowIdx, b.rowScale});
}

namespace detail {

/// Entry query on the implicit path: v_i(j) = sum_u H(j, colIdx[u]) * colScale[u]
/// * omega(u,i) / sigma(i). O(s) entry queries.
inline double basisEntryImplicit(const ImplicitBasis& b, const SampledMatrix& h, std::size_t i, std::size_t j) {
    double acc = 0.0;
    for (std::size_t u = 0; u < b.colIdx.size(); ++u) {
        acc += h.entry(j, b.colIdx[u]) * b.colScale[u] * b.omega(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(i));
    }
    return acc / b.sigma(static_cast<Eigen::Index>(i));
}

/// SVD of C without forming it densely: C and M := D^{1/2} R share the Gram
/// matrix C^T C = R^T diag(sum of squared row rescales) R, so they share
/// singular values and right singular vectors. M is n x s, which is far
/// smaller than s x s whenever s exceeds n.
inline void svdOfC(const SampledMatrix& h, const ColumnSketch& cs, const RowSketch& rs,
                   Eigen::VectorXd& sigma, Eigen::MatrixXd& omega) {
    const std::size_t s = rs.rowIdx.size();
    std::unordered_map<std::size_t, double> diag;  // D(j,j) = sum_{t: rowIdx[t]=j} rowScale[t]^2
    for (std::size_t t = 0; t < s; ++t) diag[rs.rowIdx[t]] += rs.rowScale[t] * rs.rowScale[t];

    std::vector<std::size_t> rows;
    rows.reserve(diag.size());
    for (const auto& [j, w] : diag) rows.push_back(j);
    std::sort(rows.begin(), rows.end());

    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cs.colIdx.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const double w = std::sqrt(diag[rows[r]]);
        for (std::size_t u = 0; u < cs.colIdx.size(); ++u) {
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(u)) =
                w * h.entry(rows[r], cs.colIdx[u]) * cs.colScale[u];
        }
    }
    Eigen::BDCSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinV);
    sigma = svd.singularValues();
    omega = svd.matrixV();
}

}  // namespace detail

/// v_i(j), the j-th entry of the i-th approximated left singular vector.
inline double basisEntry(const ImplicitBasis& b, const SampledMatrix& h, std::size_t i, std::size_t j) {
    if (i >= b.rank()) throw Error("basisEntry: basis column index out of range");
    if (j >= h.rows()) throw Error("basisEntry: row index out of range");
    if (b.cached()) return b.vCache(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i));
    return detail::basisEntryImplicit(b, h, i, j);
}

inline ImplicitBasis subsample(const SampledMatrix& h, const SketchConfig& cfg, Rng& rng) {
    if (cfg.s == 0 || cfg.k == 0) throw Error("subsample: s and k must be positive");
    if (cfg.k > cfg.s) throw Error("subsample: k must not exceed s");
    if (h.frobNormSq() <= 0.0) throw Error("subsample: zero matrix");

    ImplicitBasis b;
    ColumnSketch cs = sampleColumns(h, cfg.s, rng);
    RowSketch rs = sampleRows(h, cs, cfg.s, rng);

    Eigen::VectorXd sigmaAll;
    Eigen::MatrixXd omegaAll;
    detail::svdOfC(h, cs, rs, sigmaAll, omegaAll);

    const double numericTol =
        sigmaAll.size() > 0 ? sigmaAll(0) * static_cast<double>(cfg.s) * std::numeric_limits<double>::epsilon()
                            : 0.0;
    std::size_t nonzero = 0;
    while (nonzero < static_cast<std::size_t>(sigmaAll.size()) &&
           sigmaAll(static_cast<Eigen::Index>(nonzero)) > numericTol) {
        ++nonzero;
    }
    if (nonzero < cfg.k) throw RankError(nonzero, cfg.k);

    std::size_t keep = cfg.k;
    if (cfg.sigmaFloor > 0.0) {
        while (keep > 0 && sigmaAll(static_cast<Eigen::Index>(keep - 1)) < cfg.sigmaFloor) --keep;
        if (keep == 0) throw RankError(0, cfg.k);
    }

    b.colIdx = std::move(cs.colIdx);
    b.colScale = std::move(cs.colScale);
    b.rowIdx = std::move(rs.rowIdx);
    b.rowScale = std::move(rs.rowScale);
    b.sigma = sigmaAll.head(static_cast<Eigen::Index>(keep));
    b.omega = omegaAll.leftCols(static_cast<Eigen::Index>(keep));
    if (cfg.keepC) b.c = materializeC(h, b);

    if (cfg.cacheLimit > 0 && h.rows() * keep <= cfg.cacheLimit) {
        b.vCache.resize(static_cast<Eigen::Index>(h.rows()), static_cast<Eigen::Index>(keep));
        for (std::size_t j = 0; j < h.rows(); ++j) {
            for (std::size_t i = 0; i < keep; ++i) {
                b.vCache(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) =
                    detail::basisEntryImplicit(b, h, i, j);
            }
        }
        b.rRowNormSq.resize(static_cast<Eigen::Index>(h.rows()));
        for (std::size_t j = 0; j < h.rows(); ++j) {
            b.rRowNormSq(static_cast<Eigen::Index>(j)) = rRowNormSq(h, ColumnSketch{b.colIdx, b.colScale}, j);
        }
        b.vColTrees.reserve(keep);
        for (std::size_t i = 0; i < keep; ++i) {
            std::vector<double> squares(h.rows());
            for (std::size_t j = 0; j < h.rows(); ++j) {
                const double v = b.vCache(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i));
                squares[j] = v * v;
            }
            b.vColTrees.emplace_back(squares);
        }
    }
    return b;
}

/// s = ceil(85^2 k^2 kappa^4 ln(8n/eta) ||H||_F^2 / (9 eps^2)). Reporting
/// helper only; at experiment scale it is astronomically larger than the
/// sample counts that work in practice, so it is never used as a default.
inline std::size_t theoreticalSampleCount(std::size_t k, double kappa, std::size_t n, double frobNorm,
                                          double eps, double eta) {
    if (k == 0 || kappa <= 0.0 || n == 0 || frobNorm <= 0.0 || eps <= 0.0 || eta <= 0.0 ||
        eta >= 8.0 * static_cast<double>(n)) {
        throw Error("theoreticalSampleCount: all arguments must be positive with eta < 8n");
    }
    const double kd = static_cast<double>(k);
    const double value = 85.0 * 85.0 * kd * kd * std::pow(kappa, 4.0) *
                         std::log(8.0 * static_cast<double>(n) / eta) * frobNorm * frobNorm /
                         (9.0 * eps * eps);
    return static_cast<std::size_t>(std::ceil(value));
}

/// max_{i,j} |v_i . v_j - delta_ij|, evaluated densely. Test helper; O(n k^2)
/// with the cache, O(n k^2 s) without.
inline double orthonormalityDefect(const ImplicitBasis& b, const SampledMatrix& h) {
    const std::size_t k = b.rank();
    const std::size_t n = h.rows();
    Eigen::MatrixXd v(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < k; ++i) {
            v(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = basisEntry(b, h, i, j);
        }
    }
    const Eigen::MatrixXd gram = v.transpose() * v;
    double defect = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            const double target = i == j ? 1.0 : 0.0;
            defect = std::max(defect, std::abs(gram(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) - target));
        }
    }
    return defect;
}

inline nlohmann::json toJson(const ImplicitBasis& b) {
    if (b.c.size() == 0) {
        throw Error("toJson: basis was built with keepC=false; re-materialize C before serializing");
    }
    nlohmann::json j;
    j["col_idx"] = b.colIdx;
    j["col_scale"] = b.colScale;
    j["row_idx"] = b.rowIdx;
    j["row_scale"] = b.rowScale;
    j["sigma"] = std::vector<double>(b.sigma.data(), b.sigma.data() + b.sigma.size());
    nlohmann::json omega = nlohmann::json::array();
    for (Eigen::Index i = 0; i < b.omega.cols(); ++i) {
        omega.push_back(std::vector<double>(b.omega.col(i).data(), b.omega.col(i).data() + b.omega.rows()));
    }
    j["omega"] = omega;
    nlohmann::json c = nlohmann::json::array();
    for (Eigen::Index t = 0; t < b.c.rows(); ++t) {
        std::vector<double> row(static_cast<std::size_t>(b.c.cols()));
        for (Eigen::Index u = 0; u < b.c.cols(); ++u) row[static_cast<std::size_t>(u)] = b.c(t, u);
        c.push_back(row);
    }
    j["c"] = c;
    return j;
}

/// Inverse of toJson. When the source matrix is supplied the desk-scale
/// caches are rebuilt; otherwise the basis answers queries implicitly.
inline ImplicitBasis basisFromJson(const nlohmann::json& j, const SampledMatrix* h = nullptr,
                                   std::size_t cacheLimit = 10'000'000) {
    ImplicitBasis b;
    b.colIdx = j.at("col_idx").get<std::vector<std::size_t>>();
    b.colScale = j.at("col_scale").get<std::vector<double>>();
    b.rowIdx = j.at("row_idx").get<std::vector<std::size_t>>();
    b.rowScale = j.at("row_scale").get<std::vector<double>>();
    const auto sigma = j.at("sigma").get<std::vector<double>>();
    b.sigma = Eigen::Map<const Eigen::VectorXd>(sigma.data(), static_cast<Eigen::Index>(sigma.size()));
    const auto& omega = j.at("omega");
    b.omega.resize(static_cast<Eigen::Index>(b.colIdx.size()), static_cast<Eigen::Index>(omega.size()));
    for (std::size_t i = 0; i < omega.size(); ++i) {
        const auto col = omega[i].get<std::vector<double>>();
        b.omega.col(static_cast<Eigen::Index>(i)) =
            Eigen::Map<const Eigen::VectorXd>(col.data(), static_cast<Eigen::Index>(col.size()));
    }
    const auto& c = j.at("c");
    b.c.resize(static_cast<Eigen::Index>(c.size()), static_cast<Eigen::Index>(b.colIdx.size()));
    for (std::size_t t = 0; t < c.size(); ++t) {
        const auto row = c[t].get<std::vector<double>>();
        for (std::size_t u = 0; u < row.size(); ++u) {
            b.c(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(u)) = row[u];
        }
    }
    if (h != nullptr && cacheLimit > 0 && h->rows() * b.rank() <= cacheLimit) {
        b.vCache.resize(static_cast<Eigen::Index>(h->rows()), static_cast<Eigen::Index>(b.rank()));
        for (std::size_t jj = 0; jj < h->rows(); ++jj) {
            for (std::size_t i = 0; i < b.rank(); ++i) {
                b.vCache(static_cast<Eigen::Index>(jj), static_cast<Eigen::Index>(i)) =
                    detail::basisEntryImplicit(b, *h, i, jj);
            }
        }
        b.rRowNormSq.resize(static_cast<Eigen::Index>(h->rows()));
        for (std::size_t jj = 0; jj < h->rows(); ++jj) {
            b.rRowNormSq(static_cast<Eigen::Index>(jj)) = rRowNormSq(*h, ColumnSketch{b.colIdx, b.colScale}, jj);
        }
        for (std::size_t i = 0; i < b.rank(); ++i) {
            std::vector<double> squares(h->rows());
            for (std::size_t jj = 0; jj < h->rows(); ++jj) {
                const double v = b.vCache(static_cast<Eigen::Index>(jj), static_cast<Eigen::Index>(i));
                squares[jj] = v * v;
            }
            b.vColTrees.emplace_back(squares);
        }
    }
    return b;
}

}  // namespace mch
