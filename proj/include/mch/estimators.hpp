#pragma once

// Median-of-means inner product estimation and the derived quantities of the
// divide step: coordinate estimates qHat = ~(V^T H B), approximate projection
// norms, and the rescale factor xiHat.
//
// The sampled variable for v^T H B is Z(j,l) = ||v||^2 ||B||^2 H(j,l) /
// (v(j) B(l)) with (j,l) drawn proportional to v(j)^2 B(l)^2; this makes
// E[Z] = v^T H B and E[Z^2] = ||v||^2 ||B||^2 ||H||_F^2.

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <unordered_map>
#include <vector>

#include "mch/matstore.hpp"
#include "mch/projection.hpp"
#include "mch/rng.hpp"
#include "mch/sketch.hpp"

namespace mch {

struct EstimatorConfig {
    std::size_t nGroups = 0;    // N_p; 0 = derive from delta
    std::size_t groupSize = 0;  // N_q; 0 = derive from eps and the variance bound
    double eps = 0.1;           // target additive precision
    double delta = 0.05;        // failure probability
};

/// N_p = ceil(8 ln(1/delta)); N_q = ceil(4 * varBound / eps^2) by Chebyshev.
inline std::pair<std::size_t, std::size_t> mediansBudget(double eps, double delta, double varBound) {
    const auto np = static_cast<std::size_t>(std::ceil(8.0 * std::log(1.0 / delta)));
    const auto nq = static_cast<std::size_t>(std::ceil(4.0 * varBound / (eps * eps)));
    return {std::max<std::size_t>(np, 1), std::max<std::size_t>(nq, 1)};
}

struct CoordinateEstimate {
    Eigen::VectorXd qHat;
    std::size_t perCoordinateDraws = 0;  // N_Z used per coordinate
    bool degenerate = false;             // all-zero projection
};

/// Sampling + query access to an implicit vector (length-square sample,
/// entry query, known squared norm).
struct VectorAccess {
    std::function<std::size_t(Rng&)> sample;      // j with prob v(j)^2/||v||^2
    std::function<double(std::size_t)> value;     // v(j)
    double normSq = 0.0;
};

/// Access to basis column i. Cached bases sample by tree descent; otherwise
/// rejection over R realizes the same exact law (v_i is exactly R omega_i /
/// sigma_i, so row l of R is accepted with (R(l,:) omega_i)^2 /
/// (||R(l,:)||^2 ||omega_i||^2)).
inline VectorAccess basisVectorAccess(const ImplicitBasis& b, const SampledMatrix& h, std::size_t i,
                                      double normSq, std::size_t iterCap = 1'000'000) {
    VectorAccess access;
    access.normSq = normSq;
    access.value = [&b, &h, i](std::size_t j) { return basisEntry(b, h, i, j); };
    if (b.cached()) {
        access.sample = [&b, i](Rng& rng) { return b.vColTrees[i].sample(rng); };
        return access;
    }
    auto rowNormMemo = std::make_shared<std::unordered_map<std::size_t, double>>();
    access.sample = [&b, &h, i, iterCap, rowNormMemo](Rng& rng) -> std::size_t {
        const double sigma = b.sigma(static_cast<Eigen::Index>(i));
        for (std::size_t iter = 0; iter < iterCap; ++iter) {
            const std::size_t u = uniformIndex(rng, b.colIdx.size());
            const std::size_t l = h.sampleIndexInCol(b.colIdx[u], rng);
            auto it = rowNormMemo->find(l);
            if (it == rowNormMemo->end()) {
                it = rowNormMemo->emplace(l, rRowNormSq(h, ColumnSketch{b.colIdx, b.colScale}, l)).first;
            }
            const double dot = sigma * basisEntry(b, h, i, l);
            const double accept = dot * dot / it->second;
            if (uniformDouble(rng) < accept) return l;
        }
        throw Error("basisVectorAccess: rejection sampling exceeded iteration cap");
    };
    return access;
}

/// Median of N_p group means of the Z variable; estimates v^T H B.
inline double innerProductEstimate(const SampledMatrix& h, const VectorAccess& v, const ProjectionSpec& b,
                                   const EstimatorConfig& cfg, Rng& rng) {
    if (v.normSq <= 0.0) throw Error("innerProductEstimate: zero-norm vector");
    const double bNormSq = b.tree.normSq();
    if (bNormSq <= 0.0) throw Error("innerProductEstimate: zero projection");

    std::size_t np = cfg.nGroups, nq = cfg.groupSize;
    if (np == 0 || nq == 0) {
        const double varBound = v.normSq * bNormSq * h.frobNormSq();
        std::tie(np, nq) = mediansBudget(cfg.eps, cfg.delta, varBound);
        if (cfg.nGroups != 0) np = cfg.nGroups;
        if (cfg.groupSize != 0) nq = cfg.groupSize;
    }

    const double scale = v.normSq * bNormSq;
    std::vector<double> groupMeans(np);
    for (std::size_t g = 0; g < np; ++g) {
        double acc = 0.0;
        for (std::size_t d = 0; d < nq; ++d) {
            const std::size_t j = v.sample(rng);
            const std::size_t l = b.tree.sample(rng);
            const double denom = v.value(j) * b.b(static_cast<Eigen::Index>(l));
            if (denom == 0.0) {
                // Zero-probability atoms are never drawn; a zero here means the
                // supplied sampler disagrees with the query access.
                throw Error("innerProductEstimate: sampled a zero coordinate; sampler and query access disagree");
            }
            acc += scale * h.entry(j, l) / denom;
        }
        groupMeans[g] = acc / static_cast<double>(nq);
    }
    std::nth_element(groupMeans.begin(), groupMeans.begin() + static_cast<std::ptrdiff_t>(np / 2),
                     groupMeans.end());
    double median = groupMeans[np / 2];
    if (np % 2 == 0) {
        const double lower = *std::max_element(groupMeans.begin(), groupMeans.begin() + static_cast<std::ptrdiff_t>(np / 2));
        median = 0.5 * (median + lower);
    }
    return median;
}

/// Exact ||v_i||^2 by dense evaluation; O(n) with the cache, O(n s) without.
inline double basisNormSqExact(const ImplicitBasis& b, const SampledMatrix& h, std::size_t i) {
    if (b.cached()) return b.vCache.col(static_cast<Eigen::Index>(i)).squaredNorm();
    double acc = 0.0;
    for (std::size_t j = 0; j < h.rows(); ++j) {
        const double v = basisEntry(b, h, i, j);
        acc += v * v;
    }
    return acc;
}

/// Sampled ||v_i||^2 = ||R omega_i||^2 / sigma_i^2, importance-sampled over
/// rows l drawn proportional to ||H(l,:)||^2. Used beyond desk scale.
inline double basisNormSqEstimate(const ImplicitBasis& b, const SampledMatrix& h, std::size_t i,
                                  std::size_t draws, Rng& rng) {
    if (draws == 0) throw Error("basisNormSqEstimate: draws must be positive");
    const double frobSq = h.frobNormSq();
    const double sigma = b.sigma(static_cast<Eigen::Index>(i));
    double acc = 0.0;
    for (std::size_t d = 0; d < draws; ++d) {
        const std::size_t l = h.sampleRowIndex(rng);
        const double dot = sigma * basisEntry(b, h, i, l);
        acc += dot * dot * frobSq / h.rowNormSq(l);
    }
    return acc / (static_cast<double>(draws) * sigma * sigma);
}

/// qHat(i) = estimate of v_i^T (H B) for each retained basis column, each
/// coordinate on its own stream derived from (masterSeed, subproblem, i).
inline CoordinateEstimate buildQHat(const SampledMatrix& h, const ImplicitBasis& b, const ProjectionSpec& proj,
                                    const std::vector<double>& basisNormsSq, const EstimatorConfig& cfg,
                                    std::uint64_t masterSeed, std::uint64_t subproblem) {
    CoordinateEstimate out;
    const std::size_t k = b.rank();
    out.qHat = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k));
    if (proj.tree.normSq() <= 0.0) {
        out.degenerate = true;
        return out;
    }
    for (std::size_t i = 0; i < k; ++i) {
        Rng rng = makeStream(masterSeed, {subproblem, i, 0x71687174ULL});
        const VectorAccess v = basisVectorAccess(b, h, i, basisNormsSq[i]);
        EstimatorConfig coordCfg = cfg;
        out.qHat(static_cast<Eigen::Index>(i)) = innerProductEstimate(h, v, proj, coordCfg, rng);
        std::size_t np = cfg.nGroups, nq = cfg.groupSize;
        if (np == 0 || nq == 0) {
            std::tie(np, nq) = mediansBudget(cfg.eps, cfg.delta, v.normSq * proj.tree.normSq() * h.frobNormSq());
            if (cfg.nGroups != 0) np = cfg.nGroups;
            if (cfg.groupSize != 0) nq = cfg.groupSize;
        }
        out.perCoordinateDraws = np * nq;
    }
    return out;
}

/// ||Vhat qHat||^2 under the diagonal Gram approximation: sum of
/// qHat(i)^2 ||v_i||^2.
inline double approxProjNorm(const Eigen::VectorXd& qHat, const std::vector<double>& basisNormsSq) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < qHat.size(); ++i) {
        acc += qHat(i) * qHat(i) * basisNormsSq[static_cast<std::size_t>(i)];
    }
    return acc;
}

/// xiHat = ||Xhat_t||^2 / ||Yhat_t||^2 (squared-ratio convention: this is the
/// unique scaling under which the probability comparison reproduces the
/// magnitude comparison of the 1-D subproblem).
inline double xiEstimate(double normXSq, double normYSq) {
    if (normYSq <= 0.0) throw Error("xiEstimate: zero Y projection norm");
    return normXSq / normYSq;
}

}  // namespace mch
