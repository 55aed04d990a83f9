#pragma once

// Thin matrix-vector rejection sampling: exact draws from the distribution
// P(l) = (V(l,:) q)^2 / ||V q||^2 without ever forming the n-vector V q, for
// any V whose columns support length-square sampling. Plus the heuristic
// post-selection that turns finite samples of the two projected distributions
// into one anchor index.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include "mch/estimators.hpp"
#include "mch/matstore.hpp"
#include "mch/rng.hpp"
#include "mch/sketch.hpp"

namespace mch {

/// Row-queryable matrix with per-column length-square samplers. The two
/// concrete sources are a dense matrix (tests, exact baseline) and an
/// implicit basis.
struct ThinMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::function<double(std::size_t l, std::size_t i)> entry;
    std::function<std::size_t(std::size_t i, Rng&)> sampleInCol;  // l with prob V(l,i)^2/||V(:,i)||^2
    std::vector<double> colNormsSq;
};

inline ThinMatrix thinFromDense(const Eigen::MatrixXd& v) {
    ThinMatrix t;
    t.rows = static_cast<std::size_t>(v.rows());
    t.cols = static_cast<std::size_t>(v.cols());
    t.entry = [&v](std::size_t l, std::size_t i) {
        return v(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(i));
    };
    auto trees = std::make_shared<std::vector<WeightTree>>();
    trees->reserve(t.cols);
    t.colNormsSq.resize(t.cols);
    for (std::size_t i = 0; i < t.cols; ++i) {
        std::vector<double> squares(t.rows);
        for (std::size_t l = 0; l < t.rows; ++l) {
            const double x = v(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(i));
            squares[l] = x * x;
        }
        trees->emplace_back(squares);
        t.colNormsSq[i] = trees->back().total();
    }
    t.sampleInCol = [trees](std::size_t i, Rng& rng) { return (*trees)[i].sample(rng); };
    return t;
}

inline ThinMatrix thinFromBasis(const ImplicitBasis& b, const SampledMatrix& h,
                                const std::vector<double>& basisNormsSq) {
    ThinMatrix t;
    t.rows = h.rows();
    t.cols = b.rank();
    t.colNormsSq = basisNormsSq;
    t.entry = [&b, &h](std::size_t l, std::size_t i) { return basisEntry(b, h, i, l); };
    auto access = std::make_shared<std::vector<VectorAccess>>();
    access->reserve(t.cols);
    for (std::size_t i = 0; i < t.cols; ++i) access->push_back(basisVectorAccess(b, h, i, basisNormsSq[i]));
    t.sampleInCol = [access](std::size_t i, Rng& rng) { return (*access)[i].sample(rng); };
    return t;
}

struct MatvecSampleStats {
    std::size_t draws = 0;
    std::size_t iterations = 0;
    double meanIterations() const { return draws == 0 ? 0.0 : static_cast<double>(iterations) / static_cast<double>(draws); }
};

/// One exact draw from P(l) proportional to (V(l,:) qHat)^2. Proposal: column
/// j uniform, row l length-square within column j; acceptance
/// (V(l,:)q)^2 / (w(l) ||q||^2 max_i ||V(:,i)||^2) with w(l) = sum_i
/// V(l,i)^2/||V(:,i)||^2, which is the proposal mass of l up to 1/k'. The
/// max-column-norm factor keeps acceptance <= 1 for arbitrary column norms;
/// for near-orthonormal columns it is ~1 and the loop accepts in
/// ~ k'||q||^2/||Vq||^2 iterations.
inline std::size_t thinMatvecSample(const ThinMatrix& v, const Eigen::VectorXd& qHat, Rng& rng,
                                    std::size_t iterCap = 1'000'000, MatvecSampleStats* stats = nullptr) {
    if (static_cast<std::size_t>(qHat.size()) != v.cols) throw Error("thinMatvecSample: qHat length mismatch");
    const double qNormSq = qHat.squaredNorm();
    if (qNormSq <= 0.0) throw Error("thinMatvecSample: zero coefficient vector");
    double maxColSq = 0.0;
    for (double c : v.colNormsSq) maxColSq = std::max(maxColSq, c);
    if (maxColSq <= 0.0) throw Error("thinMatvecSample: zero matrix");

    for (std::size_t iter = 1; iter <= iterCap; ++iter) {
        const std::size_t j = uniformIndex(rng, v.cols);
        if (v.colNormsSq[j] <= 0.0) continue;  // zero column proposes nothing
        const std::size_t l = v.sampleInCol(j, rng);
        double dot = 0.0, w = 0.0;
        for (std::size_t i = 0; i < v.cols; ++i) {
            const double x = v.entry(l, i);
            dot += x * qHat(static_cast<Eigen::Index>(i));
            if (v.colNormsSq[i] > 0.0) w += x * x / v.colNormsSq[i];
        }
        const double accept = dot * dot / (w * qNormSq * maxColSq);
        if (uniformDouble(rng) < accept) {
            if (stats != nullptr) {
                ++stats->draws;
                stats->iterations += iter;
            }
            return l;
        }
    }
    throw Error("thinMatvecSample: no acceptance within " + std::to_string(iterCap) +
                " iterations; ||Vq|| is much smaller than ||V|| ||q||");
}

/// Exact probability of index l under P_{Vq}: (V(l,:)q)^2 / normSq, where
/// normSq is the caller-supplied ||Vq||^2.
template <typename EntryFn>
inline double probOfIndex(EntryFn&& entry, std::size_t cols, const Eigen::VectorXd& qHat, double normSq,
                          std::size_t l) {
    if (normSq <= 0.0) throw Error("probOfIndex: normSq must be positive");
    double dot = 0.0;
    for (std::size_t i = 0; i < cols; ++i) dot += entry(l, i) * qHat(static_cast<Eigen::Index>(i));
    return dot * dot / normSq;
}

/// Sampleable distribution over [n] with an exact on-demand probability query.
struct VecDistribution {
    std::function<std::size_t(Rng&)> drawOne;
    std::function<double(std::size_t)> probOf;
    double expectedRejectionIters = 0.0;  // diagnostic, Lemma-style upper bound
    std::shared_ptr<MatvecSampleStats> stats = std::make_shared<MatvecSampleStats>();
};

/// P_{Vq} for a thin matrix: rejection-sampled draws, exact probOf against the
/// supplied ||Vq||^2.
inline VecDistribution matvecDistribution(ThinMatrix v, Eigen::VectorXd qHat, double normVqSq,
                                          std::size_t iterCap = 1'000'000) {
    if (normVqSq <= 0.0) throw Error("matvecDistribution: ||Vq||^2 must be positive");
    VecDistribution dist;
    double maxColSq = 0.0;
    for (double c : v.colNormsSq) maxColSq = std::max(maxColSq, c);
    dist.expectedRejectionIters = static_cast<double>(v.cols) * qHat.squaredNorm() * maxColSq / normVqSq;
    auto shared = std::make_shared<std::pair<ThinMatrix, Eigen::VectorXd>>(std::move(v), std::move(qHat));
    auto stats = dist.stats;
    dist.drawOne = [shared, iterCap, stats](Rng& rng) {
        return thinMatvecSample(shared->first, shared->second, rng, iterCap, stats.get());
    };
    dist.probOf = [shared, normVqSq](std::size_t l) {
        return probOfIndex(shared->first.entry, shared->first.cols, shared->second, normVqSq, l);
    };
    return dist;
}

/// Distribution with explicitly listed probabilities (exact baseline, tests).
inline VecDistribution denseDistribution(Eigen::VectorXd probs) {
    const double total = probs.sum();
    if (total <= 0.0) throw Error("denseDistribution: probabilities sum to zero");
    VecDistribution dist;
    auto tree = std::make_shared<WeightTree>(
        std::span<const double>(probs.data(), static_cast<std::size_t>(probs.size())));
    auto shared = std::make_shared<Eigen::VectorXd>(std::move(probs));
    dist.expectedRejectionIters = 1.0;
    dist.drawOne = [tree](Rng& rng) { return tree->sample(rng); };
    dist.probOf = [shared, total](std::size_t l) { return (*shared)(static_cast<Eigen::Index>(l)) / total; };
    return dist;
}

struct PostSelectConfig {
    std::size_t nX = 0;      // 0 = derive from epsGap, delta
    std::size_t nY = 0;
    double epsGap = 0.1;     // separation threshold epsilon
    double epsT = 0.1;       // minimum top probability
    double delta = 0.1;      // failure probability for the derived draw counts
};

/// N = ceil(2 ln(8/delta) / eps^2).
inline std::size_t postSelectDraws(double delta, double eps) {
    if (delta <= 0.0 || delta >= 1.0 || eps <= 0.0) throw Error("postSelectDraws: need 0<delta<1, eps>0");
    return static_cast<std::size_t>(std::ceil(2.0 * std::log(8.0 / delta) / (eps * eps)));
}

struct SubproblemOutcome {
    std::size_t anchorIdx = 0;
    double cStar = 0.0;                       // exact top X-probability
    double xiHat = 0.0;
    std::map<std::size_t, std::size_t> histX; // drawn index -> count
    std::map<std::size_t, std::size_t> histY;
    bool degenerate = false;                  // every Y candidate fell below xiHat * cStar
};

namespace detail {

/// Most frequent key; ties toward larger count are vacuous here so the rule
/// reduces to smallest index among maxima.
inline std::size_t argmaxCount(const std::map<std::size_t, std::size_t>& hist) {
    std::size_t best = 0, bestCount = 0;
    bool first = true;
    for (const auto& [idx, count] : hist) {
        if (first || count > bestCount) {
            best = idx;
            bestCount = count;
            first = false;
        }
    }
    return best;
}

}  // namespace detail

/// Draw nX from the X distribution and nY from the Y distribution, take the
/// exact probability C* of the most frequent X index, and return the Y index
/// whose empirical frequency exceeds xiHat*C* by the least. Candidates below
/// the threshold are discarded ((x)_+ = +inf); if none survive the outcome is
/// flagged degenerate and the largest-count index is returned.
inline SubproblemOutcome heuristicPostSelect(const VecDistribution& distX, const VecDistribution& distY,
                                             double xiHat, const PostSelectConfig& cfg, Rng& rng) {
    const std::size_t nX = cfg.nX != 0 ? cfg.nX : postSelectDraws(cfg.delta, cfg.epsGap);
    const std::size_t nY = cfg.nY != 0 ? cfg.nY : postSelectDraws(cfg.delta, cfg.epsGap);

    SubproblemOutcome out;
    out.xiHat = xiHat;
    for (std::size_t d = 0; d < nX; ++d) ++out.histX[distX.drawOne(rng)];
    const std::size_t topX = detail::argmaxCount(out.histX);
    out.cStar = distX.probOf(topX);

    for (std::size_t d = 0; d < nY; ++d) ++out.histY[distY.drawOne(rng)];

    const double threshold = xiHat * out.cStar;
    bool found = false;
    double bestVal = 0.0;
    std::size_t bestIdx = 0, bestCount = 0;
    for (const auto& [idx, count] : out.histY) {
        const double freq = static_cast<double>(count) / static_cast<double>(nY);
        const double val = freq - threshold;
        if (val < 0.0) continue;
        if (!found || val < bestVal || (val == bestVal && (count > bestCount || (count == bestCount && idx < bestIdx)))) {
            found = true;
            bestVal = val;
            bestIdx = idx;
            bestCount = count;
        }
    }
    if (!found) {
        out.degenerate = true;
        out.anchorIdx = detail::argmaxCount(out.histY);
    } else {
        out.anchorIdx = bestIdx;
    }
    return out;
}

/// Infinite-sample limit of the post-selection on explicitly known
/// distributions: argmin over all indices of (pY(z) - xi * max pX)_+, same tie
/// rules. Test oracle and exact-mode reference.
inline std::size_t exactEq5Argmin(const Eigen::VectorXd& probsX, const Eigen::VectorXd& probsY, double xi,
                                  bool* degenerate = nullptr) {
    Eigen::Index topX = 0;
    probsX.maxCoeff(&topX);
    const double threshold = xi * probsX(topX);
    bool found = false;
    double bestVal = 0.0, bestProb = 0.0;
    Eigen::Index bestIdx = 0;
    for (Eigen::Index z = 0; z < probsY.size(); ++z) {
        const double val = probsY(z) - threshold;
        if (val < 0.0) continue;
        if (!found || val < bestVal || (val == bestVal && probsY(z) > bestProb)) {
            found = true;
            bestVal = val;
            bestIdx = z;
            bestProb = probsY(z);
        }
    }
    if (degenerate != nullptr) *degenerate = !found;
    if (!found) {
        probsY.maxCoeff(&bestIdx);
    }
    return static_cast<std::size_t>(bestIdx);
}

}  // namespace mch
