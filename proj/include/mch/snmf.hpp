#pragma once

// Synthetic near-separable NMF benchmark: generator (anchors + convex
// mixtures + Gaussian noise), recovery-rate and reconstruction-error metrics,
// an active-set NNLS encoder, and the sweep harness that ties them to
// the solver.

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cstdint>
#include <numeric>
#include <set>
#include <vector>

#include "mch/dca.hpp"
#include "mch/rng.hpp"

namespace mch {

struct SnmfInstance {
    Eigen::MatrixXd x;                    // n x m
    std::vector<std::size_t> trueAnchors; // size k, positions after permutation
    double mu = 0.0;
    std::uint64_t seed = 0;
};

/// X = F X_A + N, F = [I_k; U] with U and X_A i.i.d. U[0,1) then l1-row-
/// normalized, N i.i.d. Normal(0, mu) (mu is the variance), rows permuted by
/// a seeded shuffle. Noise is not clipped, so large mu makes the data signed.
inline SnmfInstance generateSynthetic(std::size_t n, std::size_t m, std::size_t k, double mu, std::uint64_t seed) {
    if (k == 0 || k > n) throw Error("generateSynthetic: need 0 < k <= n");
    SnmfInstance inst;
    inst.mu = mu;
    inst.seed = seed;

    Rng rng = makeStream(seed, {0x67656e32ULL});
    Eigen::MatrixXd xa(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(m));
    for (Eigen::Index i = 0; i < xa.rows(); ++i) {
        for (Eigen::Index j = 0; j < xa.cols(); ++j) xa(i, j) = uniformDouble(rng);
        xa.row(i) /= xa.row(i).sum();
    }
    Eigen::MatrixXd u(static_cast<Eigen::Index>(n - k), static_cast<Eigen::Index>(k));
    for (Eigen::Index i = 0; i < u.rows(); ++i) {
        for (Eigen::Index j = 0; j < u.cols(); ++j) u(i, j) = uniformDouble(rng);
        u.row(i) /= u.row(i).sum();
    }

    Eigen::MatrixXd unpermuted(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
    unpermuted.topRows(static_cast<Eigen::Index>(k)) = xa;
    unpermuted.bottomRows(static_cast<Eigen::Index>(n - k)) = u * xa;
    if (mu > 0.0) {
        const double sd = std::sqrt(mu);
        for (Eigen::Index i = 0; i < unpermuted.rows(); ++i) {
            for (Eigen::Index j = 0; j < unpermuted.cols(); ++j) unpermuted(i, j) += sd * gaussian(rng);
        }
    }

    // Fisher-Yates so anchor positions don't leak the construction order.
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t i = n - 1; i > 0; --i) {
        std::swap(perm[i], perm[uniformIndex(rng, i + 1)]);
    }
    inst.x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
    std::vector<std::size_t> position(n);
    for (std::size_t i = 0; i < n; ++i) {
        inst.x.row(static_cast<Eigen::Index>(perm[i])) = unpermuted.row(static_cast<Eigen::Index>(i));
        position[i] = perm[i];
    }
    inst.trueAnchors.assign(position.begin(), position.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(inst.trueAnchors.begin(), inst.trueAnchors.end());
    return inst;
}

/// |A intersect Ahat| / |A|.
inline double recoveryRate(const std::vector<std::size_t>& trueAnchors, const std::vector<std::size_t>& found) {
    if (trueAnchors.empty()) throw Error("recoveryRate: empty true anchor set");
    const std::set<std::size_t> truth(trueAnchors.begin(), trueAnchors.end());
    std::size_t hits = 0;
    for (std::size_t i : found) hits += truth.count(i);
    return static_cast<double>(hits) / static_cast<double>(truth.size());
}

/// Nonnegative F minimizing ||X - F X_A||_F, solved row by row with the
/// Lawson-Hanson active-set method (exact at the stationary point, which the
/// reconstruction-error metrics need; k is small so the subproblem solves are
/// cheap).
inline Eigen::MatrixXd nnlsEncode(const Eigen::MatrixXd& x, const Eigen::MatrixXd& anchorRows,
                                  std::size_t maxIters = 500, double relTol = 1e-10) {
    if (anchorRows.rows() == 0) throw Error("nnlsEncode: empty anchor set");
    if (anchorRows.cols() != x.cols()) throw Error("nnlsEncode: dimension mismatch");
    const Eigen::Index k = anchorRows.rows();
    const Eigen::MatrixXd gram = anchorRows * anchorRows.transpose();  // k x k
    const Eigen::MatrixXd xat = x * anchorRows.transpose();            // n x k
    const double tol = relTol * std::max(gram.cwiseAbs().maxCoeff(), 1.0);

    Eigen::MatrixXd f = Eigen::MatrixXd::Zero(x.rows(), k);
    std::vector<Eigen::Index> passive;
    for (Eigen::Index row = 0; row < x.rows(); ++row) {
        Eigen::VectorXd sol = Eigen::VectorXd::Zero(k);
        passive.clear();
        std::vector<bool> inPassive(static_cast<std::size_t>(k), false);
        for (std::size_t it = 0; it < maxIters; ++it) {
            const Eigen::VectorXd w = xat.row(row).transpose() - gram * sol;
            Eigen::Index best = -1;
            double bestW = tol;
            for (Eigen::Index i = 0; i < k; ++i) {
                if (!inPassive[static_cast<std::size_t>(i)] && w(i) > bestW) {
                    best = i;
                    bestW = w(i);
                }
            }
            if (best < 0) break;
            passive.push_back(best);
            inPassive[static_cast<std::size_t>(best)] = true;

            // Unconstrained solve on the passive set; shrink it until the
            // solution is feasible.
            while (true) {
                const auto np = static_cast<Eigen::Index>(passive.size());
                Eigen::MatrixXd gp(np, np);
                Eigen::VectorXd bp(np);
                for (Eigen::Index a = 0; a < np; ++a) {
                    bp(a) = xat(row, passive[static_cast<std::size_t>(a)]);
                    for (Eigen::Index b = 0; b < np; ++b) {
                        gp(a, b) = gram(passive[static_cast<std::size_t>(a)], passive[static_cast<std::size_t>(b)]);
                    }
                }
                const Eigen::VectorXd z = gp.ldlt().solve(bp);
                if (z.minCoeff() > 0.0) {
                    sol.setZero();
                    for (Eigen::Index a = 0; a < np; ++a) sol(passive[static_cast<std::size_t>(a)]) = z(a);
                    break;
                }
                double alpha = 1.0;
                for (Eigen::Index a = 0; a < np; ++a) {
                    const double cur = sol(passive[static_cast<std::size_t>(a)]);
                    if (z(a) <= 0.0 && cur - z(a) > 0.0) alpha = std::min(alpha, cur / (cur - z(a)));
                }
                for (Eigen::Index a = 0; a < np; ++a) {
                    const Eigen::Index idx = passive[static_cast<std::size_t>(a)];
                    sol(idx) = sol(idx) + alpha * (z(a) - sol(idx));
                }
                for (std::size_t a = passive.size(); a-- > 0;) {
                    if (sol(passive[a]) <= 0.0) {
                        sol(passive[a]) = 0.0;
                        inPassive[static_cast<std::size_t>(passive[a])] = false;
                        passive.erase(passive.begin() + static_cast<std::ptrdiff_t>(a));
                    }
                }
                if (passive.empty()) break;
            }
        }
        f.row(row) = sol.transpose();
    }
    return f;
}

struct BenchConfig {
    std::size_t n = 500;
    std::size_t m = 500;
    std::size_t k = 10;
    double mu = 0.0;
    std::size_t p = 100;
    std::size_t s = 4000;     // ignored in exact mode
    Mode mode = Mode::approx;
    Ensemble ensemble = Ensemble::uniformNonneg;
    std::uint64_t seed = 0;
    std::size_t nX = 4096;    // post-selection draw counts
    std::size_t nY = 4096;
    // Fixed median-of-means budgets. The eps/delta-derived group size grows
    // with ||H||_F^2, which additive noise inflates by orders of magnitude;
    // a fixed budget keeps noisy grid cells tractable while matching or
    // exceeding the derived size on clean instances at this scale. Set both
    // to zero to fall back to the derived budgets.
    EstimatorConfig estimator{24, 2000};
    std::size_t threads = 1;
    bool keepC = false;       // the s x s block is pure reporting weight here
};

struct BenchRecord {
    BenchConfig config;
    double rho = 0.0;
    double reconErr = 0.0;    // ||X - F X_Ahat||_F
    double wallMs = 0.0;
    AnchorSet anchors;
    std::vector<std::size_t> trueAnchors;
};

inline BenchRecord runBench(const BenchConfig& cfg) {
    const SnmfInstance inst = generateSynthetic(cfg.n, cfg.m, cfg.k, cfg.mu, cfg.seed);

    SolveConfig solveCfg;
    solveCfg.k = cfg.k;
    solveCfg.p = cfg.p;
    solveCfg.mode = cfg.mode;
    solveCfg.ensemble = cfg.ensemble;
    solveCfg.sketch.s = cfg.s;
    solveCfg.sketch.keepC = cfg.keepC;
    solveCfg.estimator = cfg.estimator;
    solveCfg.postSelect.nX = cfg.nX;
    solveCfg.postSelect.nY = cfg.nY;
    solveCfg.masterSeed = cfg.seed;
    solveCfg.threads = cfg.threads;

    const auto start = std::chrono::steady_clock::now();
    AnchorSet anchors = solve(inst.x, inst.x, solveCfg);
    const auto stop = std::chrono::steady_clock::now();

    BenchRecord rec;
    rec.config = cfg;
    rec.wallMs = std::chrono::duration<double, std::milli>(stop - start).count();
    rec.rho = recoveryRate(inst.trueAnchors, anchors.indices);

    std::vector<std::size_t> sortedAnchors = anchors.indices;
    std::sort(sortedAnchors.begin(), sortedAnchors.end());
    Eigen::MatrixXd anchorRows(static_cast<Eigen::Index>(sortedAnchors.size()), inst.x.cols());
    for (std::size_t i = 0; i < sortedAnchors.size(); ++i) {
        anchorRows.row(static_cast<Eigen::Index>(i)) = inst.x.row(static_cast<Eigen::Index>(sortedAnchors[i]));
    }
    const Eigen::MatrixXd f = nnlsEncode(inst.x, anchorRows);
    rec.reconErr = (inst.x - f * anchorRows).norm();
    rec.anchors = std::move(anchors);
    rec.trueAnchors = inst.trueAnchors;
    return rec;
}

/// Grid product of s values, mu values and seeds; one record per cell. Cells
/// that fail keep running the rest of the grid (the error text is recorded).
struct SweepCellError {
    BenchConfig config;
    std::string message;
};

struct SweepResult {
    std::vector<BenchRecord> records;
    std::vector<SweepCellError> failures;
};

inline SweepResult sweep(BenchConfig base, const std::vector<std::size_t>& sGrid,
                         const std::vector<double>& muGrid, const std::vector<std::uint64_t>& seeds) {
    if (sGrid.empty() || muGrid.empty() || seeds.empty()) throw Error("sweep: empty grid");
    SweepResult result;
    for (std::size_t s : sGrid) {
        for (double mu : muGrid) {
            for (std::uint64_t seed : seeds) {
                BenchConfig cfg = base;
                cfg.s = s;
                cfg.mu = mu;
                cfg.seed = seed;
                try {
                    result.records.push_back(runBench(cfg));
                } catch (const std::exception& e) {
                    result.failures.push_back({cfg, e.what()});
                }
            }
        }
    }
    return result;
}

inline double median(std::vector<double> v) {
    if (v.empty()) throw Error("median: empty");
    std::sort(v.begin(), v.end());
    const std::size_t h = v.size() / 2;
    return v.size() % 2 == 1 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

}  // namespace mch
