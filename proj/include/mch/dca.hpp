#pragma once

// Divide-and-conquer anchoring: p random one-dimensional projections, each
// solved exactly (dense baseline) or approximately (sketch + estimate +
// post-select), then a vote over per-projection anchors. Deterministic for a
// fixed master seed regardless of worker count: every subproblem derives its
// streams from (masterSeed, t).

#include <Eigen/Dense>
#include <atomic>
#include <cstdint>
#include <optional>
#include <thread>
#include <vector>

#include "mch/estimators.hpp"
#include "mch/io.hpp"
#include "mch/projection.hpp"
#include "mch/rng.hpp"
#include "mch/sampler.hpp"
#include "mch/sketch.hpp"

namespace mch {

enum class Mode { exact, approx };

inline std::string toString(Mode m) { return m == Mode::exact ? "exact" : "approx"; }

inline Mode modeFromString(const std::string& s) {
    if (s == "exact") return Mode::exact;
    if (s == "approx") return Mode::approx;
    throw Error("unknown mode '" + s + "'");
}

struct AnchorSet {
    std::vector<std::size_t> indices;        // k anchors, descending gHat, ties by smaller index
    Eigen::VectorXd gHat;                    // per-Y-row vote shares, sums to 1 over non-degenerate votes
    std::vector<SubproblemOutcome> outcomes; // one per subproblem, in t order
    std::size_t degenerateCount = 0;
};

/// Eq. 4 on dense data: anchor = argmin_i (Y_t(i) - max_j X_t(j))_+ with
/// (x)_+ = x if x >= 0 else infinity; ties toward the smaller index. When no
/// Y point reaches the maximum the subproblem is degenerate and the largest
/// Y_t(i) wins.
inline SubproblemOutcome solveSubproblemExact(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                                              const Eigen::VectorXd& b) {
    if (x.cols() != b.size() || y.cols() != b.size()) throw Error("solveSubproblemExact: dimension mismatch");
    const Eigen::VectorXd xt = x * b;
    const Eigen::VectorXd yt = y * b;
    const double maxX = xt.maxCoeff();

    SubproblemOutcome out;
    out.xiHat = 1.0;
    bool found = false;
    double bestVal = 0.0;
    Eigen::Index bestIdx = 0;
    for (Eigen::Index i = 0; i < yt.size(); ++i) {
        const double val = yt(i) - maxX;
        if (val < 0.0) continue;
        if (!found || val < bestVal) {
            found = true;
            bestVal = val;
            bestIdx = i;
        }
    }
    if (!found) {
        out.degenerate = true;
        yt.maxCoeff(&bestIdx);
    }
    out.anchorIdx = static_cast<std::size_t>(bestIdx);
    out.cStar = maxX;
    return out;
}

struct ApproxContext {
    const SampledMatrix* xStore = nullptr;
    const SampledMatrix* yStore = nullptr;
    const ImplicitBasis* basisX = nullptr;
    const ImplicitBasis* basisY = nullptr;
    std::vector<double> normsX;  // exact ||v_i||^2 per basis column
    std::vector<double> normsY;
    bool shared = false;         // Y is X: share sketches and estimates
};

/// Algorithm-2 subproblem: estimate qHat for both sides, form xiHat from the
/// diagonal-Gram projection norms, wrap both implicit matvecs as sampleable
/// distributions, and post-select.
inline SubproblemOutcome solveSubproblemApprox(const ApproxContext& ctx, const ProjectionSpec& proj,
                                               const EstimatorConfig& estCfg, const PostSelectConfig& psCfg,
                                               std::uint64_t masterSeed, std::uint64_t t) {
    const CoordinateEstimate qX =
        buildQHat(*ctx.xStore, *ctx.basisX, proj, ctx.normsX, estCfg, masterSeed, 2 * t);
    const CoordinateEstimate qY =
        ctx.shared ? qX : buildQHat(*ctx.yStore, *ctx.basisY, proj, ctx.normsY, estCfg, masterSeed, 2 * t + 1);

    SubproblemOutcome out;
    const double normXSq = approxProjNorm(qX.qHat, ctx.normsX);
    const double normYSq = ctx.shared ? normXSq : approxProjNorm(qY.qHat, ctx.normsY);
    if (qX.degenerate || qY.degenerate || normXSq <= 0.0 || normYSq <= 0.0) {
        out.degenerate = true;
        return out;
    }
    out.xiHat = xiEstimate(normXSq, normYSq);

    VecDistribution distX = matvecDistribution(thinFromBasis(*ctx.basisX, *ctx.xStore, ctx.normsX), qX.qHat, normXSq);
    VecDistribution distY =
        ctx.shared ? distX
                   : matvecDistribution(thinFromBasis(*ctx.basisY, *ctx.yStore, ctx.normsY), qY.qHat, normYSq);

    Rng rng = makeStream(masterSeed, {t, 0x70736c63ULL});
    return heuristicPostSelect(distX, distY, out.xiHat, psCfg, rng);
}

/// Eq. 3 vote: gHat(i) = share of non-degenerate subproblems anchored at i;
/// the k largest shares win, ties toward the smaller index.
inline AnchorSet conquer(std::vector<SubproblemOutcome> outcomes, std::size_t k, std::size_t nY) {
    AnchorSet set;
    set.gHat = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nY));
    std::size_t voters = 0;
    for (const SubproblemOutcome& o : outcomes) {
        if (o.degenerate) {
            ++set.degenerateCount;
            continue;
        }
        set.gHat(static_cast<Eigen::Index>(o.anchorIdx)) += 1.0;
        ++voters;
    }
    if (voters == 0) throw Error("conquer: every subproblem was degenerate");
    set.gHat /= static_cast<double>(voters);

    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < nY; ++i) {
        if (set.gHat(static_cast<Eigen::Index>(i)) > 0.0) order.push_back(i);
    }
    if (order.size() < k) {
        throw Error("conquer: only " + std::to_string(order.size()) + " distinct anchors voted, " +
                    std::to_string(k) + " requested");
    }
    std::sort(order.begin(), order.end(), [&set](std::size_t a, std::size_t b) {
        const double ga = set.gHat(static_cast<Eigen::Index>(a));
        const double gb = set.gHat(static_cast<Eigen::Index>(b));
        return ga != gb ? ga > gb : a < b;
    });
    order.resize(k);
    set.indices = std::move(order);
    set.outcomes = std::move(outcomes);
    return set;
}

struct SolveConfig {
    std::size_t k = 0;
    std::size_t p = 0;  // 0 = default ceil(k log2 k) * 10
    Mode mode = Mode::approx;
    Ensemble ensemble = Ensemble::uniformNonneg;
    SketchConfig sketch;            // s must be set for approx mode
    EstimatorConfig estimator;
    PostSelectConfig postSelect;
    std::uint64_t masterSeed = 0;
    std::size_t threads = 1;
};

inline std::size_t defaultSubproblemCount(std::size_t k) {
    if (k <= 1) return 10;
    return static_cast<std::size_t>(std::ceil(static_cast<double>(k) * std::log2(static_cast<double>(k)))) * 10;
}

namespace detail {

/// Run fn(t) for t in [0,p) on cfgThreads workers. Results are indexed by t,
/// so the schedule cannot affect the output.
template <typename Fn>
inline void parallelFor(std::size_t p, std::size_t threads, Fn&& fn) {
    threads = std::max<std::size_t>(threads, 1);
    if (threads == 1) {
        for (std::size_t t = 0; t < p; ++t) fn(t);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (std::size_t w = 0; w < threads; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t t = next.fetch_add(1); t < p; t = next.fetch_add(1)) fn(t);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

}  // namespace detail

/// Full pipeline on dense inputs. Pass the same matrix for x and y in the
/// SNMF case; sketches and estimates are shared when the buffers coincide.
inline AnchorSet solve(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, SolveConfig cfg) {
    if (cfg.k == 0) throw Error("solve: k must be positive");
    if (x.cols() != y.cols()) throw Error("solve: X and Y must share the column dimension");
    const std::size_t p = cfg.p != 0 ? cfg.p : defaultSubproblemCount(cfg.k);
    const std::size_t m = static_cast<std::size_t>(x.cols());
    const bool shared = x.data() == y.data();

    Rng projRng = makeStream(cfg.masterSeed, {0x70726f6aULL});
    const std::vector<ProjectionSpec> projections =
        generateProjections(m, p, cfg.ensemble, projRng, cfg.ensemble == Ensemble::dataRow ? &y : nullptr);

    std::vector<SubproblemOutcome> outcomes(p);
    std::vector<std::string> failures(p);

    if (cfg.mode == Mode::exact) {
        detail::parallelFor(p, cfg.threads, [&](std::size_t t) {
            try {
                outcomes[t] = solveSubproblemExact(x, y, projections[t].b);
            } catch (const std::exception& e) {
                failures[t] = e.what();
            }
        });
    } else {
        if (cfg.sketch.s == 0) throw Error("solve: approx mode needs a sample count s");
        ApproxContext ctx;
        SampledMatrix xStore = fromDense(x);
        std::optional<SampledMatrix> yStore;
        if (!shared) yStore = fromDense(y);
        ctx.xStore = &xStore;
        ctx.yStore = shared ? &xStore : &*yStore;
        ctx.shared = shared;

        SketchConfig scfg = cfg.sketch;
        scfg.k = cfg.k;
        Rng sketchRngX = makeStream(cfg.masterSeed, {0x736b5858ULL});
        ImplicitBasis basisX = subsample(xStore, scfg, sketchRngX);
        std::optional<ImplicitBasis> basisY;
        if (!shared) {
            Rng sketchRngY = makeStream(cfg.masterSeed, {0x736b5959ULL});
            basisY = subsample(*ctx.yStore, scfg, sketchRngY);
        }
        ctx.basisX = &basisX;
        ctx.basisY = shared ? &basisX : &*basisY;
        for (std::size_t i = 0; i < ctx.basisX->rank(); ++i) {
            ctx.normsX.push_back(basisNormSqExact(*ctx.basisX, *ctx.xStore, i));
        }
        ctx.normsY = shared ? ctx.normsX : [&] {
            std::vector<double> norms;
            for (std::size_t i = 0; i < ctx.basisY->rank(); ++i) {
                norms.push_back(basisNormSqExact(*ctx.basisY, *ctx.yStore, i));
            }
            return norms;
        }();

        detail::parallelFor(p, cfg.threads, [&](std::size_t t) {
            try {
                outcomes[t] =
                    solveSubproblemApprox(ctx, projections[t], cfg.estimator, cfg.postSelect, cfg.masterSeed, t);
            } catch (const std::exception& e) {
                failures[t] = e.what();
            }
        });
    }

    for (std::size_t t = 0; t < p; ++t) {
        if (!failures[t].empty()) throw Error("subproblem " + std::to_string(t) + ": " + failures[t]);
    }
    return conquer(std::move(outcomes), cfg.k, static_cast<std::size_t>(y.rows()));
}

}  // namespace mch
