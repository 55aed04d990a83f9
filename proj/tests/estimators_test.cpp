#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include "mch/estimators.hpp"
#include "mch/io.hpp"

using namespace mch;

namespace {

VectorAccess accessFromVector(const Eigen::VectorXd& v) {
    auto sv = std::make_shared<SampledVector>(
        std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
    VectorAccess a;
    a.normSq = sv->normSq();
    a.sample = [sv](Rng& rng) { return sv->sample(rng); };
    a.value = [sv](std::size_t j) { return sv->value(j); };
    return a;
}

/// Identity-on-H basis: for H = I_n the column stage with every column drawn
/// once at scale 1 gives R = I, so sigma = 1, omega = I and v_i = e_i exactly.
ImplicitBasis identityBasis(std::size_t n) {
    ImplicitBasis b;
    for (std::size_t i = 0; i < n; ++i) {
        b.colIdx.push_back(i);
        b.colScale.push_back(1.0);
        b.rowIdx.push_back(i);
        b.rowScale.push_back(1.0);
    }
    b.sigma = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n));
    b.omega = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    return b;
}

}  // namespace

TEST_CASE("median-of-means budget formulas") {
    // N_p = ceil(8 ln(1/0.05)) = 24, N_q = ceil(4*1/0.01) = 400.
    const auto [np, nq] = mediansBudget(0.1, 0.05, 1.0);
    REQUIRE(np == 24);
    REQUIRE(nq == 400);
}

TEST_CASE("identity case: every draw is exactly 1") {
    const SampledMatrix h = fromDense(Eigen::MatrixXd::Identity(2, 2));
    Eigen::VectorXd e1(2);
    e1 << 1.0, 0.0;
    const ProjectionSpec proj = ProjectionSpec::fromVector(e1, Ensemble::unitBasis, 0);
    EstimatorConfig cfg;
    cfg.nGroups = 3;
    cfg.groupSize = 5;
    Rng rng = makeStream(1, {0});
    REQUIRE(innerProductEstimate(h, accessFromVector(e1), proj, cfg, rng) == 1.0);
}

TEST_CASE("single-atom distribution: estimate is exactly the entry") {
    Eigen::MatrixXd m(2, 2);
    m << 2.0, 0.0, 0.0, 0.0;
    const SampledMatrix h = fromDense(m);
    Eigen::VectorXd e1(2);
    e1 << 1.0, 0.0;
    const ProjectionSpec proj = ProjectionSpec::fromVector(e1, Ensemble::unitBasis, 0);
    EstimatorConfig cfg;
    cfg.nGroups = 3;
    cfg.groupSize = 5;
    Rng rng = makeStream(2, {0});
    REQUIRE(innerProductEstimate(h, accessFromVector(e1), proj, cfg, rng) == 2.0);
}

TEST_CASE("raw draws are unbiased for v^T H B") {
    Rng gen = makeStream(17, {0});
    Eigen::MatrixXd m(8, 8);
    for (Eigen::Index i = 0; i < 8; ++i)
        for (Eigen::Index j = 0; j < 8; ++j) m(i, j) = uniformDouble(gen);
    const SampledMatrix h = fromDense(m);
    Eigen::VectorXd v(8), b(8);
    for (Eigen::Index i = 0; i < 8; ++i) {
        v(i) = uniformDouble(gen) + 0.1;
        b(i) = uniformDouble(gen) + 0.1;
    }
    v.normalize();
    const ProjectionSpec proj = ProjectionSpec::fromVector(b, Ensemble::uniformNonneg, 0);
    const double exact = v.transpose() * m * proj.b;

    EstimatorConfig cfg;
    cfg.nGroups = 1;  // a single group mean is the raw empirical mean
    cfg.groupSize = 1000000;
    Rng rng = makeStream(18, {0});
    const double mean = innerProductEstimate(h, accessFromVector(v), proj, cfg, rng);
    REQUIRE(std::abs(mean - exact) / std::abs(exact) < 0.02);
}

TEST_CASE("median-of-means concentrates within eps in >= 95 of 100 trials") {
    Rng gen = makeStream(23, {0});
    Eigen::MatrixXd m(8, 8);
    for (Eigen::Index i = 0; i < 8; ++i)
        for (Eigen::Index j = 0; j < 8; ++j) m(i, j) = uniformDouble(gen);
    const SampledMatrix h = fromDense(m);
    Eigen::VectorXd v(8), b(8);
    for (Eigen::Index i = 0; i < 8; ++i) {
        v(i) = gaussian(gen);
        b(i) = uniformDouble(gen) + 0.05;
    }
    v.normalize();
    const ProjectionSpec proj = ProjectionSpec::fromVector(b, Ensemble::uniformNonneg, 0);
    const double exact = v.transpose() * m * proj.b;

    EstimatorConfig cfg;
    cfg.eps = 0.5;
    cfg.delta = 0.05;
    int hits = 0;
    for (std::uint64_t trial = 0; trial < 100; ++trial) {
        Rng rng = makeStream(24, {trial});
        const double est = innerProductEstimate(h, accessFromVector(v), proj, cfg, rng);
        if (std::abs(est - exact) <= cfg.eps) ++hits;
    }
    REQUIRE(hits >= 95);
}

TEST_CASE("zero-norm inputs are rejected") {
    const SampledMatrix h = fromDense(Eigen::MatrixXd::Identity(2, 2));
    Eigen::VectorXd e1(2);
    e1 << 1.0, 0.0;
    const ProjectionSpec proj = ProjectionSpec::fromVector(e1, Ensemble::unitBasis, 0);
    VectorAccess zero = accessFromVector(e1);
    zero.normSq = 0.0;
    EstimatorConfig cfg;
    cfg.nGroups = 1;
    cfg.groupSize = 1;
    Rng rng = makeStream(3, {0});
    REQUIRE_THROWS_AS(innerProductEstimate(h, zero, proj, cfg, rng), Error);
}

TEST_CASE("buildQHat on the exact identity basis recovers e1 coordinates") {
    const SampledMatrix h = fromDense(Eigen::MatrixXd::Identity(2, 2));
    const ImplicitBasis b = identityBasis(2);
    Eigen::VectorXd e1(2);
    e1 << 1.0, 0.0;
    const ProjectionSpec proj = ProjectionSpec::fromVector(e1, Ensemble::unitBasis, 0);
    EstimatorConfig cfg;
    cfg.eps = 0.1;
    const CoordinateEstimate est = buildQHat(h, b, proj, {1.0, 1.0}, cfg, 7, 0);
    REQUIRE_FALSE(est.degenerate);
    REQUIRE(est.qHat(0) == Catch::Approx(1.0).margin(0.1));
    REQUIRE(est.qHat(1) == Catch::Approx(0.0).margin(0.1));
    REQUIRE(est.perCoordinateDraws > 0);
}

TEST_CASE("buildQHat is deterministic in the master seed") {
    Rng gen = makeStream(31, {0});
    Eigen::MatrixXd m(6, 6);
    for (Eigen::Index i = 0; i < 6; ++i)
        for (Eigen::Index j = 0; j < 6; ++j) m(i, j) = uniformDouble(gen) + 0.01;
    const SampledMatrix h = fromDense(m);
    SketchConfig scfg;
    scfg.s = 20;
    scfg.k = 2;
    Rng srng = makeStream(32, {0});
    const ImplicitBasis b = subsample(h, scfg, srng);
    std::vector<double> norms;
    for (std::size_t i = 0; i < b.rank(); ++i) norms.push_back(basisNormSqExact(b, h, i));
    Eigen::VectorXd dir(6);
    for (Eigen::Index i = 0; i < 6; ++i) dir(i) = uniformDouble(gen);
    const ProjectionSpec proj = ProjectionSpec::fromVector(dir, Ensemble::uniformNonneg, 0);
    EstimatorConfig cfg;
    cfg.eps = 0.3;
    const CoordinateEstimate a = buildQHat(h, b, proj, norms, cfg, 99, 5);
    const CoordinateEstimate c = buildQHat(h, b, proj, norms, cfg, 99, 5);
    REQUIRE(a.qHat == c.qHat);
    const CoordinateEstimate d = buildQHat(h, b, proj, norms, cfg, 99, 6);
    REQUIRE(a.qHat != d.qHat);
}

TEST_CASE("all-zero projection flags the estimate degenerate") {
    const SampledMatrix h = fromDense(Eigen::MatrixXd::Identity(2, 2));
    const ImplicitBasis b = identityBasis(2);
    ProjectionSpec proj;
    proj.b = Eigen::VectorXd::Zero(2);
    proj.tree = SampledVector(std::vector<double>{0.0, 0.0});
    EstimatorConfig cfg;
    const CoordinateEstimate est = buildQHat(h, b, proj, {1.0, 1.0}, cfg, 7, 0);
    REQUIRE(est.degenerate);
    REQUIRE(est.qHat.norm() == 0.0);
}

TEST_CASE("basis norms: exact unit vectors give 1, the estimator agrees") {
    const SampledMatrix h = fromDense(Eigen::MatrixXd::Identity(3, 3));
    const ImplicitBasis b = identityBasis(3);
    REQUIRE(basisNormSqExact(b, h, 0) == Catch::Approx(1.0));
    Rng rng = makeStream(5, {0});
    REQUIRE(basisNormSqEstimate(b, h, 0, 2000, rng) == Catch::Approx(1.0).margin(0.1));
    Rng rng2 = makeStream(5, {1});
    REQUIRE_THROWS_AS(basisNormSqEstimate(b, h, 0, 0, rng2), Error);
}

TEST_CASE("sketched basis norms stay near 1") {
    Rng gen = makeStream(37, {0});
    Eigen::MatrixXd m(10, 10);
    for (Eigen::Index i = 0; i < 10; ++i)
        for (Eigen::Index j = 0; j < 10; ++j) m(i, j) = uniformDouble(gen) + 0.01;
    const SampledMatrix h = fromDense(m);
    SketchConfig scfg;
    scfg.s = 200;
    scfg.k = 2;
    Rng srng = makeStream(38, {0});
    const ImplicitBasis b = subsample(h, scfg, srng);
    for (std::size_t i = 0; i < b.rank(); ++i) {
        REQUIRE(basisNormSqExact(b, h, i) == Catch::Approx(1.0).margin(0.3));
    }
}

TEST_CASE("approxProjNorm: Pythagorean on an orthonormal basis") {
    Eigen::VectorXd q(2);
    q << 3.0, 4.0;
    REQUIRE(approxProjNorm(q, {1.0, 1.0}) == Catch::Approx(25.0));
}

TEST_CASE("approxProjNorm is within the defect bound of the dense norm") {
    Rng gen = makeStream(41, {0});
    Eigen::MatrixXd m(12, 12);
    for (Eigen::Index i = 0; i < 12; ++i)
        for (Eigen::Index j = 0; j < 12; ++j) m(i, j) = uniformDouble(gen) + 0.01;
    const SampledMatrix h = fromDense(m);
    SketchConfig scfg;
    scfg.s = 150;
    scfg.k = 3;
    Rng srng = makeStream(42, {0});
    const ImplicitBasis b = subsample(h, scfg, srng);
    Eigen::MatrixXd v(12, static_cast<Eigen::Index>(b.rank()));
    std::vector<double> norms;
    for (std::size_t i = 0; i < b.rank(); ++i) {
        for (std::size_t j = 0; j < 12; ++j)
            v(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = basisEntry(b, h, i, j);
        norms.push_back(basisNormSqExact(b, h, i));
    }
    Eigen::VectorXd q(static_cast<Eigen::Index>(b.rank()));
    for (Eigen::Index i = 0; i < q.size(); ++i) q(i) = gaussian(gen);
    const double dense = (v * q).squaredNorm();
    const double approx = approxProjNorm(q, norms);
    const double defect = orthonormalityDefect(b, h);
    REQUIRE(std::abs(approx - dense) <=
            defect * q.squaredNorm() * static_cast<double>(b.rank()) + 1e-12);
}

TEST_CASE("xiEstimate conventions") {
    REQUIRE(xiEstimate(25.0, 25.0) == 1.0);
    // X_t = 2 Y_t entrywise: squared norms quadruple, xi = 4.
    REQUIRE(xiEstimate(100.0, 25.0) == 4.0);
    REQUIRE_THROWS_AS(xiEstimate(1.0, 0.0), Error);
}

TEST_CASE("uncached rejection access samples the same law as the cached trees") {
    Rng gen = makeStream(47, {0});
    Eigen::MatrixXd m(8, 8);
    for (Eigen::Index i = 0; i < 8; ++i)
        for (Eigen::Index j = 0; j < 8; ++j) m(i, j) = uniformDouble(gen) + 0.01;
    const SampledMatrix h = fromDense(m);
    SketchConfig cached;
    cached.s = 60;
    cached.k = 2;
    SketchConfig implicit = cached;
    implicit.cacheLimit = 0;
    Rng r1 = makeStream(48, {0});
    Rng r2 = makeStream(48, {0});
    const ImplicitBasis bc = subsample(h, cached, r1);
    const ImplicitBasis bi = subsample(h, implicit, r2);
    const double normSq = basisNormSqExact(bc, h, 0);
    const VectorAccess ac = basisVectorAccess(bc, h, 0, normSq);
    const VectorAccess ai = basisVectorAccess(bi, h, 0, normSq);

    const std::size_t draws = 40000;
    std::vector<double> fc(8, 0.0), fi(8, 0.0);
    Rng rng = makeStream(49, {0});
    for (std::size_t d = 0; d < draws; ++d) {
        fc[ac.sample(rng)] += 1.0;
        fi[ai.sample(rng)] += 1.0;
    }
    double tv = 0.0;
    for (std::size_t j = 0; j < 8; ++j) tv += std::abs(fc[j] - fi[j]) / draws;
    REQUIRE(tv / 2.0 < 0.02);
}
