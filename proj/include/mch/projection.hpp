#pragma once

// One-dimensional projection directions, always unit l2 norm, each wrapped
// in a BNS so that index sampling proportional to squared entries is O(log m).

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "mch/matstore.hpp"
#include "mch/rng.hpp"

namespace mch {

enum class Ensemble { gaussian, unitBasis, dataRow, uniformNonneg };

inline std::string toString(Ensemble e) {
    switch (e) {
        case Ensemble::gaussian: return "gaussian";
        case Ensemble::unitBasis: return "unitBasis";
        case Ensemble::dataRow: return "dataRow";
        case Ensemble::uniformNonneg: return "uniformNonneg";
    }
    return "unknown";
}

inline Ensemble ensembleFromString(const std::string& s) {
    if (s == "gaussian") return Ensemble::gaussian;
    if (s == "unitBasis") return Ensemble::unitBasis;
    if (s == "dataRow") return Ensemble::dataRow;
    if (s == "uniformNonneg") return Ensemble::uniformNonneg;
    throw Error("unknown ensemble '" + s + "'");
}

struct ProjectionSpec {
    Eigen::VectorXd b;       // unit l2 norm
    Ensemble ensemble = Ensemble::uniformNonneg;
    std::uint64_t seed = 0;  // tag: index of this projection in its batch
    SampledVector tree;      // BNS over b for length-square sampling

    static ProjectionSpec fromVector(Eigen::VectorXd v, Ensemble e, std::uint64_t seed) {
        const double norm = v.norm();
        if (norm <= 0.0) throw Error("ProjectionSpec: zero direction");
        v /= norm;
        ProjectionSpec spec;
        spec.b = std::move(v);
        spec.ensemble = e;
        spec.seed = seed;
        spec.tree = SampledVector(std::span<const double>(spec.b.data(), static_cast<std::size_t>(spec.b.size())));
        return spec;
    }
};

/// p independent unit directions from the chosen ensemble. dataRow draws rows
/// of the supplied matrix; uniformNonneg keeps every coordinate nonnegative.
inline std::vector<ProjectionSpec> generateProjections(std::size_t m, std::size_t p, Ensemble ensemble,
                                                       Rng& rng, const Eigen::MatrixXd* data = nullptr) {
    if (p == 0) throw Error("generateProjections: p must be positive");
    if (ensemble == Ensemble::dataRow && data == nullptr) {
        throw Error("generateProjections: dataRow ensemble needs a data matrix");
    }
    std::vector<ProjectionSpec> out;
    out.reserve(p);
    for (std::size_t t = 0; t < p; ++t) {
        Eigen::VectorXd v(static_cast<Eigen::Index>(m));
        switch (ensemble) {
            case Ensemble::gaussian:
                for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = gaussian(rng);
                break;
            case Ensemble::unitBasis: {
                v.setZero();
                v(static_cast<Eigen::Index>(uniformIndex(rng, m))) = 1.0;
                break;
            }
            case Ensemble::dataRow: {
                if (data->cols() != static_cast<Eigen::Index>(m)) {
                    throw Error("generateProjections: data matrix width does not match m");
                }
                v = data->row(static_cast<Eigen::Index>(uniformIndex(rng, static_cast<std::size_t>(data->rows())))).transpose();
                break;
            }
            case Ensemble::uniformNonneg:
                for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = uniformDouble(rng);
                break;
        }
        out.push_back(ProjectionSpec::fromVector(std::move(v), ensemble, t));
    }
    return out;
}

}  // namespace mch
