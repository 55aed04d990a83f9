#pragma once

// Length-square sampling store: binary sum trees over squared magnitudes,
// giving O(log) entry queries, norm queries, and index sampling with
// probability proportional to squared magnitude. Immutable after build;
// safe for unsynchronized concurrent reads.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mch/rng.hpp"

namespace mch {

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Binary sum tree over nonnegative weights, heap layout, leaves padded to a
/// power of two. One uniform variate descends from the root to a leaf.
class WeightTree {
public:
    WeightTree() = default;

    explicit WeightTree(std::span<const double> weights) : count_(weights.size()) {
        leafBase_ = 1;
        while (leafBase_ < std::max<std::size_t>(count_, 1)) leafBase_ *= 2;
        node_.assign(2 * leafBase_, 0.0);
        for (std::size_t i = 0; i < count_; ++i) {
            if (weights[i] < 0.0) throw Error("WeightTree: negative weight at index " + std::to_string(i));
            node_[leafBase_ + i] = weights[i];
        }
        for (std::size_t i = leafBase_ - 1; i >= 1; --i) node_[i] = node_[2 * i] + node_[2 * i + 1];
    }

    std::size_t size() const { return count_; }
    double total() const { return count_ == 0 ? 0.0 : node_[1]; }
    double weight(std::size_t i) const {
        if (i >= count_) throw Error("WeightTree: index out of range");
        return node_[leafBase_ + i];
    }

    /// Index drawn with probability weight(i)/total(), by descent on one
    /// uniform variate. Errors on an all-zero tree, never falls back to uniform.
    std::size_t sample(double u) const {
        if (total() <= 0.0) throw Error("WeightTree: cannot sample from zero total weight");
        double x = u * total();
        std::size_t node = 1;
        while (node < leafBase_) {
            const double left = node_[2 * node];
            if (x < left) {
                node = 2 * node;
            } else {
                x -= left;
                node = 2 * node + 1;
            }
        }
        std::size_t i = node - leafBase_;
        // Rounding at the right edge can land on a zero pad leaf.
        while (i > 0 && (i >= count_ || node_[leafBase_ + i] == 0.0)) --i;
        return i;
    }

    std::size_t sample(Rng& rng) const { return sample(uniformDouble(rng)); }

    /// Verify every internal node equals the sum of its children.
    bool audit(double relTol = 1e-12) const {
        if (count_ == 0) return true;
        for (std::size_t i = 1; i < leafBase_; ++i) {
            const double expect = node_[2 * i] + node_[2 * i + 1];
            const double scale = std::max({std::abs(node_[i]), std::abs(expect), 1.0});
            if (std::abs(node_[i] - expect) > relTol * scale) return false;
        }
        return true;
    }

private:
    std::size_t count_ = 0;
    std::size_t leafBase_ = 0;
    std::vector<double> node_;
};

/// BNS over a real vector: leaves hold (entry^2, sign), internal nodes hold
/// subtree sums of squares.
class SampledVector {
public:
    SampledVector() = default;

    explicit SampledVector(std::span<const double> values) {
        std::vector<double> squares(values.size());
        sign_.resize(values.size());
        for (std::size_t i = 0; i < values.size(); ++i) {
            squares[i] = values[i] * values[i];
            sign_[i] = values[i] < 0.0 ? -1 : (values[i] > 0.0 ? 1 : 0);
        }
        tree_ = WeightTree(squares);
    }

    std::size_t size() const { return tree_.size(); }
    double normSq() const { return tree_.total(); }
    double squared(std::size_t i) const { return tree_.weight(i); }
    double value(std::size_t i) const { return static_cast<double>(sign_[i]) * std::sqrt(tree_.weight(i)); }
    std::size_t sample(Rng& rng) const { return tree_.sample(rng); }
    const WeightTree& tree() const { return tree_; }

private:
    WeightTree tree_;
    std::vector<std::int8_t> sign_;
};

struct Triplet {
    std::size_t row = 0;
    std::size_t col = 0;
    double value = 0.0;
};

/// Immutable matrix wrapped in row- and column-oriented square-magnitude
/// trees. Both orientations are materialized so that within-row and
/// within-column sampling are both O(log).
class SampledMatrix {
public:
    SampledMatrix() = default;

    static SampledMatrix build(std::span<const Triplet> triplets, std::size_t n, std::size_t m) {
        SampledMatrix out;
        out.n_ = n;
        out.m_ = m;

        std::vector<Triplet> sorted(triplets.begin(), triplets.end());
        for (const Triplet& t : sorted) {
            if (t.row >= n || t.col >= m) {
                throw Error("SampledMatrix::build: index (" + std::to_string(t.row) + "," +
                            std::to_string(t.col) + ") out of range for " + std::to_string(n) + "x" +
                            std::to_string(m));
            }
        }
        std::sort(sorted.begin(), sorted.end(), [](const Triplet& a, const Triplet& b) {
            return a.row != b.row ? a.row < b.row : a.col < b.col;
        });
        for (std::size_t i = 1; i < sorted.size(); ++i) {
            if (sorted[i].row == sorted[i - 1].row && sorted[i].col == sorted[i - 1].col) {
                throw Error("SampledMatrix::build: duplicate entry at (" + std::to_string(sorted[i].row) +
                            "," + std::to_string(sorted[i].col) + ")");
            }
        }

        out.row_ = buildAxis(sorted, n, /*byRow=*/true);
        std::sort(sorted.begin(), sorted.end(), [](const Triplet& a, const Triplet& b) {
            return a.col != b.col ? a.col < b.col : a.row < b.row;
        });
        out.col_ = buildAxis(sorted, m, /*byRow=*/false);
        out.frobSq_ = out.row_.normTree.total();
        return out;
    }

    std::size_t rows() const { return n_; }
    std::size_t cols() const { return m_; }
    double frobNormSq() const { return frobSq_; }

    double entry(std::size_t i, std::size_t j) const {
        checkRow(i);
        checkCol(j);
        const auto& idx = row_.idx[i];
        const auto pos = std::lower_bound(idx.begin(), idx.end(), j);
        if (pos == idx.end() || *pos != j) return 0.0;
        return row_.line[i].value(static_cast<std::size_t>(pos - idx.begin()));
    }

    double rowNormSq(std::size_t i) const {
        checkRow(i);
        return row_.normTree.weight(i);
    }

    double colNormSq(std::size_t j) const {
        checkCol(j);
        return col_.normTree.weight(j);
    }

    /// i with probability rowNormSq(i)/frobNormSq().
    std::size_t sampleRowIndex(Rng& rng) const { return row_.normTree.sample(rng); }

    /// j with probability colNormSq(j)/frobNormSq().
    std::size_t sampleColIndex(Rng& rng) const { return col_.normTree.sample(rng); }

    /// j with probability entry(i,j)^2 / rowNormSq(i).
    std::size_t sampleIndexInRow(std::size_t i, Rng& rng) const {
        checkRow(i);
        if (row_.line[i].normSq() <= 0.0) throw Error("sampleIndexInRow: row " + std::to_string(i) + " is zero");
        return row_.idx[i][row_.line[i].sample(rng)];
    }

    /// i with probability entry(i,j)^2 / colNormSq(j).
    std::size_t sampleIndexInCol(std::size_t j, Rng& rng) const {
        checkCol(j);
        if (col_.line[j].normSq() <= 0.0) throw Error("sampleIndexInCol: column " + std::to_string(j) + " is zero");
        return col_.idx[j][col_.line[j].sample(rng)];
    }

    /// Stored entries in row-major order (build . toTriplets is identity).
    std::vector<Triplet> toTriplets() const {
        std::vector<Triplet> out;
        for (std::size_t i = 0; i < n_; ++i) {
            for (std::size_t k = 0; k < row_.idx[i].size(); ++k) {
                out.push_back({i, row_.idx[i][k], row_.line[i].value(k)});
            }
        }
        return out;
    }

    /// Full-tree audit: node sums in every tree, plus row/column/Frobenius
    /// norm agreement.
    bool audit(double relTol = 1e-10) const {
        if (!row_.normTree.audit(relTol) || !col_.normTree.audit(relTol)) return false;
        for (const auto& v : row_.line) {
            if (!v.tree().audit(relTol)) return false;
        }
        for (const auto& v : col_.line) {
            if (!v.tree().audit(relTol)) return false;
        }
        for (std::size_t i = 0; i < n_; ++i) {
            if (!close(row_.normTree.weight(i), row_.line[i].normSq(), relTol)) return false;
        }
        for (std::size_t j = 0; j < m_; ++j) {
            if (!close(col_.normTree.weight(j), col_.line[j].normSq(), relTol)) return false;
        }
        return close(frobSq_, row_.normTree.total(), relTol) && close(frobSq_, col_.normTree.total(), relTol);
    }

private:
    struct Axis {
        std::vector<std::vector<std::size_t>> idx;  // per-line sorted cross indices
        std::vector<SampledVector> line;            // per-line BNS over present entries
        WeightTree normTree;                        // over per-line norms^2
    };

    static Axis buildAxis(const std::vector<Triplet>& sorted, std::size_t lines, bool byRow) {
        Axis axis;
        axis.idx.resize(lines);
        axis.line.resize(lines);
        std::vector<std::vector<double>> vals(lines);
        for (const Triplet& t : sorted) {
            const std::size_t li = byRow ? t.row : t.col;
            axis.idx[li].push_back(byRow ? t.col : t.row);
            vals[li].push_back(t.value);
        }
        std::vector<double> norms(lines, 0.0);
        for (std::size_t li = 0; li < lines; ++li) {
            axis.line[li] = SampledVector(vals[li]);
            norms[li] = axis.line[li].normSq();
        }
        axis.normTree = WeightTree(norms);
        return axis;
    }

    static bool close(double a, double b, double relTol) {
        return std::abs(a - b) <= relTol * std::max({std::abs(a), std::abs(b), 1.0});
    }

    void checkRow(std::size_t i) const {
        if (i >= n_) throw Error("SampledMatrix: row index " + std::to_string(i) + " out of range");
    }
    void checkCol(std::size_t j) const {
        if (j >= m_) throw Error("SampledMatrix: column index " + std::to_string(j) + " out of range");
    }

    Axis row_;
    Axis col_;
    std::size_t n_ = 0;
    std::size_t m_ = 0;
    double frobSq_ = 0.0;
};

}  // namespace mch
