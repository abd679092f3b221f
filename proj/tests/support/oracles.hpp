// SPDX-License-Identifier: Apache-2.0
#pragma once

// Independent test oracles. Nothing here may call into the implementation
// paths it is used to check.

#include "knowtag/chat.hpp"
#include "knowtag/eval.hpp"

#include <cstddef>
#include <limits>
#include <vector>

namespace knowtag::testing {

/// Canonical cluster labels: clusters renumbered by order of first
/// appearance, so label permutations compare equal.
inline std::vector<int> canonical_partition(const std::vector<int>& assignments) {
    std::vector<int> relabel(assignments.size(), -1);
    std::vector<int> mapping;
    std::vector<int> out;
    out.reserve(assignments.size());
    for (const int a : assignments) {
        int label = -1;
        for (std::size_t i = 0; i < mapping.size(); ++i) {
            if (mapping[i] == a) { label = static_cast<int>(i); break; }
        }
        if (label == -1) {
            label = static_cast<int>(mapping.size());
            mapping.push_back(a);
        }
        out.push_back(label);
    }
    return out;
}

struct PartitionOptimum {
    std::vector<int> assignments; // canonical labels
    double sse = 0.0;
};

/// Exhaustive k-partition oracle: tries every assignment of points to k
/// non-empty clusters, scoring with centroid = cluster mean. Feasible for
/// the <= 8 point instances the suite uses (k^n <= 6561).
inline PartitionOptimum brute_force_kmeans(const std::vector<EmbeddingVector>& points, int k) {
    const std::size_t n = points.size();
    const std::size_t dim = points[0].size();
    std::vector<int> assignment(n, 0);
    PartitionOptimum best;
    best.sse = std::numeric_limits<double>::infinity();

    std::size_t combos = 1;
    for (std::size_t i = 0; i < n; ++i) combos *= static_cast<std::size_t>(k);

    for (std::size_t code = 0; code < combos; ++code) {
        std::size_t rest = code;
        std::vector<std::size_t> sizes(static_cast<std::size_t>(k), 0);
        for (std::size_t i = 0; i < n; ++i) {
            assignment[i] = static_cast<int>(rest % static_cast<std::size_t>(k));
            ++sizes[static_cast<std::size_t>(assignment[i])];
            rest /= static_cast<std::size_t>(k);
        }
        bool all_non_empty = true;
        for (const auto s : sizes) all_non_empty = all_non_empty && s > 0;
        if (!all_non_empty) continue;

        std::vector<EmbeddingVector> means(static_cast<std::size_t>(k), EmbeddingVector(dim, 0.0));
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t d = 0; d < dim; ++d) {
                means[static_cast<std::size_t>(assignment[i])][d] += points[i][d];
            }
        }
        for (std::size_t c = 0; c < static_cast<std::size_t>(k); ++c) {
            for (std::size_t d = 0; d < dim; ++d) means[c][d] /= static_cast<double>(sizes[c]);
        }
        double sse = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t d = 0; d < dim; ++d) {
                const double diff = points[i][d] - means[static_cast<std::size_t>(assignment[i])][d];
                sse += diff * diff;
            }
        }
        if (sse < best.sse) {
            best.sse = sse;
            best.assignments = canonical_partition(assignment);
        }
    }
    return best;
}

struct OracleMetrics {
    long tp = 0;
    long fp = 0;
    long tn = 0;
    long fn = 0;
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// Plain per-sample counting with the textbook formulas, written separately
/// from the eval module.
inline OracleMetrics oracle_metrics(const std::vector<int>& gold,
                                    const std::vector<Verdict>& verdicts) {
    OracleMetrics m;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        const bool positive = verdicts[i] == Verdict::Positive;
        if (positive && gold[i] == 1) ++m.tp;
        if (positive && gold[i] == 0) ++m.fp;
        if (!positive && gold[i] == 0) ++m.tn;
        if (!positive && gold[i] == 1) ++m.fn;
    }
    const long n = m.tp + m.fp + m.tn + m.fn;
    m.accuracy = static_cast<double>(m.tp + m.tn) / static_cast<double>(n);
    if (m.tp + m.fp > 0) m.precision = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp);
    if (m.tp + m.fn > 0) m.recall = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn);
    if (m.precision + m.recall > 0.0) {
        m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
    }
    return m;
}

} // namespace knowtag::testing
