// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "knowtag/chat.hpp"
#include "knowtag/corpus.hpp"
#include "knowtag/detail/rng.hpp"
#include "knowtag/error.hpp"
#include "knowtag/prompt.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace knowtag {

struct SelectionStrategy {
    enum class Family { Random, SameKnowledge, MatchOnly, MismatchOnly, Diverse };

    Family family = Family::Random;
    int n = 2;

    bool operator==(const SelectionStrategy&) const = default;

    std::string name() const {
        std::string base;
        switch (family) {
            case Family::Random: base = "random"; break;
            case Family::SameKnowledge: base = "same-knowledge"; break;
            case Family::MatchOnly: base = "match"; break;
            case Family::MismatchOnly: base = "mismatch"; break;
            case Family::Diverse: base = "diverse"; break;
        }
        return base + ":" + std::to_string(n);
    }

    /// Parses the CLI grammar "name:count", e.g. "match:2" or "diverse:4".
    static SelectionStrategy parse(const std::string& text) {
        const auto colon = text.find(':');
        if (colon == std::string::npos || colon + 1 >= text.size()) {
            throw ConfigError("strategy must be name:count, got '" + text + "'");
        }
        const std::string base = text.substr(0, colon);
        SelectionStrategy s;
        if (base == "random") s.family = Family::Random;
        else if (base == "same-knowledge") s.family = Family::SameKnowledge;
        else if (base == "match") s.family = Family::MatchOnly;
        else if (base == "mismatch") s.family = Family::MismatchOnly;
        else if (base == "diverse") s.family = Family::Diverse;
        else throw ConfigError("unknown strategy '" + base + "'");
        try {
            s.n = std::stoi(text.substr(colon + 1));
        } catch (const std::exception&) {
            throw ConfigError("strategy count must be an integer, got '" + text + "'");
        }
        if (s.n < 1) throw ConfigError("strategy count must be >= 1");
        return s;
    }
};

/// Question embeddings keyed by question id, L2-normalized on attach so
/// Euclidean distance is rank-equivalent to cosine.
class EmbeddingSet {
public:
    EmbeddingSet() = default;

    void insert(const std::string& question_id, EmbeddingVector v) {
        for (double x : v) {
            if (!std::isfinite(x)) throw Error("non-finite embedding component for " + question_id);
        }
        if (dim_ == 0) dim_ = v.size();
        if (v.size() != dim_) {
            throw Error("embedding dimension mismatch for " + question_id + ": expected " +
                        std::to_string(dim_) + ", got " + std::to_string(v.size()));
        }
        double norm_sq = 0.0;
        for (double x : v) norm_sq += x * x;
        if (norm_sq > 0.0) {
            const double inv = 1.0 / std::sqrt(norm_sq);
            for (double& x : v) x *= inv;
        }
        vectors_[question_id] = std::move(v);
    }

    const EmbeddingVector& at(const std::string& question_id) const {
        auto it = vectors_.find(question_id);
        if (it == vectors_.end()) throw Error("no embedding for question " + question_id);
        return it->second;
    }

    bool contains(const std::string& question_id) const {
        return vectors_.find(question_id) != vectors_.end();
    }

    std::size_t dim() const { return dim_; }
    std::size_t size() const { return vectors_.size(); }

private:
    std::size_t dim_ = 0;
    std::unordered_map<std::string, EmbeddingVector> vectors_;
};

struct KMeansResult {
    std::vector<int> assignments;           // per input vector
    std::vector<EmbeddingVector> centroids; // k vectors
    double sse = 0.0;                       // sum of squared distances
    int iterations = 0;
};

namespace detail_select {

inline double squared_distance(const EmbeddingVector& a, const EmbeddingVector& b) {
    double total = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        total += d * d;
    }
    return total;
}

inline std::vector<EmbeddingVector> kmeans_pp_centroids(const std::vector<EmbeddingVector>& points,
                                                        int k, detail::SplitMix64& rng) {
    std::vector<EmbeddingVector> centroids;
    centroids.reserve(static_cast<std::size_t>(k));
    centroids.push_back(points[rng.below(points.size())]);
    std::vector<double> dist_sq(points.size());
    while (centroids.size() < static_cast<std::size_t>(k)) {
        double total = 0.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& c : centroids) best = std::min(best, squared_distance(points[i], c));
            dist_sq[i] = best;
            total += best;
        }
        if (total <= 0.0) {
            // All remaining points coincide with chosen centroids; fall back
            // to the first point not already a centroid, else the first.
            std::size_t pick = 0;
            for (std::size_t i = 0; i < points.size(); ++i) {
                bool used = false;
                for (const auto& c : centroids) {
                    if (c == points[i]) { used = true; break; }
                }
                if (!used) { pick = i; break; }
            }
            centroids.push_back(points[pick]);
            continue;
        }
        double target = rng.next_double() * total;
        std::size_t pick = points.size() - 1;
        for (std::size_t i = 0; i < points.size(); ++i) {
            target -= dist_sq[i];
            if (target <= 0.0) { pick = i; break; }
        }
        centroids.push_back(points[pick]);
    }
    return centroids;
}

inline KMeansResult lloyd(const std::vector<EmbeddingVector>& points,
                          std::vector<EmbeddingVector> centroids, int max_iterations,
                          std::vector<double>* sse_trace = nullptr) {
    const int k = static_cast<int>(centroids.size());
    const std::size_t dim = points[0].size();
    KMeansResult result;
    result.assignments.assign(points.size(), -1);

    for (int iter = 0; iter < max_iterations; ++iter) {
        result.iterations = iter + 1;
        bool changed = false;
        std::vector<std::size_t> cluster_size(static_cast<std::size_t>(k), 0);
        for (std::size_t i = 0; i < points.size(); ++i) {
            int best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (int c = 0; c < k; ++c) {
                const double d = squared_distance(points[i], centroids[static_cast<std::size_t>(c)]);
                if (d < best_d) { best_d = d; best = c; }
            }
            if (result.assignments[i] != best) {
                result.assignments[i] = best;
                changed = true;
            }
            ++cluster_size[static_cast<std::size_t>(best)];
        }

        // Empty-cluster repair: move the point farthest from its centroid
        // (among clusters that keep at least two members) into the hole.
        for (int c = 0; c < k; ++c) {
            if (cluster_size[static_cast<std::size_t>(c)] > 0) continue;
            std::size_t worst = points.size();
            double worst_d = -1.0;
            for (std::size_t i = 0; i < points.size(); ++i) {
                const auto owner = static_cast<std::size_t>(result.assignments[i]);
                if (cluster_size[owner] < 2) continue;
                const double d = squared_distance(points[i], centroids[owner]);
                if (d > worst_d) { worst_d = d; worst = i; }
            }
            if (worst == points.size()) continue; // k > distinct points; leave empty
            --cluster_size[static_cast<std::size_t>(result.assignments[worst])];
            result.assignments[worst] = c;
            ++cluster_size[static_cast<std::size_t>(c)];
            changed = true;
        }

        std::vector<EmbeddingVector> next(static_cast<std::size_t>(k), EmbeddingVector(dim, 0.0));
        std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
        for (std::size_t i = 0; i < points.size(); ++i) {
            const auto c = static_cast<std::size_t>(result.assignments[i]);
            ++counts[c];
            for (std::size_t d = 0; d < dim; ++d) next[c][d] += points[i][d];
        }
        for (std::size_t c = 0; c < static_cast<std::size_t>(k); ++c) {
            if (counts[c] == 0) { next[c] = centroids[c]; continue; }
            for (std::size_t d = 0; d < dim; ++d) next[c][d] /= static_cast<double>(counts[c]);
        }
        centroids = std::move(next);
        if (sse_trace != nullptr) {
            double sse = 0.0;
            for (std::size_t i = 0; i < points.size(); ++i) {
                sse += squared_distance(points[i],
                                        centroids[static_cast<std::size_t>(result.assignments[i])]);
            }
            sse_trace->push_back(sse);
        }
        if (!changed && iter > 0) break;
    }

    result.centroids = std::move(centroids);
    result.sse = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
        result.sse += squared_distance(points[i],
                                       result.centroids[static_cast<std::size_t>(result.assignments[i])]);
    }
    return result;
}

} // namespace detail_select

/// Lloyd's iteration with k-means++ seeding. Runs a fixed set of restarts
/// with sub-seeds split from `seed` and keeps the lowest-SSE result, which on
/// small instances reliably lands on the global optimum. Deterministic for a
/// given (vectors, k, seed).
inline KMeansResult kmeans(const std::vector<EmbeddingVector>& vectors, int k, std::uint64_t seed) {
    if (vectors.empty()) throw Error("kmeans: empty input");
    if (k < 1 || static_cast<std::size_t>(k) > vectors.size()) {
        throw Error("kmeans: k out of range (k=" + std::to_string(k) + ", points=" +
                    std::to_string(vectors.size()) + ")");
    }
    const std::size_t dim = vectors[0].size();
    for (const auto& v : vectors) {
        if (v.size() != dim) throw Error("kmeans: vectors have mixed dimensions");
    }

    constexpr int restarts = 10;
    constexpr int max_iterations = 100;
    std::optional<KMeansResult> best;
    for (int r = 0; r < restarts; ++r) {
        detail::SplitMix64 rng(detail::derive_seed(seed, static_cast<std::uint64_t>(r)));
        auto centroids = detail_select::kmeans_pp_centroids(vectors, k, rng);
        auto result = detail_select::lloyd(vectors, std::move(centroids), max_iterations);
        if (!best || result.sse < best->sse) best = std::move(result);
    }
    return *best;
}

/// Index (into `members`) of the member closest to `centroid`; ties break
/// toward the lowest attached id.
inline std::size_t nearest_to_centroid(
    const std::vector<std::pair<std::size_t, const EmbeddingVector*>>& members,
    const EmbeddingVector& centroid) {
    if (members.empty()) throw Error("nearest_to_centroid: no members");
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < members.size(); ++i) {
        const double d = detail_select::squared_distance(*members[i].second, centroid);
        if (d < best_d || (d == best_d && members[i].first < members[best].first)) {
            best_d = d;
            best = i;
        }
    }
    return best;
}

/// Full-pool clustering computed once per run for the Diverse strategy.
struct ClusterModel {
    std::unordered_map<std::size_t, int> assignment_by_pair_index;
    std::vector<EmbeddingVector> centroids;
};

inline ClusterModel build_cluster_model(const DemonstrationPool& pool, const EmbeddingSet& embeddings,
                                        int k, std::uint64_t seed) {
    std::vector<EmbeddingVector> points;
    points.reserve(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) {
        points.push_back(embeddings.at(pool.entry(i).question_id));
    }
    const auto km = kmeans(points, k, seed);
    ClusterModel model;
    model.centroids = km.centroids;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        model.assignment_by_pair_index[pool.pair_indices[i]] = km.assignments[i];
    }
    return model;
}

struct SelectionResult {
    std::vector<Demonstration> demonstrations;
    std::vector<PairKey> demo_keys;
    std::vector<int> cluster_ids; // Diverse only; parallel to demonstrations
    std::vector<std::string> warnings;
};

namespace detail_select {

inline Demonstration render_entry(const Corpus& corpus, const LabeledPair& pair,
                                  KnowledgeRendering rendering) {
    return make_demonstration(render_knowledge(corpus.concept(pair.concept_id), rendering),
                              corpus.question(pair.question_id).text, pair.label,
                              pair.explanation);
}

/// Uniform sample of `n` pool positions from `candidates`; falls back to
/// random picks over the rest of the pool when candidates run short.
inline std::vector<std::size_t> sample_with_fallback(const DemonstrationPool& pool,
                                                     std::vector<std::size_t> candidates,
                                                     std::size_t n, detail::SplitMix64& rng,
                                                     const std::string& label,
                                                     std::vector<std::string>& warnings) {
    std::vector<std::size_t> picked;
    const auto order = detail::sample_without_replacement(rng, candidates.size(),
                                                          std::min(n, candidates.size()));
    for (const auto o : order) picked.push_back(candidates[o]);
    if (picked.size() < n) {
        std::vector<std::size_t> rest;
        for (std::size_t i = 0; i < pool.size(); ++i) {
            if (std::find(picked.begin(), picked.end(), i) == picked.end()) rest.push_back(i);
        }
        const std::size_t missing = n - picked.size();
        const auto extra = detail::sample_without_replacement(rng, rest.size(),
                                                              std::min(missing, rest.size()));
        for (const auto o : extra) picked.push_back(rest[o]);
        warnings.push_back("selection fallback: " + label + " had only " +
                           std::to_string(order.size()) + " of " + std::to_string(n) +
                           " candidates; topped up from random");
    }
    return picked;
}

} // namespace detail_select

/// Chooses demonstrations for `target` from `pool` under `strategy`. The
/// pool must already exclude the target (pool_for does this). For Diverse,
/// pass the question embeddings and optionally a precomputed full-pool
/// ClusterModel; without one the pool itself is clustered.
inline SelectionResult select_demonstrations(const SelectionStrategy& strategy,
                                             const DemonstrationPool& pool,
                                             const LabeledPair& target,
                                             KnowledgeRendering rendering, std::uint64_t seed,
                                             const EmbeddingSet* embeddings = nullptr,
                                             const ClusterModel* cluster_model = nullptr) {
    using Family = SelectionStrategy::Family;
    const auto n = static_cast<std::size_t>(strategy.n);
    if (pool.size() < n) {
        throw Error("demonstration pool has " + std::to_string(pool.size()) +
                    " entries, need " + std::to_string(n));
    }
    const Corpus& corpus = *pool.corpus;
    SelectionResult result;
    detail::SplitMix64 rng(seed);

    std::vector<std::size_t> picked;
    if (strategy.family == Family::Random) {
        for (const auto i : detail::sample_without_replacement(rng, pool.size(), n)) {
            picked.push_back(i);
        }
    } else if (strategy.family == Family::SameKnowledge || strategy.family == Family::MatchOnly ||
               strategy.family == Family::MismatchOnly) {
        std::vector<std::size_t> candidates;
        for (std::size_t i = 0; i < pool.size(); ++i) {
            const auto& entry = pool.entry(i);
            const bool keep = strategy.family == Family::SameKnowledge
                                  ? entry.concept_id == target.concept_id
                                  : entry.label == (strategy.family == Family::MatchOnly ? 1 : 0);
            if (keep) candidates.push_back(i);
        }
        picked = detail_select::sample_with_fallback(pool, std::move(candidates), n, rng,
                                                     strategy.name(), result.warnings);
    } else { // Diverse
        if (embeddings == nullptr) throw Error("diverse selection requires embeddings");
        std::optional<ClusterModel> local;
        if (cluster_model == nullptr) {
            local = build_cluster_model(pool, *embeddings, strategy.n, seed);
            cluster_model = &*local;
        }
        std::vector<std::size_t> used;
        for (int c = 0; c < strategy.n; ++c) {
            std::vector<std::pair<std::size_t, const EmbeddingVector*>> members;
            for (std::size_t i = 0; i < pool.size(); ++i) {
                if (std::find(used.begin(), used.end(), i) != used.end()) continue;
                const auto it = cluster_model->assignment_by_pair_index.find(pool.pair_indices[i]);
                if (it != cluster_model->assignment_by_pair_index.end() && it->second == c) {
                    members.emplace_back(i, &embeddings->at(pool.entry(i).question_id));
                }
            }
            if (members.empty()) {
                result.warnings.push_back("selection fallback: cluster " + std::to_string(c) +
                                          " has no eligible members; picking at random");
                std::vector<std::size_t> rest;
                for (std::size_t i = 0; i < pool.size(); ++i) {
                    if (std::find(used.begin(), used.end(), i) == used.end()) rest.push_back(i);
                }
                const auto extra = detail::sample_without_replacement(rng, rest.size(), 1);
                used.push_back(rest[extra[0]]);
            } else {
                const auto nearest =
                    nearest_to_centroid(members, cluster_model->centroids[static_cast<std::size_t>(c)]);
                used.push_back(members[nearest].first);
            }
            result.cluster_ids.push_back(c);
        }
        picked = std::move(used);
    }

    for (const auto i : picked) {
        const auto& entry = pool.entry(i);
        result.demonstrations.push_back(detail_select::render_entry(corpus, entry, rendering));
        result.demo_keys.push_back(entry.key());
    }
    return result;
}

} // namespace knowtag
