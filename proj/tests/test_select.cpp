// SPDX-License-Identifier: Apache-2.0
#include "knowtag/select.hpp"

#include "support/oracles.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <set>

using namespace knowtag;
using knowtag::testing::brute_force_kmeans;
using knowtag::testing::canonical_partition;

namespace {

/// Corpus of one concept and n single-question pairs, plus 2-D embeddings.
struct EmbeddedFixture {
    Corpus corpus;
    EmbeddingSet embeddings;

    explicit EmbeddedFixture(const std::vector<EmbeddingVector>& points,
                             const std::vector<int>& labels = {}) {
        corpus.concepts = {{"c1", "Concept", "Definition here.", ""},
                           {"c2", "Other", "Other definition.", ""}};
        for (std::size_t i = 0; i < points.size(); ++i) {
            const std::string qid = "q" + std::to_string(i);
            corpus.questions.push_back({qid, "Stem " + std::to_string(i) + " = ____"});
            LabeledPair pair;
            pair.concept_id = i % 2 == 0 ? "c1" : "c2";
            pair.question_id = qid;
            pair.label = labels.empty() ? static_cast<int>(i % 2) : labels[i];
            corpus.pairs.push_back(pair);
            embeddings.insert(qid, points[i]);
        }
        corpus.validate();
    }
};

std::vector<EmbeddingVector> random_points(detail::SplitMix64& rng, std::size_t n,
                                           std::size_t dim) {
    std::vector<EmbeddingVector> points(n, EmbeddingVector(dim));
    for (auto& p : points) {
        for (auto& x : p) x = rng.next_double() * 10.0 - 5.0;
    }
    return points;
}

} // namespace

TEST_CASE("kmeans degenerate shapes") {
    const std::vector<EmbeddingVector> points = {{0.0, 0.0}, {2.0, 0.0}, {0.0, 2.0}};

    SECTION("k equal to point count puts each point in its own cluster") {
        const auto result = kmeans(points, 3, 5);
        std::set<int> clusters(result.assignments.begin(), result.assignments.end());
        CHECK(clusters.size() == 3);
        for (std::size_t i = 0; i < points.size(); ++i) {
            CHECK(result.centroids[static_cast<std::size_t>(result.assignments[i])] == points[i]);
        }
        CHECK(result.sse == 0.0);
    }
    SECTION("k = 1 yields the component-wise mean") {
        const auto result = kmeans(points, 1, 5);
        CHECK(result.centroids.size() == 1);
        CHECK(result.centroids[0][0] == Catch::Approx(2.0 / 3.0));
        CHECK(result.centroids[0][1] == Catch::Approx(2.0 / 3.0));
    }
    SECTION("k out of range") {
        CHECK_THROWS_AS(kmeans(points, 0, 1), Error);
        CHECK_THROWS_AS(kmeans(points, 4, 1), Error);
    }
    SECTION("dimension mismatch") {
        CHECK_THROWS_AS(kmeans({{1.0, 2.0}, {1.0}}, 1, 1), Error);
    }
}

TEST_CASE("kmeans separates the two rectangle pairs") {
    const std::vector<EmbeddingVector> points = {{0.0, 0.0}, {0.0, 1.0}, {10.0, 0.0}, {10.0, 1.0}};
    const auto result = kmeans(points, 2, 123);

    CHECK(result.assignments[0] == result.assignments[1]);
    CHECK(result.assignments[2] == result.assignments[3]);
    CHECK(result.assignments[0] != result.assignments[2]);

    const auto& left = result.centroids[static_cast<std::size_t>(result.assignments[0])];
    const auto& right = result.centroids[static_cast<std::size_t>(result.assignments[2])];
    CHECK(left == EmbeddingVector{0.0, 0.5});
    CHECK(right == EmbeddingVector{10.0, 0.5});

    const auto oracle = brute_force_kmeans(points, 2);
    CHECK(canonical_partition(result.assignments) == oracle.assignments);
}

TEST_CASE("kmeans matches the exhaustive-partition oracle on small instances") {
    detail::SplitMix64 rng(314159);
    int instances = 0;
    for (std::size_t n = 2; n <= 8; ++n) {
        for (int k = 1; k <= 3 && static_cast<std::size_t>(k) <= n; ++k) {
            for (int rep = 0; rep < 8; ++rep) {
                const auto dim = 2 + rng.below(2);
                const auto points = random_points(rng, n, dim);
                const auto result = kmeans(points, k, rng.next());
                const auto oracle = brute_force_kmeans(points, k);
                INFO("n=" << n << " k=" << k << " rep=" << rep);
                CHECK(canonical_partition(result.assignments) == oracle.assignments);
                CHECK(result.sse == Catch::Approx(oracle.sse).margin(1e-9));
                ++instances;
            }
        }
    }
    CHECK(instances > 100);
}

TEST_CASE("kmeans objective is non-increasing across iterations") {
    detail::SplitMix64 rng(555);
    for (int rep = 0; rep < 20; ++rep) {
        const auto points = random_points(rng, 12 + rng.below(20), 3);
        const int k = 2 + static_cast<int>(rng.below(3));
        detail::SplitMix64 seed_rng(rng.next());
        auto centroids = detail_select::kmeans_pp_centroids(points, k, seed_rng);
        std::vector<double> trace;
        detail_select::lloyd(points, std::move(centroids), 100, &trace);
        REQUIRE(!trace.empty());
        for (std::size_t i = 1; i < trace.size(); ++i) {
            CHECK(trace[i] <= trace[i - 1] + 1e-9);
        }
    }
}

TEST_CASE("kmeans handles duplicate points without losing clusters") {
    const std::vector<EmbeddingVector> points = {{1.0, 1.0}, {1.0, 1.0}, {1.0, 1.0}, {5.0, 5.0}};
    const auto result = kmeans(points, 2, 9);
    std::set<int> clusters(result.assignments.begin(), result.assignments.end());
    CHECK(clusters.size() == 2);
    CHECK(result.assignments[3] != result.assignments[0]);
}

TEST_CASE("nearest_to_centroid") {
    const EmbeddingVector centroid{0.0, 0.0};
    const EmbeddingVector near{0.5, 0.0};
    const EmbeddingVector far{2.0, 0.0};

    SECTION("single member") {
        const std::vector<std::pair<std::size_t, const EmbeddingVector*>> members{{7, &far}};
        CHECK(nearest_to_centroid(members, centroid) == 0);
    }
    SECTION("closest wins") {
        const std::vector<std::pair<std::size_t, const EmbeddingVector*>> members{{0, &far},
                                                                                  {1, &near}};
        CHECK(members[nearest_to_centroid(members, centroid)].first == 1);
    }
    SECTION("ties break to the lowest attached index") {
        const EmbeddingVector mirror{-0.5, 0.0};
        const std::vector<std::pair<std::size_t, const EmbeddingVector*>> members{{9, &near},
                                                                                  {3, &mirror}};
        CHECK(members[nearest_to_centroid(members, centroid)].first == 3);
    }
    SECTION("empty members is an error") {
        CHECK_THROWS_AS(nearest_to_centroid({}, centroid), Error);
    }
}

namespace {

/// Two blobs on the unit circle (so L2 normalization leaves the geometry
/// alone): one around angle pi/2, one around angle 0, middle member of each
/// blob sitting exactly on the blob's mean direction.
std::vector<EmbeddingVector> two_blob_points() {
    std::vector<EmbeddingVector> points;
    for (const double angle : {1.47, 1.57, 1.67, -0.1, 0.0, 0.1}) {
        points.push_back({std::cos(angle), std::sin(angle)});
    }
    return points;
}

} // namespace

TEST_CASE("diverse selection takes one demonstration per blob") {
    const auto points = two_blob_points();
    EmbeddedFixture fx(points);

    // An extra target pair whose question sits away from both blobs.
    fx.corpus.questions.push_back({"qt", "Target stem = ____"});
    fx.corpus.pairs.push_back({"c1", "qt", 1, ""});
    fx.corpus.validate();
    fx.embeddings.insert("qt", {0.0, -1.0});

    const auto& target = fx.corpus.pairs.back();
    const auto pool = pool_for(fx.corpus, target.key());
    REQUIRE(pool.size() == 6);

    const auto oracle = brute_force_kmeans(points, 2);
    REQUIRE(oracle.assignments == std::vector<int>{0, 0, 0, 1, 1, 1});

    const auto selection = select_demonstrations({SelectionStrategy::Family::Diverse, 2}, pool,
                                                 target, KnowledgeRendering::NameOnly, 99,
                                                 &fx.embeddings);
    REQUIRE(selection.demonstrations.size() == 2);
    REQUIRE(selection.demo_keys.size() == 2);
    CHECK(selection.cluster_ids == std::vector<int>{0, 1});

    // One from each blob, and within a blob the member nearest the blob
    // mean: the middle angles, questions q1 and q4.
    std::set<std::string> chosen;
    for (const auto& key : selection.demo_keys) chosen.insert(key.question_id);
    CHECK(chosen == std::set<std::string>{"q1", "q4"});
}

TEST_CASE("diverse selection with a precomputed model skips excluded entries") {
    const auto points = two_blob_points();
    EmbeddedFixture fx(points);

    const auto full_pool = pool_for(fx.corpus, std::nullopt);
    const auto model = build_cluster_model(full_pool, fx.embeddings, 2, 4);

    // Target q1 is the nearest member of its blob; with it excluded the
    // selection must fall to the next-nearest member of that cluster.
    const auto& target = fx.corpus.pairs[1]; // (c2, q1)
    const auto pool = pool_for(fx.corpus, target.key());
    const auto selection = select_demonstrations({SelectionStrategy::Family::Diverse, 2}, pool,
                                                 target, KnowledgeRendering::NameOnly, 99,
                                                 &fx.embeddings, &model);
    REQUIRE(selection.demo_keys.size() == 2);
    for (const auto& key : selection.demo_keys) {
        CHECK(key.question_id != "q1");
    }
    std::set<int> clusters(selection.cluster_ids.begin(), selection.cluster_ids.end());
    CHECK(clusters.size() == 2);
}

TEST_CASE("label-filtered strategies are pure in their labels") {
    detail::SplitMix64 rng(808);
    for (int rep = 0; rep < 20; ++rep) {
        const auto n = 6 + rng.below(10);
        std::vector<int> labels;
        for (std::uint64_t i = 0; i < n; ++i) labels.push_back(static_cast<int>(rng.below(2)));
        labels[0] = 1;
        labels[1] = 1;
        labels[2] = 0;
        labels[3] = 0; // both families keep at least two candidates
        EmbeddedFixture fx(random_points(rng, n, 2), labels);

        const auto& target = fx.corpus.pairs[0];
        const auto pool = pool_for(fx.corpus, target.key());

        const auto matches = select_demonstrations({SelectionStrategy::Family::MatchOnly, 2},
                                                   pool, target, KnowledgeRendering::NameOnly,
                                                   rng.next());
        for (const auto& d : matches.demonstrations) CHECK(d.judgment_text.rfind("Yes", 0) == 0);
        CHECK(matches.warnings.empty());

        const auto mismatches = select_demonstrations(
            {SelectionStrategy::Family::MismatchOnly, 2}, pool, target,
            KnowledgeRendering::NameOnly, rng.next());
        for (const auto& d : mismatches.demonstrations) CHECK(d.judgment_text.rfind("No", 0) == 0);
    }
}

TEST_CASE("match-only selection on a 3/5 pool returns two matches") {
    std::vector<int> labels = {1, 0, 1, 0, 1, 0, 0, 0, 0};
    detail::SplitMix64 rng(12);
    EmbeddedFixture fx(random_points(rng, 9, 2), labels);
    const auto& target = fx.corpus.pairs[8];
    const auto pool = pool_for(fx.corpus, target.key());
    const auto selection = select_demonstrations({SelectionStrategy::Family::MatchOnly, 2}, pool,
                                                 target, KnowledgeRendering::NameOnly, 3);
    REQUIRE(selection.demonstrations.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        const auto idx = fx.corpus.find_pair(selection.demo_keys[i]);
        REQUIRE(idx.has_value());
        CHECK(fx.corpus.pairs[*idx].label == 1);
    }
}

TEST_CASE("same-knowledge selection shares the target's concept") {
    detail::SplitMix64 rng(21);
    EmbeddedFixture fx(random_points(rng, 10, 2));
    const auto& target = fx.corpus.pairs[0]; // concept c1
    const auto pool = pool_for(fx.corpus, target.key());
    const auto selection = select_demonstrations({SelectionStrategy::Family::SameKnowledge, 2},
                                                 pool, target, KnowledgeRendering::NameOnly, 77);
    REQUIRE(selection.demo_keys.size() == 2);
    for (const auto& key : selection.demo_keys) CHECK(key.concept_id == target.concept_id);
}

TEST_CASE("insufficient candidates fall back to random with a warning") {
    std::vector<int> labels(8, 0);
    labels[1] = 1; // a single match in the pool
    detail::SplitMix64 rng(5);
    EmbeddedFixture fx(random_points(rng, 8, 2), labels);
    const auto& target = fx.corpus.pairs[4];
    const auto pool = pool_for(fx.corpus, target.key());

    const auto selection = select_demonstrations({SelectionStrategy::Family::MatchOnly, 3}, pool,
                                                 target, KnowledgeRendering::NameOnly, 13);
    CHECK(selection.demonstrations.size() == 3);
    REQUIRE(selection.warnings.size() == 1);
    CHECK(selection.warnings[0].find("fallback") != std::string::npos);

    long match_count = 0;
    for (const auto& key : selection.demo_keys) {
        match_count += fx.corpus.pairs[*fx.corpus.find_pair(key)].label;
    }
    CHECK(match_count == 1);
}

TEST_CASE("selection is deterministic in the seed and never returns the target") {
    detail::SplitMix64 rng(616);
    for (int rep = 0; rep < 15; ++rep) {
        EmbeddedFixture fx(random_points(rng, 8 + rng.below(8), 3));
        const auto target_index = rng.below(fx.corpus.pairs.size());
        const auto& target = fx.corpus.pairs[target_index];
        const auto pool = pool_for(fx.corpus, target.key());
        const auto seed = rng.next();

        for (const auto family :
             {SelectionStrategy::Family::Random, SelectionStrategy::Family::Diverse}) {
            const SelectionStrategy strategy{family, 2};
            const auto a = select_demonstrations(strategy, pool, target,
                                                 KnowledgeRendering::NameOnly, seed,
                                                 &fx.embeddings);
            const auto b = select_demonstrations(strategy, pool, target,
                                                 KnowledgeRendering::NameOnly, seed,
                                                 &fx.embeddings);
            CHECK(a.demo_keys == b.demo_keys);
            CHECK(a.demonstrations == b.demonstrations);
            for (const auto& key : a.demo_keys) {
                CHECK_FALSE(key == target.key());
            }
        }
    }
}

TEST_CASE("diverse selection requires embeddings") {
    detail::SplitMix64 rng(3);
    EmbeddedFixture fx(random_points(rng, 6, 2));
    const auto& target = fx.corpus.pairs[0];
    const auto pool = pool_for(fx.corpus, target.key());
    CHECK_THROWS_AS(select_demonstrations({SelectionStrategy::Family::Diverse, 2}, pool, target,
                                          KnowledgeRendering::NameOnly, 1),
                    Error);
}

TEST_CASE("strategy grammar parses and round-trips") {
    const auto s = SelectionStrategy::parse("match:2");
    CHECK(s.family == SelectionStrategy::Family::MatchOnly);
    CHECK(s.n == 2);
    CHECK(s.name() == "match:2");
    CHECK(SelectionStrategy::parse("diverse:4").family == SelectionStrategy::Family::Diverse);
    CHECK(SelectionStrategy::parse("same-knowledge:2").family ==
          SelectionStrategy::Family::SameKnowledge);
    CHECK_THROWS_AS(SelectionStrategy::parse("match"), ConfigError);
    CHECK_THROWS_AS(SelectionStrategy::parse("match:0"), ConfigError);
    CHECK_THROWS_AS(SelectionStrategy::parse("bogus:2"), ConfigError);
}

TEST_CASE("embedding set validates dimensions and normalizes") {
    EmbeddingSet set;
    set.insert("q1", {3.0, 4.0});
    CHECK(set.at("q1")[0] == Catch::Approx(0.6));
    CHECK(set.at("q1")[1] == Catch::Approx(0.8));
    CHECK_THROWS_AS(set.insert("q2", {1.0, 2.0, 3.0}), Error);
    CHECK_THROWS_AS(set.insert("q3", {std::numeric_limits<double>::quiet_NaN(), 0.0}), Error);
}
