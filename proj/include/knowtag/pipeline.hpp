// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "knowtag/corpus.hpp"
#include "knowtag/detail/rng.hpp"
#include "knowtag/eval.hpp"
#include "knowtag/llm.hpp"
#include "knowtag/parse.hpp"
#include "knowtag/prompt.hpp"
#include "knowtag/select.hpp"

#include <atomic>
#include <chrono>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace knowtag {

/// Everything that defines one tagging sweep. The cache path and the
/// concurrency limit are execution-environment knobs: they can never change
/// a result (the suite verifies this), so they are not part of the
/// serialized snapshot.
struct RunConfig {
    PromptVariant variant = PromptVariant::V2;
    KnowledgeRendering rendering = KnowledgeRendering::NameOnly;
    std::optional<SelectionStrategy> strategy; // nullopt = zero-shot
    bool reflection = false;
    BackendConfig backend;
    std::string model = "mock-model";
    double temperature = 0.0;
    int max_tokens = 512;
    std::uint64_t seed = 0;
    int concurrency = 4;
    std::string embeddings_path; // optional precomputed embedding file

    void validate() const {
        backend.validate();
        if (concurrency < 1) throw ConfigError("concurrency must be >= 1");
        if (max_tokens < 1) throw ConfigError("max_tokens must be >= 1");
        if (temperature < 0.0) throw ConfigError("temperature must be >= 0");
        if (strategy && strategy->n < 1) throw ConfigError("strategy count must be >= 1");
    }
};

enum class SampleStatus { Ok, Errored };

/// Per-pair outcome. confirmation is present exactly when reflection ran for
/// the pair (reflection enabled and first verdict Positive); the final
/// verdict differs from the first only when the confirmation overturned it.
struct SampleResult {
    std::size_t pair_index = 0;
    PairKey pair;
    int gold = 0;
    std::vector<PairKey> demo_keys;
    Judgment first;
    std::optional<ConfirmationOutcome> confirmation;
    std::string confirmation_raw;
    Verdict final_verdict = Verdict::Unparseable;
    std::string first_fingerprint;
    std::string reflection_fingerprint;
    SampleStatus status = SampleStatus::Ok;
    std::string error;
    long elapsed_ms = 0;
};

struct RunRecord {
    RunConfig config;
    std::vector<SampleResult> samples; // corpus pair order
    std::vector<std::string> warnings;
    ConfusionCounts counts;
    std::optional<Metrics> aggregate; // absent when nothing was scored
    long unparseable = 0;
    long errored = 0;
    bool complete = true;
};

inline std::string_view verdict_tag(Verdict v) { return verdict_name(v); }

inline Verdict verdict_from_name(std::string_view name) {
    if (name == "positive") return Verdict::Positive;
    if (name == "negative") return Verdict::Negative;
    if (name == "unparseable") return Verdict::Unparseable;
    throw Error("unknown verdict: " + std::string(name));
}

inline ConfirmationOutcome confirmation_from_name(std::string_view name) {
    if (name == "confirmed") return ConfirmationOutcome::Confirmed;
    if (name == "overturned") return ConfirmationOutcome::Overturned;
    if (name == "ambiguous") return ConfirmationOutcome::Ambiguous;
    throw Error("unknown confirmation outcome: " + std::string(name));
}

/// Loads a line-delimited embedding file of {question_id, vector} records.
inline EmbeddingSet load_embeddings(const std::filesystem::path& path) {
    EmbeddingSet set;
    detail::for_each_record(path, [&](std::size_t line_no, const detail::json& record) {
        const std::string context = path.string() + ":" + std::to_string(line_no);
        const std::string id = detail::require_string(record, "question_id", context);
        if (!record.contains("vector") || !record["vector"].is_array()) {
            throw Error(context + ": missing vector");
        }
        set.insert(id, record["vector"].get<EmbeddingVector>());
    });
    return set;
}

namespace detail_pipeline {

inline detail::json config_to_json(const RunConfig& config) {
    detail::json backend{{"kind", config.backend.kind == BackendKind::Http ? "http" : "mock"},
                         {"endpoint", config.backend.endpoint},
                         {"credential_env", config.backend.credential_env},
                         {"script_path", config.backend.script_path},
                         {"retry", {{"max_attempts", config.backend.retry.max_attempts},
                                    {"backoff_base_s", config.backend.retry.backoff_base_s}}},
                         {"embed_dim", config.backend.embed_dim},
                         {"embed_seed", config.backend.embed_seed}};
    detail::json j{{"kind", "run_config"},
                   {"variant", std::string(variant_name(config.variant))},
                   {"rendering", std::string(rendering_name(config.rendering))},
                   {"strategy", config.strategy ? detail::json(config.strategy->name())
                                                : detail::json(nullptr)},
                   {"reflection", config.reflection},
                   {"backend", backend},
                   {"model", config.model},
                   {"temperature", config.temperature},
                   {"max_tokens", config.max_tokens},
                   {"seed", config.seed},
                   {"embeddings_path", config.embeddings_path}};
    return j;
}

inline RunConfig config_from_json(const detail::json& j) {
    RunConfig config;
    config.variant = variant_from_name(j.at("variant").get<std::string>());
    config.rendering = rendering_from_name(j.at("rendering").get<std::string>());
    if (!j.at("strategy").is_null()) {
        config.strategy = SelectionStrategy::parse(j.at("strategy").get<std::string>());
    }
    config.reflection = j.at("reflection").get<bool>();
    const auto& b = j.at("backend");
    config.backend.kind = b.at("kind").get<std::string>() == "http" ? BackendKind::Http
                                                                    : BackendKind::Mock;
    config.backend.endpoint = b.at("endpoint").get<std::string>();
    config.backend.credential_env = b.at("credential_env").get<std::string>();
    config.backend.script_path = b.at("script_path").get<std::string>();
    config.backend.retry.max_attempts = b.at("retry").at("max_attempts").get<int>();
    config.backend.retry.backoff_base_s = b.at("retry").at("backoff_base_s").get<double>();
    config.backend.embed_dim = b.at("embed_dim").get<int>();
    config.backend.embed_seed = b.at("embed_seed").get<std::uint64_t>();
    config.model = j.at("model").get<std::string>();
    config.temperature = j.at("temperature").get<double>();
    config.max_tokens = j.at("max_tokens").get<int>();
    config.seed = j.at("seed").get<std::uint64_t>();
    config.embeddings_path = j.at("embeddings_path").get<std::string>();
    return config;
}

/// Snapshot equality: every field that is part of the serialized config.
inline bool same_config(const RunConfig& a, const RunConfig& b) {
    return config_to_json(a) == config_to_json(b);
}

inline detail::json sample_to_json(const SampleResult& s, bool include_timing) {
    detail::json demos = detail::json::array();
    for (const auto& key : s.demo_keys) {
        demos.push_back({{"concept_id", key.concept_id}, {"question_id", key.question_id}});
    }
    detail::json j{{"kind", "sample"},
                   {"index", s.pair_index},
                   {"concept_id", s.pair.concept_id},
                   {"question_id", s.pair.question_id},
                   {"gold", s.gold},
                   {"demos", demos},
                   {"first_verdict", std::string(verdict_name(s.first.verdict))},
                   {"first_reason", s.first.reason},
                   {"first_raw", s.first.raw},
                   {"matched_rule", s.first.matched_rule ? detail::json(*s.first.matched_rule)
                                                         : detail::json(nullptr)},
                   {"confirmation", s.confirmation
                                        ? detail::json(std::string(confirmation_name(*s.confirmation)))
                                        : detail::json(nullptr)},
                   {"confirmation_raw", s.confirmation_raw},
                   {"final", std::string(verdict_name(s.final_verdict))},
                   {"first_fingerprint", s.first_fingerprint},
                   {"reflection_fingerprint", s.reflection_fingerprint},
                   {"status", s.status == SampleStatus::Ok ? "ok" : "errored"},
                   {"error", s.error}};
    if (include_timing) j["elapsed_ms"] = s.elapsed_ms;
    return j;
}

inline SampleResult sample_from_json(const detail::json& j) {
    SampleResult s;
    s.pair_index = j.at("index").get<std::size_t>();
    s.pair = {j.at("concept_id").get<std::string>(), j.at("question_id").get<std::string>()};
    s.gold = j.at("gold").get<int>();
    for (const auto& d : j.at("demos")) {
        s.demo_keys.push_back({d.at("concept_id").get<std::string>(),
                               d.at("question_id").get<std::string>()});
    }
    s.first.verdict = verdict_from_name(j.at("first_verdict").get<std::string>());
    s.first.reason = j.at("first_reason").get<std::string>();
    s.first.raw = j.at("first_raw").get<std::string>();
    if (!j.at("matched_rule").is_null()) s.first.matched_rule = j.at("matched_rule").get<std::string>();
    if (!j.at("confirmation").is_null()) {
        s.confirmation = confirmation_from_name(j.at("confirmation").get<std::string>());
    }
    s.confirmation_raw = j.at("confirmation_raw").get<std::string>();
    s.final_verdict = verdict_from_name(j.at("final").get<std::string>());
    s.first_fingerprint = j.at("first_fingerprint").get<std::string>();
    s.reflection_fingerprint = j.at("reflection_fingerprint").get<std::string>();
    s.status = j.at("status").get<std::string>() == "ok" ? SampleStatus::Ok : SampleStatus::Errored;
    s.error = j.at("error").get<std::string>();
    s.elapsed_ms = j.value("elapsed_ms", 0L);
    return s;
}

} // namespace detail_pipeline

/// Header line (config snapshot), one sample per line, then a summary line.
/// With include_timing=false the output is byte-stable across reruns.
inline std::string serialize_run_record(const RunRecord& record, bool include_timing = true) {
    std::ostringstream out;
    out << detail_pipeline::config_to_json(record.config).dump() << '\n';
    for (const auto& s : record.samples) {
        out << detail_pipeline::sample_to_json(s, include_timing).dump() << '\n';
    }
    detail::json metrics_json = nullptr;
    if (record.aggregate) {
        metrics_json = {{"accuracy", record.aggregate->accuracy},
                        {"precision", record.aggregate->precision},
                        {"recall", record.aggregate->recall},
                        {"f1", record.aggregate->f1},
                        {"precision_degenerate", record.aggregate->precision_degenerate},
                        {"recall_degenerate", record.aggregate->recall_degenerate},
                        {"f1_degenerate", record.aggregate->f1_degenerate}};
    }
    detail::json summary{{"kind", "summary"},
                         {"complete", record.complete},
                         {"warnings", record.warnings},
                         {"counts", {{"tp", record.counts.tp},
                                     {"fp", record.counts.fp},
                                     {"tn", record.counts.tn},
                                     {"fn", record.counts.fn}}},
                         {"metrics", metrics_json},
                         {"unparseable", record.unparseable},
                         {"errored", record.errored}};
    out << summary.dump() << '\n';
    return out.str();
}

inline void save_run_record(const RunRecord& record, const std::filesystem::path& path,
                            bool include_timing = true) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << serialize_run_record(record, include_timing);
}

inline RunRecord load_run_record(const std::filesystem::path& path) {
    RunRecord record;
    bool have_config = false;
    bool have_summary = false;
    detail::for_each_record(path, [&](std::size_t line_no, const detail::json& j) {
        const std::string context = path.string() + ":" + std::to_string(line_no);
        const std::string kind = detail::require_string(j, "kind", context);
        if (kind == "run_config") {
            record.config = detail_pipeline::config_from_json(j);
            have_config = true;
        } else if (kind == "sample") {
            record.samples.push_back(detail_pipeline::sample_from_json(j));
        } else if (kind == "summary") {
            record.complete = j.at("complete").get<bool>();
            record.warnings = j.at("warnings").get<std::vector<std::string>>();
            record.counts.tp = j.at("counts").at("tp").get<long>();
            record.counts.fp = j.at("counts").at("fp").get<long>();
            record.counts.tn = j.at("counts").at("tn").get<long>();
            record.counts.fn = j.at("counts").at("fn").get<long>();
            if (!j.at("metrics").is_null()) {
                Metrics m;
                const auto& mj = j.at("metrics");
                m.accuracy = mj.at("accuracy").get<double>();
                m.precision = mj.at("precision").get<double>();
                m.recall = mj.at("recall").get<double>();
                m.f1 = mj.at("f1").get<double>();
                m.precision_degenerate = mj.at("precision_degenerate").get<bool>();
                m.recall_degenerate = mj.at("recall_degenerate").get<bool>();
                m.f1_degenerate = mj.at("f1_degenerate").get<bool>();
                record.aggregate = m;
            }
            record.unparseable = j.at("unparseable").get<long>();
            record.errored = j.at("errored").get<long>();
            have_summary = true;
        } else {
            throw Error(context + ": unknown record kind '" + kind + "'");
        }
    });
    if (!have_config) throw Error(path.string() + ": missing run_config header");
    if (!have_summary) record.complete = false; // truncated flush
    return record;
}

namespace detail_pipeline {

struct PairOutcome {
    SampleResult sample;
    std::vector<std::string> warnings;
    bool first_pass_failed = false;
};

struct RunContext {
    const RunConfig& config;
    const Corpus& corpus;
    LlmClient& client;
    std::optional<EmbeddingSet> embeddings;
    std::optional<ClusterModel> cluster_model;
};

inline CompletionRequest make_request(const RunConfig& config, const PromptBundle& bundle) {
    CompletionRequest request;
    request.model = config.model;
    request.messages = bundle.messages;
    request.temperature = config.temperature;
    request.max_tokens = config.max_tokens;
    return request;
}

inline PromptBundle build_first_bundle(const RunContext& ctx, std::size_t pair_index,
                                       SampleResult& sample, std::vector<std::string>& warnings) {
    const auto& pair = ctx.corpus.pairs[pair_index];
    const std::string knowledge =
        render_knowledge(ctx.corpus.concept(pair.concept_id), ctx.config.rendering);
    const std::string& question = ctx.corpus.question(pair.question_id).text;
    if (!ctx.config.strategy) {
        return build_zero_shot(ctx.config.variant, knowledge, question);
    }
    const auto pool = pool_for(ctx.corpus, pair.key());
    const auto seed = detail::derive_seed(ctx.config.seed, pair_index);
    auto selection = select_demonstrations(*ctx.config.strategy, pool, pair, ctx.config.rendering,
                                           seed, ctx.embeddings ? &*ctx.embeddings : nullptr,
                                           ctx.cluster_model ? &*ctx.cluster_model : nullptr);
    sample.demo_keys = std::move(selection.demo_keys);
    for (auto& w : selection.warnings) {
        warnings.push_back("pair " + pair.concept_id + "/" + pair.question_id + ": " + w);
    }
    return build_few_shot(ctx.config.variant, selection.demonstrations, knowledge, question);
}

} // namespace detail_pipeline

/// Runs the confirmation turn for a first-pass positive sample: exactly one
/// reflection completion; Overturned flips the final verdict to Negative,
/// Confirmed and Ambiguous keep it Positive.
inline SampleResult reflect(const RunConfig& config, LlmClient& client,
                            const PromptBundle& first_bundle, SampleResult sample) {
    if (sample.first.verdict != Verdict::Positive) {
        throw Error("reflect: first verdict is not positive");
    }
    const auto bundle = build_reflection(first_bundle, sample.first.raw);
    sample.reflection_fingerprint = bundle.fingerprint;
    const auto response = client.complete(detail_pipeline::make_request(config, bundle));
    sample.confirmation_raw = response.content;
    sample.confirmation = parse_confirmation(response.content);
    sample.final_verdict = *sample.confirmation == ConfirmationOutcome::Overturned
                               ? Verdict::Negative
                               : Verdict::Positive;
    return sample;
}

/// Tags every corpus pair: build pool, select demonstrations (few-shot),
/// render prompt, complete, parse, then the positive-gated reflection turn.
/// Results are emitted in corpus order for any concurrency limit. A
/// first-pass backend exhaustion stops the run and flushes a partial record
/// marked incomplete; a reflection failure marks only that sample errored.
inline RunRecord run_tagging(const RunConfig& config, const Corpus& corpus, LlmClient& client) {
    config.validate();

    detail_pipeline::RunContext ctx{config, corpus, client, std::nullopt, std::nullopt};
    if (config.strategy && config.strategy->family == SelectionStrategy::Family::Diverse) {
        if (!config.embeddings_path.empty()) {
            ctx.embeddings = load_embeddings(config.embeddings_path);
        } else {
            EmbeddingSet set;
            std::vector<std::string> texts;
            texts.reserve(corpus.questions.size());
            for (const auto& q : corpus.questions) texts.push_back(q.text);
            if (texts.empty()) throw ConfigError("diverse strategy on a corpus with no questions");
            const auto vectors = client.embed(texts);
            for (std::size_t i = 0; i < corpus.questions.size(); ++i) {
                set.insert(corpus.questions[i].id, vectors[i]);
            }
            ctx.embeddings = std::move(set);
        }
        const auto full_pool = pool_for(corpus, std::nullopt);
        if (full_pool.size() < static_cast<std::size_t>(config.strategy->n)) {
            throw ConfigError("corpus too small for " + config.strategy->name());
        }
        // One clustering per run, seeded by the run seed; per-target selection
        // drops excluded entries and takes the next-nearest member.
        ctx.cluster_model =
            build_cluster_model(full_pool, *ctx.embeddings, config.strategy->n, config.seed);
    }

    const std::size_t n = corpus.pairs.size();
    std::vector<std::optional<detail_pipeline::PairOutcome>> slots(n);
    std::atomic<std::size_t> cursor{0};
    std::atomic<bool> stop{false};
    std::mutex failure_mutex;
    std::exception_ptr failure;

    auto process_pair = [&](std::size_t i) {
        detail_pipeline::PairOutcome outcome;
        auto& sample = outcome.sample;
        const auto& pair = corpus.pairs[i];
        sample.pair_index = i;
        sample.pair = pair.key();
        sample.gold = pair.label;
        const auto started = std::chrono::steady_clock::now();

        PromptBundle first_bundle;
        try {
            first_bundle = detail_pipeline::build_first_bundle(ctx, i, sample, outcome.warnings);
            sample.first_fingerprint = first_bundle.fingerprint;
            const auto response =
                client.complete(detail_pipeline::make_request(config, first_bundle));
            sample.first = parse_judgment(response.content);
            sample.final_verdict = sample.first.verdict;
        } catch (const BackendError& e) {
            sample.status = SampleStatus::Errored;
            sample.error = e.what();
            outcome.first_pass_failed = true;
            return outcome;
        }

        if (config.reflection && sample.first.verdict == Verdict::Positive) {
            try {
                sample = reflect(config, client, first_bundle, sample);
            } catch (const BackendError& e) {
                sample.status = SampleStatus::Errored;
                sample.error = e.what();
                outcome.warnings.push_back("pair " + pair.concept_id + "/" + pair.question_id +
                                           ": reflection failed: " + e.what());
            }
        }
        sample.elapsed_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                                std::chrono::steady_clock::now() - started)
                                .count();
        return outcome;
    };

    auto worker = [&] {
        while (!stop.load()) {
            const std::size_t i = cursor.fetch_add(1);
            if (i >= n) break;
            try {
                auto outcome = process_pair(i);
                if (outcome.first_pass_failed) stop.store(true);
                slots[i] = std::move(outcome);
            } catch (...) {
                std::lock_guard<std::mutex> guard(failure_mutex);
                if (!failure) failure = std::current_exception();
                stop.store(true);
                return;
            }
        }
    };

    const std::size_t worker_count = std::min(static_cast<std::size_t>(config.concurrency),
                                              std::max<std::size_t>(n, 1));
    std::vector<std::thread> threads;
    threads.reserve(worker_count);
    for (std::size_t w = 0; w < worker_count; ++w) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    if (failure) std::rethrow_exception(failure);

    RunRecord record;
    record.config = config;
    record.complete = true;
    std::vector<ScoredSample> scored;
    for (std::size_t i = 0; i < n; ++i) {
        if (!slots[i]) {
            record.complete = false; // pair never processed before the stop
            continue;
        }
        auto& outcome = *slots[i];
        if (outcome.first_pass_failed) record.complete = false;
        for (auto& w : outcome.warnings) record.warnings.push_back(std::move(w));
        if (outcome.sample.status == SampleStatus::Ok) {
            scored.push_back({outcome.sample.gold, outcome.sample.final_verdict});
            if (outcome.sample.final_verdict == Verdict::Unparseable) record.unparseable += 1;
        } else {
            record.errored += 1;
        }
        record.samples.push_back(std::move(outcome.sample));
    }
    record.counts = confusion(scored);
    if (!scored.empty()) record.aggregate = metrics(record.counts);
    return record;
}

/// Convenience overload that builds the client from the config's backend.
inline RunRecord run_tagging(const RunConfig& config, const Corpus& corpus) {
    LlmClient client(config.backend);
    return run_tagging(config, corpus, client);
}

/// Reruns a complete record from the cache alone: any completion missing
/// from the cache raises CacheMissError naming the key. The record's config
/// snapshot is authoritative; pass `requested` to assert an expected config
/// and get a rejection on mismatch.
inline RunRecord replay(const RunRecord& record, const Corpus& corpus,
                        const std::string& cache_path,
                        const std::optional<RunConfig>& requested = std::nullopt) {
    if (!record.complete) throw Error("replay requires a complete record");
    if (requested && !detail_pipeline::same_config(*requested, record.config)) {
        throw ConfigError("replay config does not match the record's snapshot");
    }
    RunConfig config = record.config;
    config.backend.cache_path = cache_path;
    auto client = LlmClient::cache_only(config.backend);
    return run_tagging(config, corpus, client);
}

} // namespace knowtag
