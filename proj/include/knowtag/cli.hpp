// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "knowtag/corpus.hpp"
#include "knowtag/pipeline.hpp"
#include "knowtag/report.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace knowtag::cli {

namespace detail_cli {

inline BackendConfig parse_backend(const std::string& spec) {
    BackendConfig backend;
    const auto colon = spec.find(':');
    if (colon == std::string::npos) throw ConfigError("backend must be kind:arg, got '" + spec + "'");
    const std::string kind = spec.substr(0, colon);
    const std::string rest = spec.substr(colon + 1);
    if (kind == "mock") {
        backend.kind = BackendKind::Mock;
        backend.script_path = rest;
    } else if (kind == "http" || kind == "https") {
        backend.kind = BackendKind::Http;
        backend.endpoint = rest.rfind("//", 0) == 0 ? spec : rest;
        backend.credential_env = "KNOWTAG_API_KEY";
    } else {
        throw ConfigError("unknown backend kind '" + kind + "'");
    }
    return backend;
}

inline void require_file(const std::string& path, const std::string& what) {
    if (!std::filesystem::exists(path)) throw Error(what + " not found: " + path);
}

struct TagFlags {
    std::string corpus_path;
    std::string out_path;
    std::string config_path;
    std::string variant;
    std::string rendering;
    std::string strategy;
    bool reflect = false;
    std::string backend;
    std::string model;
    std::string credential_env;
    std::uint64_t seed = 0;
    int concurrency = 0;
    double temperature = 0.0;
    int max_tokens = 0;
    std::string embeddings;
    std::string cache;
};

/// Precedence: defaults, then config-file values, then explicit flags. The
/// effective config is snapshotted into the run record.
inline RunConfig effective_config(const TagFlags& flags, const CLI::App* tag) {
    RunConfig config;
    if (!flags.config_path.empty()) {
        require_file(flags.config_path, "config file");
        std::ifstream in(flags.config_path);
        detail::json file_config;
        try {
            in >> file_config;
        } catch (const detail::json::parse_error& e) {
            throw ConfigError(flags.config_path + ": " + e.what());
        }
        if (file_config.contains("variant")) {
            config.variant = variant_from_name(file_config["variant"].get<std::string>());
        }
        if (file_config.contains("rendering")) {
            config.rendering = rendering_from_name(file_config["rendering"].get<std::string>());
        }
        if (file_config.contains("strategy") && !file_config["strategy"].is_null()) {
            config.strategy = SelectionStrategy::parse(file_config["strategy"].get<std::string>());
        }
        if (file_config.contains("reflect")) config.reflection = file_config["reflect"].get<bool>();
        if (file_config.contains("backend")) {
            config.backend = parse_backend(file_config["backend"].get<std::string>());
        }
        if (file_config.contains("credential_env")) {
            config.backend.credential_env = file_config["credential_env"].get<std::string>();
        }
        if (file_config.contains("model")) config.model = file_config["model"].get<std::string>();
        if (file_config.contains("seed")) config.seed = file_config["seed"].get<std::uint64_t>();
        if (file_config.contains("concurrency")) config.concurrency = file_config["concurrency"].get<int>();
        if (file_config.contains("temperature")) config.temperature = file_config["temperature"].get<double>();
        if (file_config.contains("max_tokens")) config.max_tokens = file_config["max_tokens"].get<int>();
        if (file_config.contains("embeddings")) config.embeddings_path = file_config["embeddings"].get<std::string>();
        if (file_config.contains("cache")) config.backend.cache_path = file_config["cache"].get<std::string>();
    }
    if (tag->count("--variant") > 0) config.variant = variant_from_name(flags.variant);
    if (tag->count("--rendering") > 0) config.rendering = rendering_from_name(flags.rendering);
    if (tag->count("--strategy") > 0) config.strategy = SelectionStrategy::parse(flags.strategy);
    if (tag->count("--reflect") > 0) config.reflection = flags.reflect;
    if (tag->count("--backend") > 0) {
        const std::string cache = config.backend.cache_path;
        config.backend = parse_backend(flags.backend);
        config.backend.cache_path = cache;
    }
    if (tag->count("--credential-env") > 0) config.backend.credential_env = flags.credential_env;
    if (tag->count("--model") > 0) config.model = flags.model;
    if (tag->count("--seed") > 0) config.seed = flags.seed;
    if (tag->count("--concurrency") > 0) config.concurrency = flags.concurrency;
    if (tag->count("--temperature") > 0) config.temperature = flags.temperature;
    if (tag->count("--max-tokens") > 0) config.max_tokens = flags.max_tokens;
    if (tag->count("--embeddings") > 0) config.embeddings_path = flags.embeddings;
    if (tag->count("--cache") > 0) config.backend.cache_path = flags.cache;
    return config;
}

inline std::string overall_line(const RunRecord& record) {
    std::ostringstream out;
    out << "overall";
    if (record.aggregate) {
        out << " accuracy=" << format_metric(record.aggregate->accuracy)
            << " precision=" << format_metric(record.aggregate->precision)
            << " recall=" << format_metric(record.aggregate->recall)
            << " f1=" << format_metric(record.aggregate->f1);
    } else {
        out << " (no scored samples)";
    }
    out << " scored=" << record.counts.total() << " unparseable=" << record.unparseable
        << " errored=" << record.errored << " warnings=" << record.warnings.size();
    return out.str();
}

} // namespace detail_cli

/// Executes one CLI invocation. Returns 0 on success, 1 on usage errors,
/// 2 on runtime failures. Usage errors never create or truncate files.
inline int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Knowledge concept tagging pipeline"};
    app.require_subcommand(1);

    detail_cli::TagFlags tag_flags;
    auto* tag = app.add_subcommand("tag", "Run a tagging sweep and write a run record");
    tag->add_option("--corpus", tag_flags.corpus_path, "corpus file")->required();
    tag->add_option("--out", tag_flags.out_path, "output run record")->required();
    tag->add_option("--config", tag_flags.config_path, "JSON config file (flags override it)");
    tag->add_option("--variant", tag_flags.variant, "prompt variant: v1|v2");
    tag->add_option("--rendering", tag_flags.rendering, "knowledge rendering: name|interpreted");
    tag->add_option("--strategy", tag_flags.strategy,
                    "demonstration strategy name:count (omit for zero-shot)");
    tag->add_flag("--reflect", tag_flags.reflect, "enable self-reflection revision");
    tag->add_option("--backend", tag_flags.backend, "backend: mock:<script> or http:<url>");
    tag->add_option("--credential-env", tag_flags.credential_env,
                    "env var holding the bearer token (http)");
    tag->add_option("--model", tag_flags.model, "model identifier");
    tag->add_option("--seed", tag_flags.seed, "run seed");
    tag->add_option("--concurrency", tag_flags.concurrency, "worker limit");
    tag->add_option("--temperature", tag_flags.temperature, "sampling temperature");
    tag->add_option("--max-tokens", tag_flags.max_tokens, "completion token cap");
    tag->add_option("--embeddings", tag_flags.embeddings, "precomputed embedding file");
    tag->add_option("--cache", tag_flags.cache, "persistent response cache file");

    std::string eval_record;
    std::string eval_corpus;
    std::string eval_format = "markdown";
    std::string eval_out;
    auto* eval = app.add_subcommand("eval", "Report metrics for a run record");
    eval->add_option("--record", eval_record, "run record file")->required();
    eval->add_option("--corpus", eval_corpus, "corpus file")->required();
    eval->add_option("--format", eval_format, "markdown|csv");
    eval->add_option("--out", eval_out, "write the report here instead of stdout");

    std::string demos_strategy;
    std::string demos_corpus;
    std::string demos_pair;
    std::uint64_t demos_seed = 0;
    std::string demos_rendering = "name";
    std::string demos_embeddings;
    std::string demos_backend;
    auto* demos = app.add_subcommand("demos", "Show the demonstrations a strategy would select");
    demos->add_option("--strategy", demos_strategy, "name:count")->required();
    demos->add_option("--corpus", demos_corpus, "corpus file")->required();
    demos->add_option("--pair", demos_pair, "target pair as concept_id/question_id")->required();
    demos->add_option("--seed", demos_seed, "selection seed");
    demos->add_option("--rendering", demos_rendering, "knowledge rendering: name|interpreted");
    demos->add_option("--embeddings", demos_embeddings, "embedding file (diverse)");
    demos->add_option("--backend", demos_backend, "backend for embeddings (diverse)");

    std::string cmp_a;
    std::string cmp_b;
    std::string cmp_format = "markdown";
    auto* compare = app.add_subcommand("compare", "Paired metrics of two run records");
    compare->add_option("--a", cmp_a, "baseline run record")->required();
    compare->add_option("--b", cmp_b, "comparison run record")->required();
    compare->add_option("--format", cmp_format, "markdown|csv");

    try {
        std::vector<const char*> argv;
        argv.push_back("knowtag");
        for (const auto& a : args) argv.push_back(a.c_str());
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n";
        return 1;
    }

    try {
        if (tag->parsed()) {
            detail_cli::require_file(tag_flags.corpus_path, "corpus file");
            RunConfig config = detail_cli::effective_config(tag_flags, tag);
            if (config.backend.kind == BackendKind::Mock) {
                detail_cli::require_file(config.backend.script_path, "mock script");
            }
            config.validate();
            const Corpus corpus = load_corpus(tag_flags.corpus_path);
            const RunRecord record = run_tagging(config, corpus);
            save_run_record(record, tag_flags.out_path);
            out << detail_cli::overall_line(record) << "\n";
            if (!record.complete) {
                err << "run incomplete: backend failure; partial record written to "
                    << tag_flags.out_path << "\n";
                return 2;
            }
            return 0;
        }
        if (eval->parsed()) {
            detail_cli::require_file(eval_record, "run record");
            detail_cli::require_file(eval_corpus, "corpus file");
            const auto format = report_format_from_name(eval_format);
            const auto record = load_run_record(eval_record);
            const auto corpus = load_corpus(eval_corpus);
            const auto text = render_report(build_report(record, corpus), format);
            if (eval_out.empty()) {
                out << text;
            } else {
                std::ofstream file(eval_out);
                if (!file) throw Error("cannot write " + eval_out);
                file << text;
            }
            return 0;
        }
        if (demos->parsed()) {
            detail_cli::require_file(demos_corpus, "corpus file");
            const auto strategy = SelectionStrategy::parse(demos_strategy);
            const auto rendering = rendering_from_name(demos_rendering);
            const auto corpus = load_corpus(demos_corpus);
            const auto slash = demos_pair.find('/');
            if (slash == std::string::npos) {
                throw ConfigError("--pair must be concept_id/question_id");
            }
            const PairKey key{demos_pair.substr(0, slash), demos_pair.substr(slash + 1)};
            const auto pair_index = corpus.find_pair(key);
            if (!pair_index) {
                throw Error("pair " + demos_pair + " not found in corpus");
            }
            const auto& target = corpus.pairs[*pair_index];
            const auto pool = pool_for(corpus, key);
            std::optional<EmbeddingSet> embeddings;
            if (strategy.family == SelectionStrategy::Family::Diverse) {
                if (!demos_embeddings.empty()) {
                    detail_cli::require_file(demos_embeddings, "embedding file");
                    embeddings = load_embeddings(demos_embeddings);
                } else if (!demos_backend.empty()) {
                    auto backend = detail_cli::parse_backend(demos_backend);
                    LlmClient client(backend);
                    EmbeddingSet set;
                    std::vector<std::string> texts;
                    for (const auto& q : corpus.questions) texts.push_back(q.text);
                    const auto vectors = client.embed(texts);
                    for (std::size_t i = 0; i < corpus.questions.size(); ++i) {
                        set.insert(corpus.questions[i].id, vectors[i]);
                    }
                    embeddings = std::move(set);
                } else {
                    throw ConfigError("diverse strategy needs --embeddings or --backend");
                }
            }
            const auto selection =
                select_demonstrations(strategy, pool, target, rendering, demos_seed,
                                      embeddings ? &*embeddings : nullptr);
            out << "strategy " << strategy.name() << " for pair " << key.concept_id << "/"
                << key.question_id << " (seed " << demos_seed << ")\n";
            for (std::size_t i = 0; i < selection.demonstrations.size(); ++i) {
                const auto& d = selection.demonstrations[i];
                const auto& k = selection.demo_keys[i];
                out << "[" << i + 1 << "] pair " << k.concept_id << "/" << k.question_id;
                if (!selection.cluster_ids.empty()) out << " cluster " << selection.cluster_ids[i];
                out << "\n    knowledge: " << d.knowledge_text << "\n    question:  "
                    << d.question_text << "\n    judgement: " << d.judgment_text << "\n";
            }
            for (const auto& w : selection.warnings) out << "warning: " << w << "\n";
            return 0;
        }
        if (compare->parsed()) {
            detail_cli::require_file(cmp_a, "run record A");
            detail_cli::require_file(cmp_b, "run record B");
            const auto format = report_format_from_name(cmp_format);
            const auto record_a = load_run_record(cmp_a);
            const auto record_b = load_run_record(cmp_b);
            out << render_comparison(compare_records(record_a, record_b), format);
            return 0;
        }
    } catch (const ConfigError& e) {
        err << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}

} // namespace knowtag::cli
