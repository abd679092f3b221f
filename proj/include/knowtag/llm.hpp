// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "knowtag/chat.hpp"
#include "knowtag/detail/hash.hpp"
#include "knowtag/detail/jsonl.hpp"
#include "knowtag/detail/rng.hpp"
#include "knowtag/error.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

namespace knowtag {

enum class BackendKind { Http, Mock };

struct RetryPolicy {
    int max_attempts = 3;
    double backoff_base_s = 1.0; // sleeps base, 2*base, 4*base, ...

    bool operator==(const RetryPolicy&) const = default;
};

/// Backend selection plus everything needed to reach it. Credentials are
/// named by environment variable, never stored.
struct BackendConfig {
    BackendKind kind = BackendKind::Mock;
    std::string endpoint;       // http: full URL of the chat-completions route
    std::string credential_env; // http: env var holding the bearer token
    std::string script_path;    // mock: rule file
    RetryPolicy retry;
    std::string cache_path;     // optional persistent response cache
    int embed_dim = 8;          // mock embeddings
    std::uint64_t embed_seed = 0;

    bool operator==(const BackendConfig&) const = default;

    void validate() const {
        if (kind == BackendKind::Http) {
            if (endpoint.empty()) throw ConfigError("http backend requires an endpoint");
            if (credential_env.empty()) throw ConfigError("http backend requires a credential env var name");
        } else {
            if (script_path.empty()) throw ConfigError("mock backend requires a script path");
        }
        if (retry.max_attempts < 1) throw ConfigError("retry max_attempts must be >= 1");
        if (embed_dim < 1) throw ConfigError("embed_dim must be >= 1");
    }
};

struct CompletionRequest {
    std::string model;
    std::vector<Message> messages;
    double temperature = 0.0;
    int max_tokens = 512;
};

struct CompletionResponse {
    std::string content;
    std::string model;
    std::chrono::milliseconds latency{0};
    bool from_cache = false;
};

namespace detail_llm {

inline std::string format_temperature(double t) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", t);
    return buf;
}

} // namespace detail_llm

/// Equal inputs produce equal keys; any field change produces a new key.
inline std::string cache_key(const BackendConfig& config, const CompletionRequest& request) {
    detail::Sha256 h;
    h.update_field(config.kind == BackendKind::Http ? "http" : "mock");
    h.update_field(request.model);
    h.update_u64(request.messages.size());
    for (const auto& m : request.messages) {
        h.update_field(role_name(m.role));
        h.update_field(m.content);
    }
    h.update_field(detail_llm::format_temperature(request.temperature));
    h.update_u64(static_cast<std::uint64_t>(request.max_tokens));
    return h.hex_digest();
}

inline std::string embed_cache_key(const BackendConfig& config, const std::string& text) {
    detail::Sha256 h;
    h.update_field(config.kind == BackendKind::Http ? "http" : "mock");
    h.update_field("embed");
    h.update_field(text);
    if (config.kind == BackendKind::Mock) {
        h.update_u64(static_cast<std::uint64_t>(config.embed_dim));
        h.update_u64(config.embed_seed);
    }
    return h.hex_digest();
}

/// Scripted replies for the deterministic mock backend. Rules are tried in
/// file order against the concatenated prompt text; the first match wins and
/// a mandatory default rule answers when nothing matches. A rule with an
/// `occurrence` field fires only on its Nth match (counting across the run),
/// which is how fixtures script a different reply for a reflection turn.
class MockScript {
public:
    struct Rule {
        std::string pattern;
        bool is_regex = false;
        std::optional<int> occurrence;
        std::string reply;
        bool is_default = false;
        std::regex compiled;
    };

    static MockScript load(const std::filesystem::path& path) {
        MockScript script;
        detail::for_each_record(path, [&](std::size_t line_no, const detail::json& record) {
            const std::string context = path.string() + ":" + std::to_string(line_no);
            Rule rule;
            rule.reply = detail::require_string(record, "reply", context);
            rule.is_default = record.value("default", false);
            if (!rule.is_default) {
                rule.pattern = detail::require_string(record, "pattern", context);
                const std::string kind = record.value("pattern_kind", std::string("substring"));
                if (kind == "regex") {
                    rule.is_regex = true;
                    try {
                        rule.compiled = std::regex(rule.pattern);
                    } catch (const std::regex_error& e) {
                        throw Error(context + ": invalid pattern: " + e.what());
                    }
                } else if (kind != "substring") {
                    throw Error(context + ": unknown pattern_kind '" + kind + "'");
                }
                if (record.contains("occurrence")) {
                    rule.occurrence = static_cast<int>(detail::require_int(record, "occurrence", context));
                }
            }
            script.rules_.push_back(std::move(rule));
        });
        bool has_default = false;
        for (const auto& r : script.rules_) has_default = has_default || r.is_default;
        if (!has_default) throw Error(path.string() + ": mock script has no default rule");
        script.match_counts_.assign(script.rules_.size(), 0);
        return script;
    }

    std::string resolve(const std::string& prompt_text) const {
        std::lock_guard<std::mutex> guard(mutex_);
        for (std::size_t i = 0; i < rules_.size(); ++i) {
            const auto& rule = rules_[i];
            if (rule.is_default) continue;
            const bool matches = rule.is_regex
                                     ? std::regex_search(prompt_text, rule.compiled)
                                     : prompt_text.find(rule.pattern) != std::string::npos;
            if (!matches) continue;
            const int count = ++match_counts_[i];
            if (rule.occurrence && *rule.occurrence != count) continue;
            return rule.reply;
        }
        for (const auto& rule : rules_) {
            if (rule.is_default) return rule.reply;
        }
        throw Error("mock script has no default rule"); // unreachable after load
    }

private:
    std::vector<Rule> rules_;
    mutable std::vector<int> match_counts_;
    mutable std::mutex mutex_;
};

/// Append-only response store keyed by cache-key hex. Concurrent readers,
/// serialized appends; reloadable from its line-delimited file.
class ResponseCache {
public:
    ResponseCache() = default;

    explicit ResponseCache(std::filesystem::path path) : path_(std::move(path)) {
        if (!path_.empty() && std::filesystem::exists(path_)) {
            detail::for_each_record(path_, [&](std::size_t line_no, const detail::json& record) {
                const std::string context = path_.string() + ":" + std::to_string(line_no);
                entries_[detail::require_string(record, "key", context)] =
                    detail::require_string(record, "content", context);
            });
        }
    }

    std::optional<std::string> lookup(const std::string& key) const {
        std::lock_guard<std::mutex> guard(mutex_);
        auto it = entries_.find(key);
        if (it == entries_.end()) return std::nullopt;
        return it->second;
    }

    void insert(const std::string& key, const std::string& content) {
        std::lock_guard<std::mutex> guard(mutex_);
        if (!entries_.emplace(key, content).second) return;
        if (path_.empty()) return;
        std::ofstream out(path_, std::ios::app);
        if (!out) throw Error("cannot append to cache " + path_.string());
        detail::json record{{"key", key}, {"content", content}};
        out << record.dump() << '\n';
    }

    void erase(const std::string& key) {
        std::lock_guard<std::mutex> guard(mutex_);
        entries_.erase(key);
    }

    std::size_t size() const {
        std::lock_guard<std::mutex> guard(mutex_);
        return entries_.size();
    }

private:
    std::filesystem::path path_;
    mutable std::unordered_map<std::string, std::string> entries_;
    mutable std::mutex mutex_;
};

/// Uniform access to one chat-completion/embedding backend with a response
/// cache in front. Safe to call from multiple threads. In cache-only mode
/// (replay) a miss raises CacheMissError instead of reaching any backend.
class LlmClient {
public:
    explicit LlmClient(BackendConfig config, bool cache_only = false)
        : config_(std::move(config)), cache_(config_.cache_path), cache_only_(cache_only) {
        config_.validate();
        if (!cache_only_ && config_.kind == BackendKind::Mock) {
            script_ = std::make_unique<MockScript>(MockScript::load(config_.script_path));
        }
    }

    static LlmClient cache_only(BackendConfig config) {
        return LlmClient(std::move(config), true);
    }

    const BackendConfig& config() const { return config_; }

    /// Number of requests that actually reached the backend (cache misses).
    std::uint64_t backend_calls() const { return backend_calls_.load(); }

    ResponseCache& cache() { return cache_; }

    CompletionResponse complete(const CompletionRequest& request) {
        if (request.messages.empty()) throw ConfigError("completion request has no messages");
        for (const auto& m : request.messages) {
            if (m.role == Role::User && m.content.empty()) {
                throw ConfigError("completion request has an empty user message");
            }
        }
        const auto started = std::chrono::steady_clock::now();
        const std::string key = cache_key(config_, request);
        if (auto hit = cache_.lookup(key)) {
            return {*hit, request.model, elapsed_since(started), true};
        }
        if (cache_only_) throw CacheMissError(key);
        const std::string content = with_retries([&] { return call_backend(request); });
        cache_.insert(key, content);
        return {content, request.model, elapsed_since(started), false};
    }

    /// One vector per input text, all the same dimension. The mock derives
    /// each component from a seeded folded hash of the text: splitmix64 is
    /// keyed with (embed_seed, FNV-1a of the text, component index) and the
    /// output mapped to [-1, 1).
    std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) {
        if (texts.empty()) throw ConfigError("embed: no input texts");
        std::vector<EmbeddingVector> out;
        out.reserve(texts.size());
        std::size_t dim = 0;
        for (const auto& text : texts) {
            const std::string key = embed_cache_key(config_, text);
            EmbeddingVector v;
            if (auto hit = cache_.lookup(key)) {
                v = detail::json::parse(*hit).get<EmbeddingVector>();
            } else {
                if (cache_only_) throw CacheMissError(key);
                v = with_retries([&] { return embed_backend(text); });
                cache_.insert(key, detail::json(v).dump());
            }
            if (dim == 0) dim = v.size();
            if (v.size() != dim) {
                throw BackendError("backend returned inconsistent embedding dimensions", false);
            }
            out.push_back(std::move(v));
        }
        return out;
    }

private:
    static std::chrono::milliseconds elapsed_since(std::chrono::steady_clock::time_point t0) {
        return std::chrono::duration_cast<std::chrono::milliseconds>(
            std::chrono::steady_clock::now() - t0);
    }

    template <typename Call>
    auto with_retries(Call&& call) -> decltype(call()) {
        const int attempts = config_.retry.max_attempts;
        for (int attempt = 1;; ++attempt) {
            try {
                ++backend_calls_;
                return call();
            } catch (const BackendError& e) {
                if (!e.retryable || attempt >= attempts) {
                    throw BackendError(std::string(e.what()) + " (after " +
                                           std::to_string(attempt) + " attempts)",
                                       e.retryable, e.status);
                }
                const double factor = static_cast<double>(1ULL << (attempt - 1));
                std::this_thread::sleep_for(std::chrono::duration<double>(
                    config_.retry.backoff_base_s * factor));
            }
        }
    }

    std::string call_backend(const CompletionRequest& request);
    EmbeddingVector embed_backend(const std::string& text);

    BackendConfig config_;
    ResponseCache cache_;
    bool cache_only_ = false;
    std::unique_ptr<MockScript> script_;
    std::atomic<std::uint64_t> backend_calls_{0};
};

} // namespace knowtag

#include "knowtag/detail/llm_backends.hpp"
