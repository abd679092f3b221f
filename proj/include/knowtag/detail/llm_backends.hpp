// SPDX-License-Identifier: Apache-2.0
#pragma once

// Backend call implementations for LlmClient, split out to keep llm.hpp
// readable. Included at the bottom of llm.hpp; not for direct inclusion.

#include <httplib.h>

namespace knowtag {

namespace detail_llm {

struct SplitUrl {
    std::string base; // scheme://host[:port]
    std::string path; // leading slash
};

inline SplitUrl split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw ConfigError("endpoint must be a full URL, got '" + url + "'");
    }
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

} // namespace detail_llm

inline std::string LlmClient::call_backend(const CompletionRequest& request) {
    if (config_.kind == BackendKind::Mock) {
        return script_->resolve(flatten(request.messages));
    }

    const auto url = detail_llm::split_url(config_.endpoint);
    const char* token = std::getenv(config_.credential_env.c_str());
    if (token == nullptr) {
        throw BackendError("credential env var " + config_.credential_env + " is not set", false);
    }

    detail::json body;
    body["model"] = request.model;
    body["messages"] = detail::json::array();
    for (const auto& m : request.messages) {
        body["messages"].push_back({{"role", std::string(role_name(m.role))},
                                    {"content", m.content}});
    }
    body["temperature"] = request.temperature;
    body["max_tokens"] = request.max_tokens;

    httplib::Client client(url.base);
    client.set_connection_timeout(30);
    client.set_read_timeout(120);
    httplib::Headers headers{{"Authorization", std::string("Bearer ") + token}};
    auto res = client.Post(url.path, headers, body.dump(), "application/json");
    if (!res) {
        throw BackendError("transport failure reaching " + config_.endpoint + ": " +
                               httplib::to_string(res.error()),
                           true);
    }
    if (res->status == 401 || res->status == 403) {
        throw BackendError("authentication failed (" + std::to_string(res->status) + ")", false,
                           res->status);
    }
    if (res->status == 429 || res->status >= 500) {
        throw BackendError("backend returned status " + std::to_string(res->status), true,
                           res->status);
    }
    if (res->status != 200) {
        throw BackendError("backend returned status " + std::to_string(res->status), false,
                           res->status);
    }
    try {
        const auto reply = detail::json::parse(res->body);
        return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const std::exception& e) {
        throw BackendError(std::string("malformed backend reply: ") + e.what(), false,
                           res->status);
    }
}

inline EmbeddingVector LlmClient::embed_backend(const std::string& text) {
    if (config_.kind == BackendKind::Mock) {
        // Documented folded-hash scheme: FNV-1a folds the text to 64 bits,
        // splitmix64 expands (seed, fold, component) to a double in [-1, 1).
        std::uint64_t fold = 1469598103934665603ULL;
        for (const unsigned char c : text) {
            fold ^= c;
            fold *= 1099511628211ULL;
        }
        EmbeddingVector v(static_cast<std::size_t>(config_.embed_dim));
        for (std::size_t j = 0; j < v.size(); ++j) {
            const std::uint64_t u = detail::mix64(config_.embed_seed ^ fold ^
                                                  detail::derive_seed(fold, j));
            v[j] = static_cast<double>(u >> 11) * 0x1.0p-52 - 1.0;
        }
        return v;
    }

    const auto chat_url = detail_llm::split_url(config_.endpoint);
    const std::string suffix = "/chat/completions";
    std::string embed_path = chat_url.path;
    if (embed_path.size() >= suffix.size() &&
        embed_path.compare(embed_path.size() - suffix.size(), suffix.size(), suffix) == 0) {
        embed_path = embed_path.substr(0, embed_path.size() - suffix.size()) + "/embeddings";
    } else {
        throw ConfigError("cannot derive embeddings route from endpoint " + config_.endpoint);
    }
    const char* token = std::getenv(config_.credential_env.c_str());
    if (token == nullptr) {
        throw BackendError("credential env var " + config_.credential_env + " is not set", false);
    }

    detail::json body{{"model", "embedding"}, {"input", detail::json::array({text})}};
    httplib::Client client(chat_url.base);
    client.set_connection_timeout(30);
    client.set_read_timeout(120);
    httplib::Headers headers{{"Authorization", std::string("Bearer ") + token}};
    auto res = client.Post(embed_path, headers, body.dump(), "application/json");
    if (!res) {
        throw BackendError("transport failure reaching " + config_.endpoint + ": " +
                               httplib::to_string(res.error()),
                           true);
    }
    if (res->status == 401 || res->status == 403) {
        throw BackendError("authentication failed (" + std::to_string(res->status) + ")", false,
                           res->status);
    }
    if (res->status == 429 || res->status >= 500) {
        throw BackendError("backend returned status " + std::to_string(res->status), true,
                           res->status);
    }
    if (res->status != 200) {
        throw BackendError("backend returned status " + std::to_string(res->status), false,
                           res->status);
    }
    try {
        const auto reply = detail::json::parse(res->body);
        return reply.at("data").at(0).at("embedding").get<EmbeddingVector>();
    } catch (const std::exception& e) {
        throw BackendError(std::string("malformed backend reply: ") + e.what(), false,
                           res->status);
    }
}

} // namespace knowtag
