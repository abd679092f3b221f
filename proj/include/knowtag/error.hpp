// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace knowtag {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Corpus file problems: malformed records, dangling references, duplicates.
class CorpusError : public Error {
public:
    using Error::Error;
};

/// Invalid run/backend/CLI configuration detected before any work starts.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Backend call failed. `retryable` distinguishes transport/rate-limit
/// failures from permanent ones such as authentication errors.
class BackendError : public Error {
public:
    BackendError(const std::string& what, bool retryable_, int status_ = 0)
        : Error(what), retryable(retryable_), status(status_) {}

    bool retryable;
    int status;
};

/// Replay needed a completion that is not in the cache.
class CacheMissError : public Error {
public:
    explicit CacheMissError(const std::string& key_)
        : Error("cache miss for key " + key_), key(key_) {}

    std::string key;
};

} // namespace knowtag
