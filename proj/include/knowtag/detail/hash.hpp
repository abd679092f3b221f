// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <openssl/evp.h>

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace knowtag::detail {

/// Incremental SHA-256 with length-prefixed field framing so that
/// concatenation ambiguity cannot produce key collisions.
class Sha256 {
public:
    Sha256() : ctx_(EVP_MD_CTX_new()) {
        if (ctx_ == nullptr || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1) {
            throw std::runtime_error("SHA-256 init failed");
        }
    }

    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;

    ~Sha256() {
        if (ctx_ != nullptr) EVP_MD_CTX_free(ctx_);
    }

    void update(std::string_view bytes) {
        if (EVP_DigestUpdate(ctx_, bytes.data(), bytes.size()) != 1) {
            throw std::runtime_error("SHA-256 update failed");
        }
    }

    void update_u64(std::uint64_t v) {
        std::array<unsigned char, 8> le{};
        for (int i = 0; i < 8; ++i) le[static_cast<std::size_t>(i)] = static_cast<unsigned char>(v >> (8 * i));
        if (EVP_DigestUpdate(ctx_, le.data(), le.size()) != 1) {
            throw std::runtime_error("SHA-256 update failed");
        }
    }

    /// Length prefix followed by the bytes; unambiguous under concatenation.
    void update_field(std::string_view bytes) {
        update_u64(bytes.size());
        update(bytes);
    }

    std::string hex_digest() {
        std::array<unsigned char, EVP_MAX_MD_SIZE> out{};
        unsigned int len = 0;
        if (EVP_DigestFinal_ex(ctx_, out.data(), &len) != 1) {
            throw std::runtime_error("SHA-256 final failed");
        }
        static const char* digits = "0123456789abcdef";
        std::string hex;
        hex.reserve(2 * len);
        for (unsigned int i = 0; i < len; ++i) {
            hex.push_back(digits[out[i] >> 4]);
            hex.push_back(digits[out[i] & 0x0F]);
        }
        return hex;
    }

private:
    EVP_MD_CTX* ctx_;
};

inline std::string sha256_hex(std::string_view bytes) {
    Sha256 h;
    h.update(bytes);
    return h.hex_digest();
}

} // namespace knowtag::detail
