// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "knowtag/error.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace knowtag {

enum class Role { System, User, Assistant };

struct Message {
    Role role;
    std::string content;

    bool operator==(const Message&) const = default;
};

using EmbeddingVector = std::vector<double>;

inline std::string_view role_name(Role role) {
    switch (role) {
        case Role::System: return "system";
        case Role::User: return "user";
        case Role::Assistant: return "assistant";
    }
    return "user";
}

inline Role role_from_name(std::string_view name) {
    if (name == "system") return Role::System;
    if (name == "user") return Role::User;
    if (name == "assistant") return Role::Assistant;
    throw Error("unknown message role: " + std::string(name));
}

/// Message contents joined with newlines, the flat view a human would read.
inline std::string flatten(const std::vector<Message>& messages) {
    std::string out;
    for (std::size_t i = 0; i < messages.size(); ++i) {
        if (i > 0) out.push_back('\n');
        out += messages[i].content;
    }
    return out;
}

} // namespace knowtag
