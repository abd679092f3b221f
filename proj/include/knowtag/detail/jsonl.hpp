// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "knowtag/error.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>

namespace knowtag::detail {

using json = nlohmann::json;

/// Calls `handle(line_number, record)` for every non-blank line of a
/// line-delimited JSON file. Line numbers are 1-based.
inline void for_each_record(const std::filesystem::path& path,
                            const std::function<void(std::size_t, const json&)>& handle) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json record;
        try {
            record = json::parse(line);
        } catch (const json::parse_error& e) {
            throw Error(path.string() + ":" + std::to_string(line_no) +
                        ": malformed record: " + e.what());
        }
        handle(line_no, record);
    }
}

inline std::string require_string(const json& record, const char* key,
                                  const std::string& context) {
    if (!record.contains(key) || !record[key].is_string()) {
        throw Error(context + ": missing or non-string field '" + key + "'");
    }
    return record[key].get<std::string>();
}

inline long require_int(const json& record, const char* key, const std::string& context) {
    if (!record.contains(key) || !record[key].is_number_integer()) {
        throw Error(context + ": missing or non-integer field '" + key + "'");
    }
    return record[key].get<long>();
}

} // namespace knowtag::detail
