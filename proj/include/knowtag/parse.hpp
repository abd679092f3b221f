// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cctype>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace knowtag {

enum class Verdict { Positive, Negative, Unparseable };

enum class ConfirmationOutcome { Confirmed, Overturned, Ambiguous };

/// Parsed polarity of a free-form reply. `reason` is the text after the
/// verdict sentence, `raw` the untouched reply, `matched_rule` the cascade
/// rule that decided (absent for Unparseable).
struct Judgment {
    Verdict verdict = Verdict::Unparseable;
    std::string reason;
    std::string raw;
    std::optional<std::string> matched_rule;
};

inline std::string_view verdict_name(Verdict v) {
    switch (v) {
        case Verdict::Positive: return "positive";
        case Verdict::Negative: return "negative";
        case Verdict::Unparseable: return "unparseable";
    }
    return "unparseable";
}

inline std::string_view confirmation_name(ConfirmationOutcome c) {
    switch (c) {
        case ConfirmationOutcome::Confirmed: return "confirmed";
        case ConfirmationOutcome::Overturned: return "overturned";
        case ConfirmationOutcome::Ambiguous: return "ambiguous";
    }
    return "ambiguous";
}

namespace detail {

inline char lower(char c) {
    return static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
}

inline bool is_word_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) != 0;
}

/// Offset of the first character that is neither whitespace nor a markdown or
/// quote decoration. Keeps letters intact so the verdict token survives.
inline std::size_t skip_decorations(std::string_view text) {
    const std::string_view decorations = " \t\r\n#*>-`_~\"'()[]";
    std::size_t i = 0;
    while (i < text.size() && decorations.find(text[i]) != std::string_view::npos) ++i;
    return i;
}

/// True when `text` starts at `pos` with `word` (case-insensitive) followed
/// by a non-alphanumeric character or the end of the text.
inline bool starts_with_word(std::string_view text, std::size_t pos, std::string_view word) {
    if (pos + word.size() > text.size()) return false;
    for (std::size_t i = 0; i < word.size(); ++i) {
        if (lower(text[pos + i]) != word[i]) return false;
    }
    const std::size_t after = pos + word.size();
    return after >= text.size() || !is_word_char(text[after]);
}

/// First standalone occurrence of `word` at or after `from`; npos if none.
/// Word boundaries on both sides, so "nothing" and "yesterday" never match.
inline std::size_t find_word(std::string_view text, std::string_view word, std::size_t from = 0) {
    for (std::size_t i = from; i + word.size() <= text.size(); ++i) {
        if (i > 0 && is_word_char(text[i - 1])) continue;
        if (starts_with_word(text, i, word)) return i;
    }
    return std::string_view::npos;
}

inline bool contains_phrase(const std::string& haystack_lower, std::string_view phrase) {
    return haystack_lower.find(phrase) != std::string::npos;
}

/// Reason text: what follows the first sentence-ending punctuation after the
/// deciding token, else the remainder after the token.
inline std::string extract_reason(std::string_view text, std::size_t token_end) {
    std::size_t sentence_end = std::string_view::npos;
    for (std::size_t i = token_end; i < text.size(); ++i) {
        if (text[i] == '.' || text[i] == '!' || text[i] == '?') {
            sentence_end = i;
            break;
        }
    }
    std::string_view tail;
    if (sentence_end != std::string_view::npos && sentence_end + 1 < text.size()) {
        tail = text.substr(sentence_end + 1);
    } else if (sentence_end == std::string_view::npos) {
        tail = text.substr(token_end);
        while (!tail.empty() && (tail.front() == ',' || tail.front() == ':' || tail.front() == ';')) {
            tail.remove_prefix(1);
        }
    }
    while (!tail.empty() && std::isspace(static_cast<unsigned char>(tail.front()))) tail.remove_prefix(1);
    while (!tail.empty() && std::isspace(static_cast<unsigned char>(tail.back()))) tail.remove_suffix(1);
    return std::string(tail);
}

} // namespace detail

/// Regular-expression-style cascade over a reply, case-insensitive after
/// trimming whitespace and leading markdown/quote characters:
///   1. starts with the word "yes"  -> Positive
///   2. starts with the word "no"   -> Negative
///   3. first standalone "yes"/"no" word decides
///   4. otherwise Unparseable
/// Total on arbitrary input; Unparseable is a value, never an error.
inline Judgment parse_judgment(const std::string& raw) {
    Judgment result;
    result.raw = raw;

    const std::string_view text = raw;
    const std::size_t start = detail::skip_decorations(text);

    if (detail::starts_with_word(text, start, "yes")) {
        result.verdict = Verdict::Positive;
        result.matched_rule = "prefix-yes";
        result.reason = detail::extract_reason(text, start + 3);
        return result;
    }
    if (detail::starts_with_word(text, start, "no")) {
        result.verdict = Verdict::Negative;
        result.matched_rule = "prefix-no";
        result.reason = detail::extract_reason(text, start + 2);
        return result;
    }

    const std::size_t yes_at = detail::find_word(text, "yes", start);
    const std::size_t no_at = detail::find_word(text, "no", start);
    if (yes_at != std::string_view::npos && (no_at == std::string_view::npos || yes_at < no_at)) {
        result.verdict = Verdict::Positive;
        result.matched_rule = "word-yes";
        result.reason = detail::extract_reason(text, yes_at + 3);
        return result;
    }
    if (no_at != std::string_view::npos) {
        result.verdict = Verdict::Negative;
        result.matched_rule = "word-no";
        result.reason = detail::extract_reason(text, no_at + 2);
        return result;
    }

    return result;
}

/// Confirmation cascade for the reflection turn. Overturn patterns are
/// checked first; an Ambiguous outcome leaves the original verdict alone
/// downstream, so noisy confirmations never flip a judgment by accident.
inline ConfirmationOutcome parse_confirmation(const std::string& raw) {
    const std::string_view text = raw;
    const std::size_t start = detail::skip_decorations(text);

    std::string lowered;
    lowered.reserve(raw.size());
    for (char c : raw) lowered.push_back(detail::lower(c));

    static constexpr std::string_view overturn_phrases[] = {
        "prior answer is wrong",       "prior answer is incorrect",
        "prior response is incorrect", "prior response is not correct",
        "answer is wrong",
    };
    if (detail::starts_with_word(text, start, "no")) return ConfirmationOutcome::Overturned;
    for (const auto phrase : overturn_phrases) {
        if (detail::contains_phrase(lowered, phrase)) return ConfirmationOutcome::Overturned;
    }

    if (detail::starts_with_word(text, start, "yes")) return ConfirmationOutcome::Confirmed;
    static constexpr std::string_view confirm_phrases[] = {
        "prior answer is correct",
        "answer is correct",
    };
    static constexpr std::string_view negators[] = {"not", "n't", "never", "no"};
    for (const auto phrase : confirm_phrases) {
        const std::size_t at = lowered.find(phrase);
        if (at == std::string::npos) continue;
        // Scan the few words immediately before the phrase for a negator.
        const std::size_t window_start = at > 24 ? at - 24 : 0;
        const std::string_view window = std::string_view(lowered).substr(window_start, at - window_start);
        bool negated = false;
        for (const auto neg : negators) {
            if (neg == "n't") {
                if (window.find(neg) != std::string_view::npos) negated = true;
            } else if (detail::find_word(window, neg) != std::string_view::npos) {
                negated = true;
            }
        }
        if (!negated) return ConfirmationOutcome::Confirmed;
    }

    return ConfirmationOutcome::Ambiguous;
}

} // namespace knowtag
