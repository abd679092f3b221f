// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "knowtag/chat.hpp"
#include "knowtag/corpus.hpp"
#include "knowtag/detail/hash.hpp"
#include "knowtag/error.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace knowtag {

enum class PromptVariant { V1, V2 };

enum class KnowledgeRendering { NameOnly, Interpreted };

/// A solved example inserted into a few-shot prompt. judgment_text always
/// begins with "Yes" or "No".
struct Demonstration {
    std::string knowledge_text;
    std::string question_text;
    std::string judgment_text;

    bool operator==(const Demonstration&) const = default;
};

/// An ordered chat message sequence plus a content fingerprint. Builders are
/// pure: identical inputs produce byte-identical messages and fingerprints.
struct PromptBundle {
    std::vector<Message> messages;
    std::string fingerprint;

    bool operator==(const PromptBundle&) const = default;
};

inline std::string_view variant_name(PromptVariant v) {
    return v == PromptVariant::V1 ? "v1" : "v2";
}

inline std::string_view rendering_name(KnowledgeRendering r) {
    return r == KnowledgeRendering::NameOnly ? "name" : "interpreted";
}

inline PromptVariant variant_from_name(std::string_view name) {
    if (name == "v1") return PromptVariant::V1;
    if (name == "v2") return PromptVariant::V2;
    throw ConfigError("unknown prompt variant: " + std::string(name));
}

inline KnowledgeRendering rendering_from_name(std::string_view name) {
    if (name == "name") return KnowledgeRendering::NameOnly;
    if (name == "interpreted") return KnowledgeRendering::Interpreted;
    throw ConfigError("unknown knowledge rendering: " + std::string(name));
}

namespace prompt_text {

// Task goal sentences; v2 appends the output-format, reason, and
// other-knowledge refinements.
inline constexpr std::string_view instruction_v1 =
    "You are a knowledge concept annotator. "
    "Your job is to judge whether the given Knowledge is matching the Question.";

inline constexpr std::string_view instruction_v2 =
    "You are a knowledge concept annotator. "
    "Your job is to judge whether the given Knowledge is matching the Question. "
    "Your answer should start with 'Yes' or 'No'. "
    "You should also provide your reason for your judgement. "
    "If Question covers other Knowledge, your answer should be 'No'.";

inline constexpr std::string_view reflection_instruction =
    "Instruction: Check the knowledge and question and confirm whether the "
    "prior answer is correct or wrong.";

inline constexpr std::string_view confirmation_slot = "Confirmation:";

} // namespace prompt_text

/// Lowercase hex SHA-256 over the (role, content) sequence, each field
/// length-prefixed.
inline std::string fingerprint(const std::vector<Message>& messages) {
    detail::Sha256 h;
    for (const auto& m : messages) {
        h.update_field(role_name(m.role));
        h.update_field(m.content);
    }
    return h.hex_digest();
}

/// NameOnly yields the concept name; Interpreted yields the definition,
/// followed by the boundary after a single space when the boundary is
/// non-empty.
inline std::string render_knowledge(const KnowledgeConcept& concept, KnowledgeRendering rendering) {
    if (rendering == KnowledgeRendering::NameOnly) return concept.name;
    if (concept.definition.empty()) {
        throw Error("concept '" + concept.id + "' has no definition text for interpreted rendering");
    }
    if (concept.boundary.empty()) return concept.definition;
    return concept.definition + " " + concept.boundary;
}

/// Gold label rendered as "Yes."/"No." with the pair's explanation appended
/// after a space when one exists.
inline Demonstration make_demonstration(std::string knowledge_text, std::string question_text,
                                        int label, const std::string& explanation) {
    Demonstration d;
    d.knowledge_text = std::move(knowledge_text);
    d.question_text = std::move(question_text);
    d.judgment_text = label == 1 ? "Yes." : "No.";
    if (!explanation.empty()) {
        d.judgment_text += " " + explanation;
    }
    return d;
}

namespace detail_prompt {

inline std::string scaffold(std::string_view knowledge, std::string_view question) {
    std::string out;
    out.reserve(knowledge.size() + question.size() + 40);
    out += "Knowledge: ";
    out += knowledge;
    out += "\nQuestion: ";
    out += question;
    out += "\nJudgement:";
    return out;
}

inline PromptBundle seal(std::vector<Message> messages) {
    PromptBundle bundle;
    bundle.messages = std::move(messages);
    bundle.fingerprint = fingerprint(bundle.messages);
    return bundle;
}

} // namespace detail_prompt

inline PromptBundle build_zero_shot(PromptVariant variant, std::string_view knowledge,
                                    std::string_view question) {
    if (knowledge.empty()) throw Error("build_zero_shot: empty knowledge text");
    if (question.empty()) throw Error("build_zero_shot: empty question text");
    std::vector<Message> messages;
    messages.push_back({Role::System,
                        std::string(variant == PromptVariant::V1 ? prompt_text::instruction_v1
                                                                 : prompt_text::instruction_v2)});
    messages.push_back({Role::User, detail_prompt::scaffold(knowledge, question)});
    return detail_prompt::seal(std::move(messages));
}

/// Instruction first, then each demonstration as a Knowledge/Question/
/// Judgement triple with its gold judgment as an assistant turn, then the
/// target scaffold with the Judgement slot left open. Demonstration order is
/// preserved.
inline PromptBundle build_few_shot(PromptVariant variant, const std::vector<Demonstration>& demos,
                                   std::string_view knowledge, std::string_view question) {
    if (demos.empty()) throw Error("build_few_shot: demonstration list is empty");
    if (knowledge.empty()) throw Error("build_few_shot: empty knowledge text");
    if (question.empty()) throw Error("build_few_shot: empty question text");
    std::vector<Message> messages;
    messages.push_back({Role::System,
                        std::string(variant == PromptVariant::V1 ? prompt_text::instruction_v1
                                                                 : prompt_text::instruction_v2)});
    for (const auto& demo : demos) {
        if (demo.judgment_text.empty()) throw Error("build_few_shot: demonstration has empty judgment");
        messages.push_back({Role::User,
                            detail_prompt::scaffold(demo.knowledge_text, demo.question_text)});
        messages.push_back({Role::Assistant, demo.judgment_text});
    }
    messages.push_back({Role::User, detail_prompt::scaffold(knowledge, question)});
    return detail_prompt::seal(std::move(messages));
}

/// The first bundle, the prior judgment as an assistant turn, then the
/// neutral confirmation instruction. The instruction wording is fixed;
/// pushy phrasings ("please double check", "are you sure") are never used.
inline PromptBundle build_reflection(const PromptBundle& first_bundle,
                                     std::string_view first_judgment_raw) {
    if (first_judgment_raw.empty()) throw Error("build_reflection: empty prior judgment");
    std::vector<Message> messages = first_bundle.messages;
    messages.push_back({Role::Assistant, std::string(first_judgment_raw)});
    std::string instruction(prompt_text::reflection_instruction);
    instruction += "\n";
    instruction += prompt_text::confirmation_slot;
    messages.push_back({Role::User, std::move(instruction)});
    return detail_prompt::seal(std::move(messages));
}

} // namespace knowtag
