// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "knowtag/detail/jsonl.hpp"
#include "knowtag/error.hpp"

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace knowtag {

/// A curriculum knowledge concept with its expert-written interpretation.
struct KnowledgeConcept {
    std::string id;
    std::string name;
    std::string definition;
    std::string boundary;

    bool operator==(const KnowledgeConcept&) const = default;
};

struct Question {
    std::string id;
    std::string text;

    bool operator==(const Question&) const = default;
};

struct PairKey {
    std::string concept_id;
    std::string question_id;

    bool operator==(const PairKey&) const = default;
};

/// One annotated (concept, question) sample. label is 1 for match, 0 for
/// mismatch. explanation, when present, is the human rationale used when the
/// pair is rendered as a few-shot demonstration.
struct LabeledPair {
    std::string concept_id;
    std::string question_id;
    int label = 0;
    std::string explanation;

    PairKey key() const { return {concept_id, question_id}; }

    bool operator==(const LabeledPair&) const = default;
};

class Corpus {
public:
    std::vector<KnowledgeConcept> concepts;
    std::vector<Question> questions;
    std::vector<LabeledPair> pairs;

    const KnowledgeConcept& concept(const std::string& id) const {
        auto it = concept_index_.find(id);
        if (it == concept_index_.end()) throw CorpusError("unknown concept id: " + id);
        return concepts[it->second];
    }

    const Question& question(const std::string& id) const {
        auto it = question_index_.find(id);
        if (it == question_index_.end()) throw CorpusError("unknown question id: " + id);
        return questions[it->second];
    }

    std::optional<std::size_t> find_pair(const PairKey& key) const {
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            if (pairs[i].key() == key) return i;
        }
        return std::nullopt;
    }

    /// Rebuild the id lookup tables and check every invariant: unique
    /// non-empty ids, resolvable references, no duplicate pairs, labels in
    /// {0,1}, question text non-empty after trimming.
    void validate() {
        concept_index_.clear();
        question_index_.clear();
        for (std::size_t i = 0; i < concepts.size(); ++i) {
            const auto& c = concepts[i];
            if (c.id.empty()) throw CorpusError("concept with empty id");
            if (c.name.empty()) throw CorpusError("concept '" + c.id + "' has empty name");
            if (!concept_index_.emplace(c.id, i).second) {
                throw CorpusError("duplicate concept id: " + c.id);
            }
        }
        for (std::size_t i = 0; i < questions.size(); ++i) {
            const auto& q = questions[i];
            if (q.id.empty()) throw CorpusError("question with empty id");
            if (q.text.find_first_not_of(" \t\r\n") == std::string::npos) {
                throw CorpusError("question '" + q.id + "' has empty text");
            }
            if (!question_index_.emplace(q.id, i).second) {
                throw CorpusError("duplicate question id: " + q.id);
            }
        }
        std::unordered_set<std::string> seen_pairs;
        for (const auto& p : pairs) {
            if (concept_index_.find(p.concept_id) == concept_index_.end()) {
                throw CorpusError("pair references unknown concept_id: " + p.concept_id);
            }
            if (question_index_.find(p.question_id) == question_index_.end()) {
                throw CorpusError("pair references unknown question_id: " + p.question_id);
            }
            if (p.label != 0 && p.label != 1) {
                throw CorpusError("pair (" + p.concept_id + ", " + p.question_id +
                                  ") has label outside {0,1}");
            }
            if (!seen_pairs.insert(p.concept_id + "\x1f" + p.question_id).second) {
                throw CorpusError("duplicate pair (" + p.concept_id + ", " + p.question_id + ")");
            }
        }
    }

private:
    std::unordered_map<std::string, std::size_t> concept_index_;
    std::unordered_map<std::string, std::size_t> question_index_;
};

struct ConceptStats {
    std::string concept_id;
    long questions = 0;
    long matches = 0;
    long mismatches = 0;

    bool operator==(const ConceptStats&) const = default;
};

struct CorpusStats {
    std::vector<ConceptStats> per_concept; // corpus concept order
    ConceptStats overall;                  // concept_id = "overall"
};

/// Labeled pairs eligible as demonstrations for one target sample. Entries
/// are indices into corpus.pairs, in corpus order; the target pair and any
/// pair sharing its exact question text are excluded.
struct DemonstrationPool {
    const Corpus* corpus = nullptr;
    std::vector<std::size_t> pair_indices;

    std::size_t size() const { return pair_indices.size(); }

    const LabeledPair& entry(std::size_t i) const {
        return corpus->pairs[pair_indices[i]];
    }

    std::string question_text(std::size_t i) const {
        return corpus->question(entry(i).question_id).text;
    }
};

inline Corpus load_corpus(const std::filesystem::path& path) {
    Corpus corpus;
    detail::for_each_record(path, [&](std::size_t line_no, const detail::json& record) {
        const std::string context = path.string() + ":" + std::to_string(line_no);
        const std::string kind = detail::require_string(record, "kind", context);
        if (kind == "concept") {
            KnowledgeConcept c;
            c.id = detail::require_string(record, "id", context);
            c.name = detail::require_string(record, "name", context);
            c.definition = record.value("definition", std::string{});
            c.boundary = record.value("boundary", std::string{});
            corpus.concepts.push_back(std::move(c));
        } else if (kind == "question") {
            Question q;
            q.id = detail::require_string(record, "id", context);
            q.text = detail::require_string(record, "text", context);
            corpus.questions.push_back(std::move(q));
        } else if (kind == "pair") {
            LabeledPair p;
            p.concept_id = detail::require_string(record, "concept_id", context);
            p.question_id = detail::require_string(record, "question_id", context);
            p.label = static_cast<int>(detail::require_int(record, "label", context));
            p.explanation = record.value("explanation", std::string{});
            corpus.pairs.push_back(std::move(p));
        } else {
            throw CorpusError(context + ": unknown record kind '" + kind + "'");
        }
    });
    try {
        corpus.validate();
    } catch (const CorpusError& e) {
        throw CorpusError(path.string() + ": " + e.what());
    }
    return corpus;
}

/// Writes the three sections (concepts, questions, pairs) as one JSON record
/// per line. load_corpus(save_corpus(c)) round-trips field for field.
inline void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    for (const auto& c : corpus.concepts) {
        detail::json record{{"kind", "concept"}, {"id", c.id}, {"name", c.name},
                            {"definition", c.definition}, {"boundary", c.boundary}};
        out << record.dump() << '\n';
    }
    for (const auto& q : corpus.questions) {
        detail::json record{{"kind", "question"}, {"id", q.id}, {"text", q.text}};
        out << record.dump() << '\n';
    }
    for (const auto& p : corpus.pairs) {
        detail::json record{{"kind", "pair"}, {"concept_id", p.concept_id},
                            {"question_id", p.question_id}, {"label", p.label}};
        if (!p.explanation.empty()) record["explanation"] = p.explanation;
        out << record.dump() << '\n';
    }
}

inline CorpusStats corpus_stats(const Corpus& corpus) {
    CorpusStats stats;
    stats.overall.concept_id = "overall";
    std::unordered_map<std::string, std::size_t> row_of;
    for (const auto& c : corpus.concepts) {
        row_of.emplace(c.id, stats.per_concept.size());
        stats.per_concept.push_back({c.id, 0, 0, 0});
    }
    for (const auto& p : corpus.pairs) {
        auto& row = stats.per_concept[row_of.at(p.concept_id)];
        row.questions += 1;
        (p.label == 1 ? row.matches : row.mismatches) += 1;
        stats.overall.questions += 1;
        (p.label == 1 ? stats.overall.matches : stats.overall.mismatches) += 1;
    }
    return stats;
}

/// All pairs except the excluded identity and except pairs whose question
/// text is byte-identical to the excluded question's text. Pass nullopt to
/// keep every pair.
inline DemonstrationPool pool_for(const Corpus& corpus, std::optional<PairKey> exclude) {
    DemonstrationPool pool;
    pool.corpus = &corpus;
    std::string excluded_text;
    if (exclude) excluded_text = corpus.question(exclude->question_id).text;
    for (std::size_t i = 0; i < corpus.pairs.size(); ++i) {
        const auto& p = corpus.pairs[i];
        if (exclude) {
            if (p.key() == *exclude) continue;
            if (corpus.question(p.question_id).text == excluded_text) continue;
        }
        pool.pair_indices.push_back(i);
    }
    return pool;
}

} // namespace knowtag
