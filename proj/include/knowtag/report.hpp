// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "knowtag/corpus.hpp"
#include "knowtag/eval.hpp"
#include "knowtag/pipeline.hpp"

#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace knowtag {

enum class ReportFormat { Markdown, Csv };

inline ReportFormat report_format_from_name(std::string_view name) {
    if (name == "markdown") return ReportFormat::Markdown;
    if (name == "csv") return ReportFormat::Csv;
    throw ConfigError("unknown report format: " + std::string(name));
}

struct ReportRow {
    std::string concept_id;
    long scored = 0;
    ConfusionCounts counts;
    Metrics m;
    long unparseable = 0;
};

/// Table-style evaluation report: one row per concept in corpus order plus a
/// pooled (micro-averaged) overall row.
struct Report {
    std::vector<ReportRow> rows;
    ReportRow overall;
    long errored = 0;
    detail::json config_snapshot;
};

namespace detail_report {

inline ReportRow finish_row(ReportRow row) {
    row.scored = row.counts.total();
    if (row.scored > 0) row.m = metrics(row.counts);
    return row;
}

} // namespace detail_report

inline Report build_report(const RunRecord& record, const Corpus& corpus) {
    std::map<std::string, std::size_t> row_of;
    Report report;
    report.config_snapshot = detail_pipeline::config_to_json(record.config);
    report.overall.concept_id = "overall";

    std::vector<ReportRow> rows;
    std::vector<std::string> order;
    for (const auto& sample : record.samples) {
        corpus.concept(sample.pair.concept_id); // throws for unknown concepts
        if (row_of.find(sample.pair.concept_id) == row_of.end()) {
            row_of.emplace(sample.pair.concept_id, rows.size());
            rows.push_back(ReportRow{sample.pair.concept_id});
        }
        auto& row = rows[row_of.at(sample.pair.concept_id)];
        if (sample.status == SampleStatus::Errored) {
            report.errored += 1;
            continue;
        }
        const ScoredSample scored{sample.gold, sample.final_verdict};
        row.counts += confusion(std::span(&scored, 1));
        if (sample.final_verdict == Verdict::Unparseable) row.unparseable += 1;
    }

    // Corpus concept order, limited to concepts present in the record.
    for (const auto& concept : corpus.concepts) {
        auto it = row_of.find(concept.id);
        if (it == row_of.end()) continue;
        auto row = detail_report::finish_row(rows[it->second]);
        report.overall.counts += row.counts;
        report.overall.unparseable += row.unparseable;
        report.rows.push_back(std::move(row));
    }
    report.overall = detail_report::finish_row(std::move(report.overall));
    return report;
}

inline std::string render_report(const Report& report, ReportFormat format) {
    std::ostringstream out;
    auto metric_cells = [&](const ReportRow& row, char sep) {
        out << format_metric(row.m.accuracy) << sep << format_metric(row.m.precision) << sep
            << format_metric(row.m.recall) << sep << format_metric(row.m.f1);
    };
    if (format == ReportFormat::Csv) {
        out << "concept,questions,tp,fp,tn,fn,accuracy,precision,recall,f1,unparseable\n";
        auto emit = [&](const ReportRow& row) {
            out << row.concept_id << ',' << row.scored << ',' << row.counts.tp << ','
                << row.counts.fp << ',' << row.counts.tn << ',' << row.counts.fn << ',';
            metric_cells(row, ',');
            out << ',' << row.unparseable << '\n';
        };
        for (const auto& row : report.rows) emit(row);
        emit(report.overall);
        return out.str();
    }

    out << "| Concept | Questions | Accuracy | Precision | Recall | F1 | Unparseable |\n";
    out << "|---|---|---|---|---|---|---|\n";
    auto emit = [&](const ReportRow& row) {
        out << "| " << row.concept_id << " | " << row.scored << " | ";
        metric_cells(row, '|');
        out << " | " << row.unparseable << " |\n";
    };
    for (const auto& row : report.rows) emit(row);
    emit(report.overall);
    out << "\nerrored samples: " << report.errored << "\n";
    return out.str();
}

struct ComparisonRow {
    std::string concept_id;
    Metrics a;
    Metrics b;

    double accuracy_delta() const { return b.accuracy - a.accuracy; }
    double precision_delta() const { return b.precision - a.precision; }
    double recall_delta() const { return b.recall - a.recall; }
    double f1_delta() const { return b.f1 - a.f1; }
};

/// Paired per-concept metrics of two records (e.g. reflect off vs on) with
/// B-minus-A deltas; the overall row pools counts per record.
struct Comparison {
    std::vector<ComparisonRow> rows;
    ComparisonRow overall;
};

namespace detail_report {

inline std::map<std::string, ConfusionCounts> counts_by_concept(const RunRecord& record,
                                                                std::vector<std::string>& order) {
    std::map<std::string, ConfusionCounts> by_concept;
    for (const auto& sample : record.samples) {
        if (sample.status == SampleStatus::Errored) continue;
        if (by_concept.find(sample.pair.concept_id) == by_concept.end()) {
            order.push_back(sample.pair.concept_id);
        }
        const ScoredSample scored{sample.gold, sample.final_verdict};
        by_concept[sample.pair.concept_id] += confusion(std::span(&scored, 1));
    }
    return by_concept;
}

} // namespace detail_report

inline Comparison compare_records(const RunRecord& a, const RunRecord& b) {
    std::vector<std::string> order;
    auto counts_a = detail_report::counts_by_concept(a, order);
    auto counts_b = detail_report::counts_by_concept(b, order);
    Comparison cmp;
    cmp.overall.concept_id = "overall";
    ConfusionCounts total_a;
    ConfusionCounts total_b;
    for (const auto& concept_id : order) {
        ComparisonRow row;
        row.concept_id = concept_id;
        const auto ca = counts_a[concept_id];
        const auto cb = counts_b[concept_id];
        if (ca.total() > 0) row.a = metrics(ca);
        if (cb.total() > 0) row.b = metrics(cb);
        total_a += ca;
        total_b += cb;
        cmp.rows.push_back(row);
    }
    if (total_a.total() > 0) cmp.overall.a = metrics(total_a);
    if (total_b.total() > 0) cmp.overall.b = metrics(total_b);
    return cmp;
}

inline std::string render_comparison(const Comparison& cmp, ReportFormat format) {
    std::ostringstream out;
    auto cells = [&](const ComparisonRow& row, char sep) {
        out << format_metric(row.a.accuracy) << sep << format_metric(row.b.accuracy) << sep
            << format_metric(row.accuracy_delta()) << sep << format_metric(row.a.precision) << sep
            << format_metric(row.b.precision) << sep << format_metric(row.precision_delta()) << sep
            << format_metric(row.a.recall) << sep << format_metric(row.b.recall) << sep
            << format_metric(row.recall_delta()) << sep << format_metric(row.a.f1) << sep
            << format_metric(row.b.f1) << sep << format_metric(row.f1_delta());
    };
    if (format == ReportFormat::Csv) {
        out << "concept,accuracy_a,accuracy_b,accuracy_delta,precision_a,precision_b,"
               "precision_delta,recall_a,recall_b,recall_delta,f1_a,f1_b,f1_delta\n";
        for (const auto& row : cmp.rows) {
            out << row.concept_id << ',';
            cells(row, ',');
            out << '\n';
        }
        out << cmp.overall.concept_id << ',';
        cells(cmp.overall, ',');
        out << '\n';
        return out.str();
    }
    out << "| Concept | Acc A | Acc B | dAcc | P A | P B | dP | R A | R B | dR | F1 A | F1 B | dF1 |\n";
    out << "|---|---|---|---|---|---|---|---|---|---|---|---|---|\n";
    auto emit = [&](const ComparisonRow& row) {
        out << "| " << row.concept_id << " | ";
        cells(row, '|');
        out << " |\n";
    };
    for (const auto& row : cmp.rows) emit(row);
    emit(cmp.overall);
    return out.str();
}

} // namespace knowtag
