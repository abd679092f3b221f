// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "knowtag/error.hpp"
#include "knowtag/parse.hpp"

#include <cstdio>
#include <span>
#include <string>

namespace knowtag {

struct ConfusionCounts {
    long tp = 0;
    long fp = 0;
    long tn = 0;
    long fn = 0;

    long total() const { return tp + fp + tn + fn; }

    ConfusionCounts& operator+=(const ConfusionCounts& other) {
        tp += other.tp;
        fp += other.fp;
        tn += other.tn;
        fn += other.fn;
        return *this;
    }

    bool operator==(const ConfusionCounts&) const = default;
};

/// Zero-denominator cases yield 0 with the matching degenerate flag set, so
/// reports never propagate NaN silently.
struct Metrics {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    bool precision_degenerate = false;
    bool recall_degenerate = false;
    bool f1_degenerate = false;

    bool operator==(const Metrics&) const = default;
};

/// Minimal view of one scored sample: gold label and final verdict.
struct ScoredSample {
    int gold = 0;
    Verdict verdict = Verdict::Unparseable;
};

/// Positive counts toward tp/fp by gold label; Negative and Unparseable both
/// count toward tn/fn (an unparseable reply withholds the tag).
inline ConfusionCounts confusion(std::span<const ScoredSample> results) {
    ConfusionCounts counts;
    for (const auto& r : results) {
        const bool predicted_positive = r.verdict == Verdict::Positive;
        if (predicted_positive) {
            (r.gold == 1 ? counts.tp : counts.fp) += 1;
        } else {
            (r.gold == 1 ? counts.fn : counts.tn) += 1;
        }
    }
    return counts;
}

inline Metrics metrics(const ConfusionCounts& counts) {
    if (counts.total() == 0) throw Error("metrics: no scored samples");
    Metrics m;
    m.accuracy = static_cast<double>(counts.tp + counts.tn) / static_cast<double>(counts.total());
    if (counts.tp + counts.fp == 0) {
        m.precision_degenerate = true;
    } else {
        m.precision = static_cast<double>(counts.tp) / static_cast<double>(counts.tp + counts.fp);
    }
    if (counts.tp + counts.fn == 0) {
        m.recall_degenerate = true;
    } else {
        m.recall = static_cast<double>(counts.tp) / static_cast<double>(counts.tp + counts.fn);
    }
    if (m.precision + m.recall > 0.0) {
        m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
    } else {
        m.f1_degenerate = true;
    }
    return m;
}

/// Four decimal places in the dataset-paper table style: ".9097", "1.0000".
inline std::string format_metric(double value) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", value);
    std::string out(buf);
    if (out.rfind("0.", 0) == 0) return out.substr(1);
    if (out.rfind("-0.", 0) == 0) return "-" + out.substr(2);
    return out;
}

} // namespace knowtag
