#pragma once

#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "qc/data_model.hpp"
#include "qc/matrix.hpp"

namespace qc {

struct LabelCounts {
    long tp = 0;
    long fp = 0;
    long fn = 0;
};

// Confusion counts per leaf id plus the pooled totals.
struct ConfusionTotals {
    std::map<int, LabelCounts> per_label;
    LabelCounts global;
};

struct Prf {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct PerLabelRow {
    int id = 0;
    std::string name;
    long clicks = 0;
    LabelCounts counts;
    Prf prf;
};

struct MetricsReport {
    Prf micro;
    Prf macro;
    Prf head;   // pooled counts over the most-clicked 20% of leaves
    Prf tail;   // pooled counts over the least-clicked 20%
    std::vector<PerLabelRow> per_label;
};

// Labels scoring >= threshold; empty result falls back to the single argmax
// so every query carries at least one prediction.
std::set<std::size_t> binarize(const Vector& scores, double threshold);

void accumulate(const std::set<int>& pred_ids, const std::set<int>& gold_ids,
                ConfusionTotals& totals);

Prf prf_from(const LabelCounts& c);

// Macro averages run over every taxonomy leaf, clicked or not. Head and tail
// buckets are the top and bottom k = max(1, floor(0.2 |C|)) leaves by training
// click count, ties broken by id.
MetricsReport report(const ConfusionTotals& totals, const Taxonomy& taxonomy,
                     const std::map<int, long>& label_click_counts);

std::string report_to_json(const MetricsReport& r);
std::string per_label_tsv(const MetricsReport& r);

// Click counts per leaf from a training split, for head/tail bucketing.
std::map<int, long> count_label_clicks(const std::vector<ClickSample>& samples);

}  // namespace qc
