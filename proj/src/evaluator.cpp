#include "qc/evaluator.hpp"

#include <algorithm>
#include <sstream>

#include <nlohmann/json.hpp>

#include "qc/errors.hpp"

namespace qc {

std::set<std::size_t> binarize(const Vector& scores, double threshold) {
    if (threshold <= 0.0 || threshold >= 1.0)
        throw ConfigError("decision threshold must lie in (0, 1)");
    if (scores.empty()) throw RuntimeFault("binarize: empty score vector");
    std::set<std::size_t> picked;
    for (std::size_t j = 0; j < scores.size(); ++j)
        if (scores[j] >= threshold) picked.insert(j);
    if (picked.empty()) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < scores.size(); ++j)
            if (scores[j] > scores[best]) best = j;
        picked.insert(best);
    }
    return picked;
}

void accumulate(const std::set<int>& pred_ids, const std::set<int>& gold_ids,
                ConfusionTotals& totals) {
    if (pred_ids.empty()) throw RuntimeFault("accumulate: empty prediction set");
    for (int p : pred_ids) {
        if (gold_ids.count(p)) {
            totals.per_label[p].tp += 1;
            totals.global.tp += 1;
        } else {
            totals.per_label[p].fp += 1;
            totals.global.fp += 1;
        }
    }
    for (int g : gold_ids)
        if (!pred_ids.count(g)) {
            totals.per_label[g].fn += 1;
            totals.global.fn += 1;
        }
}

Prf prf_from(const LabelCounts& c) {
    Prf out;
    out.precision = (c.tp + c.fp) > 0
                        ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp)
                        : 0.0;
    out.recall = (c.tp + c.fn) > 0
                     ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn)
                     : 0.0;
    out.f1 = (out.precision + out.recall) > 0.0
                 ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
                 : 0.0;
    return out;
}

MetricsReport report(const ConfusionTotals& totals, const Taxonomy& taxonomy,
                     const std::map<int, long>& label_click_counts) {
    MetricsReport r;
    r.micro = prf_from(totals.global);

    double sp = 0.0, sr = 0.0, sf = 0.0;
    for (int id : taxonomy.leaf_index) {
        PerLabelRow row;
        row.id = id;
        row.name = taxonomy.node(id).name;
        auto cit = label_click_counts.find(id);
        row.clicks = cit == label_click_counts.end() ? 0 : cit->second;
        auto tit = totals.per_label.find(id);
        if (tit != totals.per_label.end()) row.counts = tit->second;
        row.prf = prf_from(row.counts);
        sp += row.prf.precision;
        sr += row.prf.recall;
        sf += row.prf.f1;
        r.per_label.push_back(std::move(row));
    }
    double n = static_cast<double>(taxonomy.num_leaves());
    r.macro.precision = sp / n;
    r.macro.recall = sr / n;
    r.macro.f1 = sf / n;

    // Buckets by training popularity; sort ascending, id breaks ties.
    std::vector<int> order = taxonomy.leaf_index;
    auto clicks_of = [&](int id) {
        auto it = label_click_counts.find(id);
        return it == label_click_counts.end() ? 0L : it->second;
    };
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        long ca = clicks_of(a), cb = clicks_of(b);
        return ca != cb ? ca < cb : a < b;
    });
    std::size_t k = std::max<std::size_t>(
        1, static_cast<std::size_t>(0.2 * static_cast<double>(order.size())));
    LabelCounts head_c, tail_c;
    auto pool = [&](int id, LabelCounts& into) {
        auto it = totals.per_label.find(id);
        if (it == totals.per_label.end()) return;
        into.tp += it->second.tp;
        into.fp += it->second.fp;
        into.fn += it->second.fn;
    };
    for (std::size_t i = 0; i < k; ++i) pool(order[i], tail_c);
    for (std::size_t i = order.size() - k; i < order.size(); ++i) pool(order[i], head_c);
    r.head = prf_from(head_c);
    r.tail = prf_from(tail_c);
    return r;
}

std::string report_to_json(const MetricsReport& r) {
    nlohmann::json j;
    auto put = [&](const char* key, const Prf& p) {
        j[key] = {{"precision", p.precision}, {"recall", p.recall}, {"f1", p.f1}};
    };
    put("micro", r.micro);
    put("macro", r.macro);
    put("head", r.head);
    put("tail", r.tail);
    return j.dump();
}

std::string per_label_tsv(const MetricsReport& r) {
    std::ostringstream out;
    out << "id\tname\tclicks\ttp\tfp\tfn\tprecision\trecall\tf1\n";
    for (const PerLabelRow& row : r.per_label)
        out << row.id << '\t' << row.name << '\t' << row.clicks << '\t'
            << row.counts.tp << '\t' << row.counts.fp << '\t' << row.counts.fn << '\t'
            << row.prf.precision << '\t' << row.prf.recall << '\t' << row.prf.f1
            << '\n';
    return out.str();
}

std::map<int, long> count_label_clicks(const std::vector<ClickSample>& samples) {
    std::map<int, long> clicks;
    for (const ClickSample& s : samples)
        for (int id : s.clicked_leaf_ids) clicks[id] += 1;
    return clicks;
}

}  // namespace qc
