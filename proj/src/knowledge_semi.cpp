#include "qc/knowledge_semi.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "qc/errors.hpp"

namespace qc {

FusedQuery attention_fuse(const Vector& query_emb, const Matrix& knowledge_embs) {
    FusedQuery fused;
    fused.values = query_emb;
    if (knowledge_embs.rows == 0) return fused;
    if (knowledge_embs.cols != query_emb.size())
        throw RuntimeFault("attention_fuse: knowledge width " +
                           std::to_string(knowledge_embs.cols) +
                           " does not match query dim " +
                           std::to_string(query_emb.size()));

    std::size_t k = knowledge_embs.rows;
    Vector logits(k);
    for (std::size_t j = 0; j < k; ++j)
        logits[j] = dot(query_emb, knowledge_embs.row(j));
    double max_logit = *std::max_element(logits.begin(), logits.end());
    double denom = 0.0;
    fused.attention_weights.resize(k);
    for (std::size_t j = 0; j < k; ++j) {
        fused.attention_weights[j] = std::exp(logits[j] - max_logit);
        denom += fused.attention_weights[j];
    }
    for (std::size_t j = 0; j < k; ++j) {
        fused.attention_weights[j] /= denom;
        const double w = fused.attention_weights[j];
        auto row = knowledge_embs.row(j);
        for (std::size_t d = 0; d < fused.values.size(); ++d)
            fused.values[d] += w * row[d];
    }
    return fused;
}

SemiTargets compute_semi_targets(const FusedQuery& fused, const Matrix& label_embs,
                                 double tau) {
    if (label_embs.cols != fused.values.size())
        throw RuntimeFault("compute_semi_targets: label width does not match query dim");
    SemiTargets targets;
    double qn = norm(fused.values);
    if (qn == 0.0) {
        std::cerr << "warn: fused query has zero norm, semi scores forced to 0\n";
        return targets;
    }
    for (std::size_t j = 0; j < label_embs.rows; ++j) {
        double ln = norm(label_embs.row(j));
        if (ln == 0.0) {
            std::cerr << "warn: label row " << j
                      << " has zero norm, semi score forced to 0\n";
            continue;
        }
        double s = std::clamp(dot(fused.values, label_embs.row(j)) / (qn * ln), -1.0, 1.0);
        if (s >= tau) targets.entries[j] = s;
    }
    return targets;
}

double tau_at(const TauSchedule& schedule, int epoch) {
    if (schedule.total_epochs < 1)
        throw ConfigError("tau schedule needs at least one epoch");
    if (schedule.tau_end > schedule.tau_start || schedule.tau_start > 1.0 ||
        schedule.tau_end < 0.0)
        throw ConfigError("tau schedule must satisfy 0 <= tau_end <= tau_start <= 1");
    if (epoch < 0 || epoch >= schedule.total_epochs)
        throw ConfigError("epoch " + std::to_string(epoch) +
                          " outside schedule of " +
                          std::to_string(schedule.total_epochs) + " epochs");
    if (schedule.total_epochs == 1) return schedule.tau_end;
    double t = static_cast<double>(epoch) / static_cast<double>(schedule.total_epochs - 1);
    return schedule.tau_start + (schedule.tau_end - schedule.tau_start) * t;
}

Vector fuse_targets(const Vector& click, const SemiTargets& semi) {
    for (double c : click)
        if (c != 0.0 && c != 1.0)
            throw ValidationError("click vector entries must be 0 or 1");
    Vector y = click;
    for (const auto& [row, score] : semi.entries) {
        if (row >= y.size())
            throw RuntimeFault("semi target row " + std::to_string(row) +
                               " outside label space");
        y[row] = std::min(y[row] + score, 1.0);
    }
    return y;
}

}  // namespace qc
