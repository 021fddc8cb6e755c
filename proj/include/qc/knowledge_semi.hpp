#pragma once

#include <cstddef>
#include <map>

#include "qc/matrix.hpp"

namespace qc {

// Query representation after attending over its knowledge records.
// attention_weights has one entry per knowledge row; empty when the query
// carries no knowledge, in which case values equals the raw query embedding.
struct FusedQuery {
    Vector values;
    Vector attention_weights;
};

// alpha = softmax of unscaled dot products q . k_j; q' = q + sum_j alpha_j k_j.
FusedQuery attention_fuse(const Vector& query_emb, const Matrix& knowledge_embs);

// Sparse leaf-row -> score map. Scores live in [tau, 1].
struct SemiTargets {
    std::map<std::size_t, double> entries;
};

// Cosine of the fused query against every label row, kept when >= tau.
// Zero-norm vectors score 0 (warning on stderr) rather than aborting.
// Callers treat the result as constants: no gradient flows back through it.
SemiTargets compute_semi_targets(const FusedQuery& fused, const Matrix& label_embs,
                                 double tau);

// Linear decay of the keep threshold across training epochs.
struct TauSchedule {
    double tau_start = 1.0;
    double tau_end = 0.8;
    int total_epochs = 1;
};

double tau_at(const TauSchedule& schedule, int epoch);

// y_j = min(click_j + semi_j, 1). click entries must be 0 or 1.
Vector fuse_targets(const Vector& click, const SemiTargets& semi);

}  // namespace qc
