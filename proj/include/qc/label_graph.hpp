#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "qc/data_model.hpp"
#include "qc/matrix.hpp"

namespace qc {

// Raw counts behind the co-occurrence graph. pair_counts is keyed by ordered
// (min_id, max_id) and stores the symmetric count once.
struct CooccurrenceCounts {
    std::map<std::pair<int, int>, long> pair_counts;
    std::map<int, long> label_counts;

    long pair(int a, int b) const;
    long count(int id) const;
};

// Each unordered leaf pair in a sample's clicked set counts once per sample;
// each leaf counts once per sample containing it.
CooccurrenceCounts count_cooccurrence(const std::vector<ClickSample>& samples,
                                      const Taxonomy& taxonomy);

// a_ij = N(c_i,c_j)/N(c_i), kept iff >= alpha; diagonal zero; unseen labels
// give an all-zero row. |C| x |C| in leaf_index order.
Matrix build_cooccurrence(const CooccurrenceCounts& counts, const Taxonomy& taxonomy,
                          double alpha_threshold);

// Pairwise cosine of label embedding rows, kept iff >= beta; diagonal zero.
// Throws naming the row on a zero-norm embedding.
Matrix build_similarity(const Matrix& label_embeddings, double beta_threshold);

// Parent->child edges max(1/|Child(k)|, m_i / sum_j m_j) over each parent's
// children. leaf_clicks maps leaf id -> click count (missing = 0); internal
// nodes take the sum over descendant leaves. |C'| x |C'| in all_index order.
Matrix build_hierarchy(const Taxonomy& taxonomy, const std::map<int, long>& leaf_clicks);

// Click counts for every node: leaves from the map, internal nodes summed
// over descendant leaves.
std::map<int, long> propagate_clicks(const Taxonomy& taxonomy,
                                     const std::map<int, long>& leaf_clicks);

// Start from the hierarchy matrix, overwrite the leaf-leaf block with
// (coo + sim) / 2, then symmetrize by elementwise max with the transpose.
Matrix fuse_graphs(const Matrix& a_coo, const Matrix& a_sim, const Matrix& a_hier,
                   const Taxonomy& taxonomy);

// A-hat = D^{-1/2} (A + I) D^{-1/2}, D_ii = row sums of A + I.
Matrix normalize_adjacency(const Matrix& a);

struct GcnParams {
    Matrix w1;  // d x d_g
    Vector b1;  // d_g
    Matrix w2;  // d_g x d
    Vector b2;  // d
};

GcnParams init_gcn(std::size_t d, std::size_t d_g, std::mt19937_64& rng);

struct GcnGrads {
    Matrix w1;
    Vector b1;
    Matrix w2;
    Vector b2;
};

GcnGrads zero_gcn_grads(const GcnParams& params);

// Intermediates kept for the backward pass.
struct GcnTrace {
    Matrix propagated_in;   // A-hat * X
    Matrix hidden;          // relu(A-hat * X * W1 + b1)
    Matrix propagated_mid;  // A-hat * hidden
};

// H = A-hat * relu(A-hat * X * W1 + b1) * W2 + b2 (linear output layer).
Matrix gcn_forward(const Matrix& a_hat, const Matrix& x, const GcnParams& params,
                   GcnTrace* trace = nullptr);

// Exact gradients of gcn_forward; A-hat is a constant. Accumulates parameter
// gradients into `grads` and writes d(loss)/dX into `x_grad`.
void gcn_backward(const Matrix& a_hat, const Matrix& x, const GcnParams& params,
                  const GcnTrace& trace, const Matrix& upstream_grad, GcnGrads& grads,
                  Matrix& x_grad);

// The contiguous leaf block of a |C'| x d matrix, in leaf_index order.
Matrix extract_leaf(const Matrix& h, const Taxonomy& taxonomy);

// Which relation graphs participate in fusion. With one leaf-block graph
// dropped the remaining one enters unweighted; with both dropped the leaf
// block stays as the hierarchy left it.
struct GraphToggles {
    bool use_coo = true;
    bool use_sim = true;
    bool use_hier = true;
};

// All graph stages for one corpus: raw relation matrices plus the fused and
// normalized results under the given toggles.
struct GraphBundle {
    std::uint32_t version = 1;
    double alpha = 0.5;
    double beta = 0.5;
    Matrix coo;    // |C| x |C|
    Matrix sim;    // |C| x |C|
    Matrix hier;   // |C'| x |C'|
    Matrix fused;  // |C'| x |C'|
    Matrix norm;   // |C'| x |C'|
};

GraphBundle build_graph_bundle(const std::vector<ClickSample>& samples,
                               const Taxonomy& taxonomy, const Matrix& leaf_embeddings,
                               double alpha_threshold, double beta_threshold,
                               const GraphToggles& toggles);

// Recomputes fused + norm from the bundle's raw matrices under new toggles
// (used by the ablation runner; raw graphs are unchanged).
void refuse_bundle(GraphBundle& bundle, const Taxonomy& taxonomy,
                   const GraphToggles& toggles);

void save_graph_bundle(const GraphBundle& bundle, const std::string& path);
GraphBundle load_graph_bundle(const std::string& path);

}  // namespace qc
