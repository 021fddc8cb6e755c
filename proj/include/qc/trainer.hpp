#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "qc/data_model.hpp"
#include "qc/evaluator.hpp"
#include "qc/knowledge_semi.hpp"
#include "qc/label_graph.hpp"
#include "qc/matrix.hpp"
#include "qc/text_encoder.hpp"

namespace qc {

// Flat key=value config. Keys are fixed; unknown keys are errors.
struct TrainConfig {
    double learning_rate = 1e-4;
    int batch_size = 64;
    int epochs = 20;
    int dim = 64;
    double tau_start = 1.0;
    double tau_end = 0.8;
    double alpha_threshold = 0.5;
    double beta_threshold = 0.5;
    std::uint64_t seed = 42;
    bool use_label_enhanced = true;
    bool use_knowledge = true;
    bool use_semi = true;
    bool use_structure = true;
    bool use_graph_coo = true;
    bool use_graph_sim = true;
    bool use_graph_hier = true;
    int label_refresh = 1;
    int max_query_len = 20;
    int max_label_len = 40;

    void validate() const;
    // Structure off forces every relation graph off.
    GraphToggles graph_toggles() const;
    TauSchedule tau_schedule() const;
};

TrainConfig load_train_config(const std::string& path);
void set_config_key(TrainConfig& config, const std::string& key, const std::string& value);
std::string config_to_string(const TrainConfig& config);

// All trainable tensors. label_table is the per-node embedding table used in
// place of encoded label text when use_label_enhanced is off; it is always
// allocated so checkpoints have one fixed layout.
struct ModelState {
    EncoderParams encoder;
    GcnParams gcn;
    Vector bias;         // per leaf
    Matrix label_table;  // |C'| x dim
    TrainConfig config;
    int epoch = 0;
};

ModelState init_model(const TrainConfig& config, std::size_t vocab_size,
                      const Taxonomy& taxonomy);

struct ModelGrads {
    EncoderGrads encoder;
    GcnGrads gcn;
    Vector bias;
    Matrix label_table;
};

ModelGrads zero_grads(const ModelState& model);

// Named view over every tensor, in the fixed checkpoint/optimizer order.
struct TensorRef {
    std::string name;
    double* data;
    std::size_t size;
};

std::vector<TensorRef> tensor_registry(ModelState& model);
std::vector<TensorRef> grad_registry(ModelGrads& grads);

struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long step = 0;
    std::vector<Vector> m;  // aligned with tensor_registry order
    std::vector<Vector> v;
};

AdamState init_adam(ModelState& model);

// One bias-corrected Adam step over every tensor. Throws on non-finite
// values, naming the tensor.
void adam_update(ModelState& model, ModelGrads& grads, AdamState& adam, double lr);

// Scores for one query against the leaf representations: sigmoid(q H_l^T + b).
Vector predict_scores(const Vector& query_emb, const Matrix& h_leaf, const Vector& bias);

// Mean over labels of -[y log p + (1-y) log(1-p)], p clipped to
// [1e-7, 1 - 1e-7] inside the logs only.
double bce_loss(const Vector& scores, const Vector& targets);

// Label-branch activations shared across a step (and across steps when
// label_refresh > 1): node features X, the GCN trace, and the leaf rows
// actually used by the interaction layer.
struct LabelState {
    Matrix x;       // |C'| x dim
    GcnTrace trace;
    Matrix h_leaf;  // |C| x dim
};

// X from the encoder (or the label table), then GCN + leaf extraction when
// structure is on, plain leaf slice otherwise. bundle may be null only when
// structure is off.
LabelState compute_label_state(const ModelState& model, const GraphBundle* bundle,
                               const Taxonomy& taxonomy, const Vocab& vocab);

// Mean-pooled embedding rows of each leaf's label sequence, |C| x d_emb in
// leaf_index order; the input the similarity graph is built from.
Matrix pooled_leaf_features(const ModelState& model, const Taxonomy& taxonomy,
                            const Vocab& vocab);

std::map<int, KnowledgeRecord> knowledge_by_id(const std::vector<KnowledgeRecord>& records);

// Per-sample training targets. Semi targets are plain values here; nothing
// downstream differentiates through them.
struct BatchTargets {
    std::vector<Vector> fused;       // per sample, |C|
    std::vector<SemiTargets> semi;   // kept for the audit dump
};

BatchTargets compute_batch_targets(const std::vector<const ClickSample*>& batch,
                                   const ModelState& model, const Matrix& leaf_label_embs,
                                   const Vocab& vocab, const Taxonomy& taxonomy,
                                   const std::map<int, KnowledgeRecord>& knowledge,
                                   double tau);

// Forward-only batch loss with a live label branch; the finite-difference
// oracle calls this with frozen targets.
double batch_loss(const std::vector<const ClickSample*>& batch,
                  const BatchTargets& targets, const ModelState& model,
                  const GraphBundle* bundle, const Taxonomy& taxonomy,
                  const Vocab& vocab);

// Forward + backward against fixed targets. With refresh_labels the label
// state is recomputed from current parameters and the label branch receives
// gradient; otherwise the cached label_state is treated as constant and only
// the query branch and bias train. Returns the batch loss.
double compute_gradients(const std::vector<const ClickSample*>& batch,
                         const BatchTargets& targets, const ModelState& model,
                         const GraphBundle* bundle, const Taxonomy& taxonomy,
                         const Vocab& vocab, LabelState& label_state,
                         bool refresh_labels, ModelGrads& grads);

// Pseudo-label activity of one step: fires on labels the sample already
// clicked are no-ops under the min() fusion, fires elsewhere add targets.
struct StepStats {
    long semi_new_fires = 0;
    long semi_clicked_fires = 0;
};

// Targets from current parameters, then gradients, then one Adam step.
double train_step(const std::vector<const ClickSample*>& batch, ModelState& model,
                  const GraphBundle* bundle, AdamState& adam, double tau,
                  const Taxonomy& taxonomy, const Vocab& vocab,
                  const std::map<int, KnowledgeRecord>& knowledge,
                  LabelState& label_state, bool refresh_labels,
                  StepStats* stats = nullptr);

MetricsReport evaluate_model(const ModelState& model, const GraphBundle* bundle,
                             const std::vector<ClickSample>& eval_samples,
                             const Taxonomy& taxonomy, const Vocab& vocab,
                             const std::map<int, long>& train_clicks,
                             double threshold = 0.5);

struct EpochLog {
    int epoch = 0;
    double tau = 0.0;
    double train_loss = 0.0;
    long semi_new_fires = 0;      // pseudo-labels added beyond the clicks
    long semi_clicked_fires = 0;  // pseudo-labels that matched a click
    MetricsReport val;
};

struct TrainResult {
    ModelState model;       // after the last epoch
    ModelState best_model;  // highest validation micro-F1
    int best_epoch = -1;
    std::vector<EpochLog> log;
};

// The epoch loop: seeded shuffles, the tau schedule, per-epoch validation.
// metrics_out receives one JSON line per epoch; progress receives
// human-readable lines. Either may be null.
TrainResult train(const TrainConfig& config, const std::vector<ClickSample>& train_samples,
                  const std::vector<ClickSample>& val_samples, const Taxonomy& taxonomy,
                  const std::vector<KnowledgeRecord>& knowledge, const Vocab& vocab,
                  const GraphBundle* bundle, std::ostream* metrics_out = nullptr,
                  std::ostream* progress = nullptr);

// Convenience wrapper: builds the vocabulary from queries, label sequences,
// and knowledge texts, initializes the model, builds the graph bundle from
// the training split with initial label embeddings, then trains.
struct FitResult {
    Vocab vocab;
    GraphBundle bundle;     // meaningful only when has_bundle
    bool has_bundle = false;
    TrainResult training;
};

FitResult fit(const TrainConfig& config, const std::vector<ClickSample>& train_samples,
              const std::vector<ClickSample>& val_samples, const Taxonomy& taxonomy,
              const std::vector<KnowledgeRecord>& knowledge, TokenMode mode,
              std::ostream* metrics_out = nullptr, std::ostream* progress = nullptr);

// Vocabulary sources for fit and the CLI: train queries, every label
// sequence, every knowledge text.
std::vector<std::string> vocab_texts(const std::vector<ClickSample>& train_samples,
                                     const Taxonomy& taxonomy,
                                     const std::vector<KnowledgeRecord>& knowledge);

// The seven ablation rows: the full model plus each module removal, derived
// from one base config. "w/o LE&KE" drops label encoding, knowledge fusion,
// and semi targets together.
std::vector<std::pair<std::string, TrainConfig>> ablation_variants(const TrainConfig& base);

// Single-file binary checkpoint: magic, version, config snapshot, vocab,
// taxonomy node ids, epoch, then every tensor in registry order as float64.
void save_checkpoint(const ModelState& model, const Vocab& vocab,
                     const Taxonomy& taxonomy, const std::string& path);

struct Checkpoint {
    ModelState model;
    Vocab vocab;
    std::vector<int> taxonomy_ids;  // sorted node ids at save time
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace qc
