#include "qc/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "qc/binio.hpp"

namespace qc {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw ConfigError(key + ": expected true/false, got '" + value + "'");
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected a number, got '" + value + "'");
    }
}

long parse_long(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        long v = std::stol(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected an integer, got '" + value + "'");
    }
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

void TrainConfig::validate() const {
    if (learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (epochs < 0) throw ConfigError("epochs must be nonnegative");
    if (dim < 1) throw ConfigError("dim must be at least 1");
    if (tau_end > tau_start || tau_start > 1.0 || tau_end < 0.0)
        throw ConfigError("tau schedule must satisfy 0 <= tau_end <= tau_start <= 1");
    if (alpha_threshold < 0.0 || alpha_threshold > 1.0)
        throw ConfigError("alpha_threshold must lie in [0, 1]");
    if (beta_threshold < 0.0 || beta_threshold > 1.0)
        throw ConfigError("beta_threshold must lie in [0, 1]");
    if (label_refresh < 1) throw ConfigError("label_refresh must be at least 1");
    if (max_query_len < 1) throw ConfigError("max_query_len must be at least 1");
    if (max_label_len < 1) throw ConfigError("max_label_len must be at least 1");
}

GraphToggles TrainConfig::graph_toggles() const {
    GraphToggles t;
    t.use_coo = use_structure && use_graph_coo;
    t.use_sim = use_structure && use_graph_sim;
    t.use_hier = use_structure && use_graph_hier;
    return t;
}

TauSchedule TrainConfig::tau_schedule() const {
    return TauSchedule{tau_start, tau_end, epochs};
}

void set_config_key(TrainConfig& c, const std::string& key, const std::string& value) {
    if (key == "learning_rate") c.learning_rate = parse_double(key, value);
    else if (key == "batch_size") c.batch_size = static_cast<int>(parse_long(key, value));
    else if (key == "epochs") c.epochs = static_cast<int>(parse_long(key, value));
    else if (key == "dim") c.dim = static_cast<int>(parse_long(key, value));
    else if (key == "tau_start") c.tau_start = parse_double(key, value);
    else if (key == "tau_end") c.tau_end = parse_double(key, value);
    else if (key == "alpha_threshold") c.alpha_threshold = parse_double(key, value);
    else if (key == "beta_threshold") c.beta_threshold = parse_double(key, value);
    else if (key == "seed") c.seed = static_cast<std::uint64_t>(parse_long(key, value));
    else if (key == "use_label_enhanced") c.use_label_enhanced = parse_bool(key, value);
    else if (key == "use_knowledge") c.use_knowledge = parse_bool(key, value);
    else if (key == "use_semi") c.use_semi = parse_bool(key, value);
    else if (key == "use_structure") c.use_structure = parse_bool(key, value);
    else if (key == "use_graph_coo") c.use_graph_coo = parse_bool(key, value);
    else if (key == "use_graph_sim") c.use_graph_sim = parse_bool(key, value);
    else if (key == "use_graph_hier") c.use_graph_hier = parse_bool(key, value);
    else if (key == "label_refresh") c.label_refresh = static_cast<int>(parse_long(key, value));
    else if (key == "max_query_len") c.max_query_len = static_cast<int>(parse_long(key, value));
    else if (key == "max_label_len") c.max_label_len = static_cast<int>(parse_long(key, value));
    else throw ConfigError("unknown config key '" + key + "'");
}

TrainConfig load_train_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    TrainConfig c;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        std::size_t eq = stripped.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(line_no) +
                              ": expected key = value");
        std::string key = trim(stripped.substr(0, eq));
        std::string value = trim(stripped.substr(eq + 1));
        try {
            set_config_key(c, key, value);
        } catch (const ConfigError& e) {
            throw ConfigError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    c.validate();
    return c;
}

std::string config_to_string(const TrainConfig& c) {
    std::ostringstream out;
    out << "learning_rate = " << c.learning_rate << "\n";
    out << "batch_size = " << c.batch_size << "\n";
    out << "epochs = " << c.epochs << "\n";
    out << "dim = " << c.dim << "\n";
    out << "tau_start = " << c.tau_start << "\n";
    out << "tau_end = " << c.tau_end << "\n";
    out << "alpha_threshold = " << c.alpha_threshold << "\n";
    out << "beta_threshold = " << c.beta_threshold << "\n";
    out << "seed = " << c.seed << "\n";
    out << "use_label_enhanced = " << (c.use_label_enhanced ? "true" : "false") << "\n";
    out << "use_knowledge = " << (c.use_knowledge ? "true" : "false") << "\n";
    out << "use_semi = " << (c.use_semi ? "true" : "false") << "\n";
    out << "use_structure = " << (c.use_structure ? "true" : "false") << "\n";
    out << "use_graph_coo = " << (c.use_graph_coo ? "true" : "false") << "\n";
    out << "use_graph_sim = " << (c.use_graph_sim ? "true" : "false") << "\n";
    out << "use_graph_hier = " << (c.use_graph_hier ? "true" : "false") << "\n";
    out << "label_refresh = " << c.label_refresh << "\n";
    out << "max_query_len = " << c.max_query_len << "\n";
    out << "max_label_len = " << c.max_label_len << "\n";
    return out.str();
}

ModelState init_model(const TrainConfig& config, std::size_t vocab_size,
                      const Taxonomy& taxonomy) {
    config.validate();
    std::size_t d = static_cast<std::size_t>(config.dim);
    std::mt19937_64 rng(config.seed);
    ModelState m;
    m.encoder = init_encoder(vocab_size, d, d, d, rng);
    m.gcn = init_gcn(d, d, rng);
    m.bias = Vector(taxonomy.num_leaves(), 0.0);
    m.label_table = Matrix(taxonomy.num_all(), d);
    std::uniform_real_distribution<double> dist(-0.05, 0.05);
    for (double& v : m.label_table.data) v = dist(rng);
    m.config = config;
    m.epoch = 0;
    return m;
}

ModelGrads zero_grads(const ModelState& model) {
    ModelGrads g;
    g.encoder = zero_encoder_grads(model.encoder);
    g.gcn = zero_gcn_grads(model.gcn);
    g.bias = Vector(model.bias.size(), 0.0);
    g.label_table = Matrix(model.label_table.rows, model.label_table.cols);
    return g;
}

std::vector<TensorRef> tensor_registry(ModelState& m) {
    return {
        {"encoder.embedding", m.encoder.embedding.data.data(), m.encoder.embedding.data.size()},
        {"encoder.w1", m.encoder.w1.data.data(), m.encoder.w1.data.size()},
        {"encoder.b1", m.encoder.b1.data(), m.encoder.b1.size()},
        {"encoder.w2", m.encoder.w2.data.data(), m.encoder.w2.data.size()},
        {"encoder.b2", m.encoder.b2.data(), m.encoder.b2.size()},
        {"gcn.w1", m.gcn.w1.data.data(), m.gcn.w1.data.size()},
        {"gcn.b1", m.gcn.b1.data(), m.gcn.b1.size()},
        {"gcn.w2", m.gcn.w2.data.data(), m.gcn.w2.data.size()},
        {"gcn.b2", m.gcn.b2.data(), m.gcn.b2.size()},
        {"bias", m.bias.data(), m.bias.size()},
        {"label_table", m.label_table.data.data(), m.label_table.data.size()},
    };
}

std::vector<TensorRef> grad_registry(ModelGrads& g) {
    return {
        {"encoder.embedding", g.encoder.embedding.data.data(), g.encoder.embedding.data.size()},
        {"encoder.w1", g.encoder.w1.data.data(), g.encoder.w1.data.size()},
        {"encoder.b1", g.encoder.b1.data(), g.encoder.b1.size()},
        {"encoder.w2", g.encoder.w2.data.data(), g.encoder.w2.data.size()},
        {"encoder.b2", g.encoder.b2.data(), g.encoder.b2.size()},
        {"gcn.w1", g.gcn.w1.data.data(), g.gcn.w1.data.size()},
        {"gcn.b1", g.gcn.b1.data(), g.gcn.b1.size()},
        {"gcn.w2", g.gcn.w2.data.data(), g.gcn.w2.data.size()},
        {"gcn.b2", g.gcn.b2.data(), g.gcn.b2.size()},
        {"bias", g.bias.data(), g.bias.size()},
        {"label_table", g.label_table.data.data(), g.label_table.data.size()},
    };
}

AdamState init_adam(ModelState& model) {
    AdamState a;
    for (const TensorRef& t : tensor_registry(model)) {
        a.m.emplace_back(t.size, 0.0);
        a.v.emplace_back(t.size, 0.0);
    }
    return a;
}

void adam_update(ModelState& model, ModelGrads& grads, AdamState& adam, double lr) {
    std::vector<TensorRef> params = tensor_registry(model);
    std::vector<TensorRef> gs = grad_registry(grads);
    if (adam.m.size() != params.size())
        throw RuntimeFault("adam state does not match the parameter registry");
    for (std::size_t k = 0; k < params.size(); ++k)
        if (params[k].size != gs[k].size || adam.m[k].size() != params[k].size)
            throw RuntimeFault("shape mismatch for tensor " + params[k].name);

    adam.step += 1;
    double bc1 = 1.0 - std::pow(adam.beta1, static_cast<double>(adam.step));
    double bc2 = 1.0 - std::pow(adam.beta2, static_cast<double>(adam.step));
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (!all_finite({gs[k].data, gs[k].size}))
            throw RuntimeFault("non-finite gradient in tensor " + params[k].name);
        double* p = params[k].data;
        const double* g = gs[k].data;
        Vector& m = adam.m[k];
        Vector& v = adam.v[k];
        for (std::size_t i = 0; i < params[k].size; ++i) {
            m[i] = adam.beta1 * m[i] + (1.0 - adam.beta1) * g[i];
            v[i] = adam.beta2 * v[i] + (1.0 - adam.beta2) * g[i] * g[i];
            double mhat = m[i] / bc1;
            double vhat = v[i] / bc2;
            p[i] -= lr * mhat / (std::sqrt(vhat) + adam.eps);
        }
        if (!all_finite({params[k].data, params[k].size}))
            throw RuntimeFault("non-finite values in tensor " + params[k].name +
                               " after update");
    }
}

Vector predict_scores(const Vector& query_emb, const Matrix& h_leaf, const Vector& bias) {
    if (h_leaf.cols != query_emb.size() || h_leaf.rows != bias.size())
        throw RuntimeFault("predict_scores: shape mismatch");
    Vector scores(h_leaf.rows);
    for (std::size_t j = 0; j < h_leaf.rows; ++j)
        scores[j] = sigmoid(dot(query_emb, h_leaf.row(j)) + bias[j]);
    return scores;
}

double bce_loss(const Vector& scores, const Vector& targets) {
    if (scores.size() != targets.size())
        throw RuntimeFault("bce_loss: score/target length mismatch");
    if (scores.empty()) throw RuntimeFault("bce_loss: empty vectors");
    double total = 0.0;
    for (std::size_t j = 0; j < scores.size(); ++j) {
        double y = targets[j];
        if (y < 0.0 || y > 1.0)
            throw ValidationError("bce_loss: target outside [0, 1]");
        double p = std::clamp(scores[j], 1e-7, 1.0 - 1e-7);
        total += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
    }
    return total / static_cast<double>(scores.size());
}

namespace {

// X: one row per taxonomy node in all_index order, from the shared encoder
// or from the label table.
Matrix label_features(const ModelState& model, const Taxonomy& taxonomy,
                      const Vocab& vocab) {
    if (!model.config.use_label_enhanced) return model.label_table;
    std::size_t d = model.encoder.dim();
    Matrix x(taxonomy.num_all(), d);
    for (std::size_t r = 0; r < taxonomy.num_all(); ++r) {
        const LabelNode& node = taxonomy.node(taxonomy.all_index[r]);
        std::vector<int> ids =
            tokenize(build_label_sequence(node), vocab,
                     static_cast<std::size_t>(model.config.max_label_len));
        Vector e = encode(ids, model.encoder);
        std::copy(e.begin(), e.end(), x.row(r).begin());
    }
    return x;
}

Vector encode_query(const ModelState& model, const Vocab& vocab, const std::string& text) {
    return encode(tokenize(text, vocab, static_cast<std::size_t>(model.config.max_query_len)),
                  model.encoder);
}

}  // namespace

Matrix pooled_leaf_features(const ModelState& model, const Taxonomy& taxonomy,
                            const Vocab& vocab) {
    std::size_t d = model.encoder.embedding.cols;
    Matrix x(taxonomy.num_leaves(), d);
    for (std::size_t r = 0; r < taxonomy.leaf_index.size(); ++r) {
        const LabelNode& node = taxonomy.node(taxonomy.leaf_index[r]);
        std::vector<int> ids =
            tokenize(build_label_sequence(node), vocab,
                     static_cast<std::size_t>(model.config.max_label_len));
        Vector e = mean_pool(ids, model.encoder);
        std::copy(e.begin(), e.end(), x.row(r).begin());
    }
    return x;
}

LabelState compute_label_state(const ModelState& model, const GraphBundle* bundle,
                               const Taxonomy& taxonomy, const Vocab& vocab) {
    LabelState s;
    s.x = label_features(model, taxonomy, vocab);
    if (model.config.use_structure) {
        if (!bundle)
            throw RuntimeFault("structure is enabled but no graph bundle was given");
        Matrix h = gcn_forward(bundle->norm, s.x, model.gcn, &s.trace);
        s.h_leaf = extract_leaf(h, taxonomy);
    } else {
        s.h_leaf = extract_leaf(s.x, taxonomy);
    }
    return s;
}

std::map<int, KnowledgeRecord> knowledge_by_id(const std::vector<KnowledgeRecord>& records) {
    std::map<int, KnowledgeRecord> by_id;
    for (const KnowledgeRecord& r : records) {
        if (!by_id.emplace(r.id, r).second)
            throw ValidationError("duplicate knowledge id " + std::to_string(r.id));
    }
    return by_id;
}

BatchTargets compute_batch_targets(const std::vector<const ClickSample*>& batch,
                                   const ModelState& model, const Matrix& leaf_label_embs,
                                   const Vocab& vocab, const Taxonomy& taxonomy,
                                   const std::map<int, KnowledgeRecord>& knowledge,
                                   double tau) {
    BatchTargets out;
    out.fused.reserve(batch.size());
    out.semi.resize(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const ClickSample& sample = *batch[i];
        Vector click(taxonomy.num_leaves(), 0.0);
        for (int id : sample.clicked_leaf_ids) click[taxonomy.leaf_row.at(id)] = 1.0;

        if (model.config.use_semi) {
            Vector q = encode_query(model, vocab, sample.query_text);
            FusedQuery fused;
            if (model.config.use_knowledge && !sample.knowledge_ids.empty()) {
                Matrix k(sample.knowledge_ids.size(), model.encoder.dim());
                for (std::size_t r = 0; r < sample.knowledge_ids.size(); ++r) {
                    auto it = knowledge.find(sample.knowledge_ids[r]);
                    if (it == knowledge.end())
                        throw ValidationError("knowledge id " +
                                              std::to_string(sample.knowledge_ids[r]) +
                                              " not found");
                    Vector e = encode_query(model, vocab, it->second.text);
                    std::copy(e.begin(), e.end(), k.row(r).begin());
                }
                fused = attention_fuse(q, k);
            } else {
                fused.values = std::move(q);
            }
            out.semi[i] = compute_semi_targets(fused, leaf_label_embs, tau);
        }
        out.fused.push_back(fuse_targets(click, out.semi[i]));
    }
    return out;
}

double batch_loss(const std::vector<const ClickSample*>& batch,
                  const BatchTargets& targets, const ModelState& model,
                  const GraphBundle* bundle, const Taxonomy& taxonomy,
                  const Vocab& vocab) {
    if (batch.empty()) throw RuntimeFault("batch_loss: empty batch");
    LabelState ls = compute_label_state(model, bundle, taxonomy, vocab);
    double total = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        Vector q = encode_query(model, vocab, batch[i]->query_text);
        total += bce_loss(predict_scores(q, ls.h_leaf, model.bias), targets.fused[i]);
    }
    return total / static_cast<double>(batch.size());
}

double compute_gradients(const std::vector<const ClickSample*>& batch,
                         const BatchTargets& targets, const ModelState& model,
                         const GraphBundle* bundle, const Taxonomy& taxonomy,
                         const Vocab& vocab, LabelState& label_state,
                         bool refresh_labels, ModelGrads& grads) {
    if (batch.empty()) throw RuntimeFault("compute_gradients: empty batch");
    if (targets.fused.size() != batch.size())
        throw RuntimeFault("compute_gradients: target count does not match batch");
    if (refresh_labels) label_state = compute_label_state(model, bundle, taxonomy, vocab);

    std::size_t nl = taxonomy.num_leaves();
    std::size_t d = model.encoder.dim();
    double inv = 1.0 / (static_cast<double>(batch.size()) * static_cast<double>(nl));

    Matrix d_h_leaf(nl, d);
    double total = 0.0;
    Vector d_q(d);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        std::vector<int> ids =
            tokenize(batch[i]->query_text, vocab,
                     static_cast<std::size_t>(model.config.max_query_len));
        Vector q = encode(ids, model.encoder);
        Vector p = predict_scores(q, label_state.h_leaf, model.bias);
        total += bce_loss(p, targets.fused[i]);

        std::fill(d_q.begin(), d_q.end(), 0.0);
        for (std::size_t j = 0; j < nl; ++j) {
            // d(loss)/d(logit) with the unclipped sigmoid output.
            double g = (p[j] - targets.fused[i][j]) * inv;
            if (g == 0.0) continue;
            grads.bias[j] += g;
            add_scaled(d_q, label_state.h_leaf.row(j), g);
            add_scaled(d_h_leaf.row(j), q, g);
        }
        encode_backward(ids, model.encoder, d_q, grads.encoder);
    }

    if (refresh_labels) {
        std::size_t off = taxonomy.leaf_offset();
        Matrix d_x;
        if (model.config.use_structure) {
            Matrix d_h(taxonomy.num_all(), d);
            for (std::size_t j = 0; j < nl; ++j)
                std::copy(d_h_leaf.row(j).begin(), d_h_leaf.row(j).end(),
                          d_h.row(off + j).begin());
            gcn_backward(bundle->norm, label_state.x, model.gcn, label_state.trace, d_h,
                         grads.gcn, d_x);
        } else {
            d_x = Matrix(taxonomy.num_all(), d);
            for (std::size_t j = 0; j < nl; ++j)
                std::copy(d_h_leaf.row(j).begin(), d_h_leaf.row(j).end(),
                          d_x.row(off + j).begin());
        }
        if (model.config.use_label_enhanced) {
            Vector up(d);
            for (std::size_t r = 0; r < taxonomy.num_all(); ++r) {
                const LabelNode& node = taxonomy.node(taxonomy.all_index[r]);
                std::copy(d_x.row(r).begin(), d_x.row(r).end(), up.begin());
                encode_backward(
                    tokenize(build_label_sequence(node), vocab,
                             static_cast<std::size_t>(model.config.max_label_len)),
                    model.encoder, up, grads.encoder);
            }
        } else {
            for (std::size_t i = 0; i < d_x.data.size(); ++i)
                grads.label_table.data[i] += d_x.data[i];
        }
    }
    return total / static_cast<double>(batch.size());
}

double train_step(const std::vector<const ClickSample*>& batch, ModelState& model,
                  const GraphBundle* bundle, AdamState& adam, double tau,
                  const Taxonomy& taxonomy, const Vocab& vocab,
                  const std::map<int, KnowledgeRecord>& knowledge,
                  LabelState& label_state, bool refresh_labels, StepStats* stats) {
    if (refresh_labels) label_state = compute_label_state(model, bundle, taxonomy, vocab);
    Matrix leaf_embs = extract_leaf(label_state.x, taxonomy);
    BatchTargets targets =
        compute_batch_targets(batch, model, leaf_embs, vocab, taxonomy, knowledge, tau);
    if (stats) {
        for (std::size_t i = 0; i < batch.size(); ++i) {
            for (const auto& [row, score] : targets.semi[i].entries) {
                int id = taxonomy.leaf_index[row];
                bool clicked = std::binary_search(batch[i]->clicked_leaf_ids.begin(),
                                                  batch[i]->clicked_leaf_ids.end(), id);
                (clicked ? stats->semi_clicked_fires : stats->semi_new_fires) += 1;
            }
        }
    }
    ModelGrads grads = zero_grads(model);
    double loss = compute_gradients(batch, targets, model, bundle, taxonomy, vocab,
                                    label_state, refresh_labels, grads);
    if (!std::isfinite(loss)) throw RuntimeFault("non-finite batch loss");
    adam_update(model, grads, adam, model.config.learning_rate);
    return loss;
}

MetricsReport evaluate_model(const ModelState& model, const GraphBundle* bundle,
                             const std::vector<ClickSample>& eval_samples,
                             const Taxonomy& taxonomy, const Vocab& vocab,
                             const std::map<int, long>& train_clicks, double threshold) {
    LabelState ls = compute_label_state(model, bundle, taxonomy, vocab);
    ConfusionTotals totals;
    for (const ClickSample& sample : eval_samples) {
        Vector q = encode_query(model, vocab, sample.query_text);
        Vector scores = predict_scores(q, ls.h_leaf, model.bias);
        std::set<int> preds;
        for (std::size_t row : binarize(scores, threshold))
            preds.insert(taxonomy.leaf_index[row]);
        std::set<int> golds(sample.clicked_leaf_ids.begin(), sample.clicked_leaf_ids.end());
        accumulate(preds, golds, totals);
    }
    return report(totals, taxonomy, train_clicks);
}

TrainResult train(const TrainConfig& config, const std::vector<ClickSample>& train_samples,
                  const std::vector<ClickSample>& val_samples, const Taxonomy& taxonomy,
                  const std::vector<KnowledgeRecord>& knowledge, const Vocab& vocab,
                  const GraphBundle* bundle, std::ostream* metrics_out,
                  std::ostream* progress) {
    config.validate();
    if (train_samples.empty()) throw ValidationError("training split is empty");

    TrainResult result;
    result.model = init_model(config, vocab.size(), taxonomy);
    result.best_model = result.model;
    if (config.epochs == 0) return result;

    AdamState adam = init_adam(result.model);
    TauSchedule schedule = config.tau_schedule();
    std::map<int, KnowledgeRecord> kmap = knowledge_by_id(knowledge);
    std::map<int, long> train_clicks = count_label_clicks(train_samples);
    std::mt19937_64 shuffle_rng(config.seed);

    // Start each leaf's interaction bias at its smoothed empirical log-odds.
    // With zero biases every label predicts 0.5, and the sum over labels of
    // p_j * h_j that enters each query-token gradient dwarfs the per-sample
    // gold term, so all embeddings drift along one common direction and the
    // cosine-based pseudo-label scores fire on everything early. Laplace
    // smoothing keeps clickless leaves near the uninformed prior.
    {
        double n = static_cast<double>(train_samples.size());
        double a = n / (2.0 * static_cast<double>(taxonomy.num_leaves()));
        for (std::size_t row = 0; row < taxonomy.leaf_index.size(); ++row) {
            auto it = train_clicks.find(taxonomy.leaf_index[row]);
            double c = it == train_clicks.end() ? 0.0 : static_cast<double>(it->second);
            double p = std::min(0.5, (c + a) / (n + 2.0 * a));
            result.model.bias[row] = std::log(p / (1.0 - p));
        }
        result.best_model = result.model;
    }

    LabelState label_state;
    std::vector<std::size_t> order(train_samples.size());
    std::iota(order.begin(), order.end(), 0);

    long step = 0;
    double best_f1 = -1.0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        double tau = tau_at(schedule, epoch);
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        double loss_sum = 0.0;
        std::size_t seen = 0;
        StepStats stats;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(config.batch_size)) {
            std::size_t end = std::min(order.size(),
                                       start + static_cast<std::size_t>(config.batch_size));
            std::vector<const ClickSample*> batch;
            batch.reserve(end - start);
            for (std::size_t i = start; i < end; ++i)
                batch.push_back(&train_samples[order[i]]);
            bool refresh = (step % config.label_refresh) == 0;
            double loss = train_step(batch, result.model, bundle, adam, tau, taxonomy,
                                     vocab, kmap, label_state, refresh, &stats);
            loss_sum += loss * static_cast<double>(batch.size());
            seen += batch.size();
            ++step;
        }
        result.model.epoch = epoch + 1;

        EpochLog entry;
        entry.epoch = epoch;
        entry.tau = tau;
        entry.train_loss = loss_sum / static_cast<double>(seen);
        entry.semi_new_fires = stats.semi_new_fires;
        entry.semi_clicked_fires = stats.semi_clicked_fires;
        if (!val_samples.empty())
            entry.val = evaluate_model(result.model, bundle, val_samples, taxonomy, vocab,
                                       train_clicks);
        if (entry.val.micro.f1 > best_f1) {
            best_f1 = entry.val.micro.f1;
            result.best_model = result.model;
            result.best_epoch = epoch;
        }
        if (metrics_out) {
            nlohmann::json j;
            j["epoch"] = entry.epoch;
            j["tau"] = entry.tau;
            j["train_loss"] = entry.train_loss;
            j["semi_new_fires"] = entry.semi_new_fires;
            j["semi_clicked_fires"] = entry.semi_clicked_fires;
            j["val_micro_precision"] = entry.val.micro.precision;
            j["val_micro_recall"] = entry.val.micro.recall;
            j["val_micro_f1"] = entry.val.micro.f1;
            j["val_macro_precision"] = entry.val.macro.precision;
            j["val_macro_recall"] = entry.val.macro.recall;
            j["val_macro_f1"] = entry.val.macro.f1;
            j["val_head_f1"] = entry.val.head.f1;
            j["val_tail_f1"] = entry.val.tail.f1;
            j["val_tail_recall"] = entry.val.tail.recall;
            (*metrics_out) << j.dump() << "\n";
        }
        if (progress) {
            (*progress) << "epoch " << (epoch + 1) << "/" << config.epochs
                        << " tau=" << tau << " loss=" << entry.train_loss
                        << " val_micro_f1=" << entry.val.micro.f1 << "\n";
        }
        result.log.push_back(std::move(entry));
    }
    return result;
}

std::vector<std::string> vocab_texts(const std::vector<ClickSample>& train_samples,
                                     const Taxonomy& taxonomy,
                                     const std::vector<KnowledgeRecord>& knowledge) {
    std::vector<std::string> texts;
    texts.reserve(train_samples.size() + taxonomy.nodes.size() + knowledge.size());
    for (const ClickSample& s : train_samples) texts.push_back(s.query_text);
    for (const LabelNode& n : taxonomy.nodes) texts.push_back(build_label_sequence(n));
    for (const KnowledgeRecord& r : knowledge) texts.push_back(r.text);
    return texts;
}

FitResult fit(const TrainConfig& config, const std::vector<ClickSample>& train_samples,
              const std::vector<ClickSample>& val_samples, const Taxonomy& taxonomy,
              const std::vector<KnowledgeRecord>& knowledge, TokenMode mode,
              std::ostream* metrics_out, std::ostream* progress) {
    config.validate();
    FitResult fr;
    fr.vocab = build_vocab(vocab_texts(train_samples, taxonomy, knowledge), mode);
    if (config.use_structure) {
        // Relation graphs are built once and stay fixed through training.
        // The similarity graph compares mean-pooled embedding rows of the
        // label sequences: zero-mean at initialization, so the cosine
        // reflects token overlap between label texts rather than the shared
        // output bias every untrained encoder output carries.
        ModelState flat = init_model(config, fr.vocab.size(), taxonomy);
        Matrix leaf_embs = pooled_leaf_features(flat, taxonomy, fr.vocab);
        fr.bundle = build_graph_bundle(train_samples, taxonomy, leaf_embs,
                                       config.alpha_threshold, config.beta_threshold,
                                       config.graph_toggles());
        fr.has_bundle = true;
    }
    fr.training = train(config, train_samples, val_samples, taxonomy, knowledge, fr.vocab,
                        fr.has_bundle ? &fr.bundle : nullptr, metrics_out, progress);
    return fr;
}

std::vector<std::pair<std::string, TrainConfig>> ablation_variants(const TrainConfig& base) {
    std::vector<std::pair<std::string, TrainConfig>> variants;
    variants.emplace_back("full", base);
    {
        TrainConfig c = base;
        c.use_graph_sim = false;
        variants.emplace_back("w/o SE-S", c);
    }
    {
        TrainConfig c = base;
        c.use_graph_coo = false;
        variants.emplace_back("w/o SE-C", c);
    }
    {
        TrainConfig c = base;
        c.use_graph_hier = false;
        variants.emplace_back("w/o SE-H", c);
    }
    {
        TrainConfig c = base;
        c.use_structure = false;
        variants.emplace_back("w/o SE", c);
    }
    {
        TrainConfig c = base;
        c.use_knowledge = false;
        variants.emplace_back("w/o KE", c);
    }
    {
        TrainConfig c = base;
        c.use_label_enhanced = false;
        c.use_knowledge = false;
        c.use_semi = false;
        variants.emplace_back("w/o LE&KE", c);
    }
    return variants;
}

namespace {

constexpr char kCheckpointMagic[8] = {'Q', 'C', 'K', 'P', 'T', '\0', '\0', '\0'};

void write_vocab(std::ostream& out, const Vocab& vocab) {
    binio::write_u64(out, vocab.mode == TokenMode::Word ? 0 : 1);
    binio::write_u64(out, vocab.size());
    std::vector<std::pair<int, std::string>> by_id;
    for (const auto& [token, id] : vocab.token_to_id) by_id.emplace_back(id, token);
    std::sort(by_id.begin(), by_id.end());
    for (const auto& [id, token] : by_id) {
        binio::write_i64(out, id);
        binio::write_string(out, token);
    }
}

Vocab read_vocab(std::istream& in) {
    Vocab vocab;
    vocab.mode = binio::read_u64(in) == 0 ? TokenMode::Word : TokenMode::Char;
    std::uint64_t count = binio::read_u64(in);
    for (std::uint64_t i = 0; i < count; ++i) {
        int id = static_cast<int>(binio::read_i64(in));
        std::string token = binio::read_string(in);
        vocab.token_to_id[token] = id;
    }
    return vocab;
}

void write_tensor(std::ostream& out, const std::string& name, const double* data,
                  std::uint64_t rows, std::uint64_t cols) {
    binio::write_string(out, name);
    binio::write_u64(out, rows);
    binio::write_u64(out, cols);
    binio::write_f64_array(out, data, rows * cols);
}

void read_tensor(std::istream& in, const std::string& expect_name, double* data,
                 std::uint64_t rows, std::uint64_t cols, const std::string& path) {
    std::string name = binio::read_string(in);
    if (name != expect_name)
        throw ParseError(path + ": expected tensor " + expect_name + ", found " + name);
    std::uint64_t r = binio::read_u64(in);
    std::uint64_t c = binio::read_u64(in);
    if (r != rows || c != cols)
        throw ParseError(path + ": tensor " + name + " has shape " + std::to_string(r) +
                         "x" + std::to_string(c) + ", expected " + std::to_string(rows) +
                         "x" + std::to_string(cols));
    binio::read_f64_array(in, data, rows * cols);
}

}  // namespace

void save_checkpoint(const ModelState& model, const Vocab& vocab,
                     const Taxonomy& taxonomy, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw RuntimeFault("cannot write " + path);
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    binio::write_u64(out, 1);  // version
    binio::write_string(out, config_to_string(model.config));
    write_vocab(out, vocab);
    binio::write_u64(out, taxonomy.nodes.size());
    for (const LabelNode& n : taxonomy.nodes) binio::write_i64(out, n.id);
    binio::write_u64(out, static_cast<std::uint64_t>(model.epoch));

    const ModelState& m = model;
    write_tensor(out, "encoder.embedding", m.encoder.embedding.data.data(),
                 m.encoder.embedding.rows, m.encoder.embedding.cols);
    write_tensor(out, "encoder.w1", m.encoder.w1.data.data(), m.encoder.w1.rows,
                 m.encoder.w1.cols);
    write_tensor(out, "encoder.b1", m.encoder.b1.data(), m.encoder.b1.size(), 1);
    write_tensor(out, "encoder.w2", m.encoder.w2.data.data(), m.encoder.w2.rows,
                 m.encoder.w2.cols);
    write_tensor(out, "encoder.b2", m.encoder.b2.data(), m.encoder.b2.size(), 1);
    write_tensor(out, "gcn.w1", m.gcn.w1.data.data(), m.gcn.w1.rows, m.gcn.w1.cols);
    write_tensor(out, "gcn.b1", m.gcn.b1.data(), m.gcn.b1.size(), 1);
    write_tensor(out, "gcn.w2", m.gcn.w2.data.data(), m.gcn.w2.rows, m.gcn.w2.cols);
    write_tensor(out, "gcn.b2", m.gcn.b2.data(), m.gcn.b2.size(), 1);
    write_tensor(out, "bias", m.bias.data(), m.bias.size(), 1);
    write_tensor(out, "label_table", m.label_table.data.data(), m.label_table.rows,
                 m.label_table.cols);
    if (!out) throw RuntimeFault("write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
        throw ParseError(path + ": not a checkpoint file");
    std::uint64_t version = binio::read_u64(in);
    if (version != 1)
        throw RuntimeFault(path + ": unsupported checkpoint version " +
                           std::to_string(version));

    Checkpoint ckpt;
    std::istringstream cfg(binio::read_string(in));
    std::string line;
    while (std::getline(cfg, line)) {
        std::size_t eq = line.find('=');
        if (eq == std::string::npos) continue;
        set_config_key(ckpt.model.config, trim(line.substr(0, eq)),
                       trim(line.substr(eq + 1)));
    }
    ckpt.vocab = read_vocab(in);
    std::uint64_t node_count = binio::read_u64(in);
    ckpt.taxonomy_ids.resize(node_count);
    for (std::uint64_t i = 0; i < node_count; ++i)
        ckpt.taxonomy_ids[i] = static_cast<int>(binio::read_i64(in));
    ckpt.model.epoch = static_cast<int>(binio::read_u64(in));

    std::size_t d = static_cast<std::size_t>(ckpt.model.config.dim);
    std::size_t vocab_size = ckpt.vocab.size();
    ModelState& m = ckpt.model;
    m.encoder.embedding = Matrix(vocab_size, d);
    m.encoder.w1 = Matrix(d, d);
    m.encoder.b1 = Vector(d, 0.0);
    m.encoder.w2 = Matrix(d, d);
    m.encoder.b2 = Vector(d, 0.0);
    m.gcn.w1 = Matrix(d, d);
    m.gcn.b1 = Vector(d, 0.0);
    m.gcn.w2 = Matrix(d, d);
    m.gcn.b2 = Vector(d, 0.0);

    read_tensor(in, "encoder.embedding", m.encoder.embedding.data.data(), vocab_size, d,
                path);
    read_tensor(in, "encoder.w1", m.encoder.w1.data.data(), d, d, path);
    read_tensor(in, "encoder.b1", m.encoder.b1.data(), d, 1, path);
    read_tensor(in, "encoder.w2", m.encoder.w2.data.data(), d, d, path);
    read_tensor(in, "encoder.b2", m.encoder.b2.data(), d, 1, path);
    read_tensor(in, "gcn.w1", m.gcn.w1.data.data(), d, d, path);
    read_tensor(in, "gcn.b1", m.gcn.b1.data(), d, 1, path);
    read_tensor(in, "gcn.w2", m.gcn.w2.data.data(), d, d, path);
    read_tensor(in, "gcn.b2", m.gcn.b2.data(), d, 1, path);

    // Bias and label_table carry the taxonomy sizes; read their headers to
    // size the buffers.
    std::string name = binio::read_string(in);
    if (name != "bias") throw ParseError(path + ": expected tensor bias, found " + name);
    std::uint64_t rows = binio::read_u64(in);
    std::uint64_t cols = binio::read_u64(in);
    if (cols != 1) throw ParseError(path + ": bias must be a vector");
    m.bias = Vector(rows, 0.0);
    binio::read_f64_array(in, m.bias.data(), rows);

    name = binio::read_string(in);
    if (name != "label_table")
        throw ParseError(path + ": expected tensor label_table, found " + name);
    rows = binio::read_u64(in);
    cols = binio::read_u64(in);
    if (cols != d) throw ParseError(path + ": label_table width does not match dim");
    m.label_table = Matrix(rows, cols);
    binio::read_f64_array(in, m.label_table.data.data(), rows * cols);

    return ckpt;
}

}  // namespace qc
