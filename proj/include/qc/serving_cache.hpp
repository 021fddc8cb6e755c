#pragma once

#include <atomic>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "qc/label_graph.hpp"
#include "qc/matrix.hpp"
#include "qc/text_encoder.hpp"
#include "qc/trainer.hpp"

namespace qc {

// Everything the online path needs: the GCN-produced leaf rows, the bias,
// and the query-side encoder. No graph work happens at serving time.
struct LeafCache {
    std::uint32_t version = 1;
    std::size_t d = 0;
    int max_query_len = 20;
    std::vector<int> leaf_ids;      // row order of h_leaf and bias
    std::vector<std::string> leaf_names;
    Matrix h_leaf;                  // |C| x d
    Vector bias;                    // |C|
    EncoderParams encoder;
    Vocab vocab;
};

// Runs label encoding + GCN once with the trained parameters and packages
// the result. bundle may be null when the model trained without structure.
LeafCache export_cache(const ModelState& model, const GraphBundle* bundle,
                       const Taxonomy& taxonomy, const Vocab& vocab);

void save_leaf_cache(const LeafCache& cache, const std::string& path);
LeafCache load_leaf_cache(const std::string& path);

struct ScoredLabel {
    int id = 0;
    std::string name;
    double score = 0.0;
};

// Full sigmoid(q H_l^T + b) score vector in cache row order.
Vector score_from_cache(const std::string& query_text, const LeafCache& cache);

// Binarized labels with their scores, descending by score (id breaks ties).
std::vector<ScoredLabel> predict_from_cache(const std::string& query_text,
                                            const LeafCache& cache, double threshold);

// One protocol turn: request {"query": str, "threshold"?: real} in, response
// {"labels": [{"id", "name", "score"}...]} or {"error": str} out. Never
// throws; malformed input becomes an error response.
std::string handle_request(const LeafCache& cache, const std::string& request_line,
                           double default_threshold);

// Line-delimited JSON over arbitrary streams (the stdio transport). Returns
// the number of requests served.
std::size_t serve_lines(const LeafCache& cache, std::istream& in, std::ostream& out,
                        double default_threshold);

// TCP transport on 127.0.0.1. port 0 picks an ephemeral port; the bound port
// is announced on `announce` as "listening on 127.0.0.1:<port>". Each
// connection gets a thread speaking the same line protocol. Runs until the
// process dies or `stop` (when given) becomes true.
void serve_tcp(const LeafCache& cache, int port, double default_threshold,
               std::ostream& announce, std::atomic<bool>* stop = nullptr);

// Maps {"query": str} JSONL to prediction JSONL, order preserved.
void batch_predict(const LeafCache& cache, const std::string& input_path,
                   const std::string& output_path, double threshold);

}  // namespace qc
