#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qc/errors.hpp"

namespace qc {

// One node of the label taxonomy. `name` is the label text, `side_info` the
// auxiliary strings (product words, frequent query terms, generated
// descriptions) concatenated to the name before encoding.
struct LabelNode {
    int id = 0;
    std::string name;
    std::vector<std::string> side_info;
    std::optional<int> parent_id;
    int level = 1;      // derived: 1 for roots, parent.level + 1 otherwise
    bool is_leaf = true;  // derived: no children
};

// The label tree over all levels. Row orders are deterministic for a given
// input file: nodes sorted ascending by id, with the leaves placed as a
// contiguous trailing block of `all_index` so the leaf slice of any
// |C'|-row matrix is a contiguous block.
struct Taxonomy {
    std::vector<LabelNode> nodes;    // sorted by id
    std::vector<int> leaf_index;     // leaf ids, sorted; defines |C| row order
    std::vector<int> all_index;      // all ids; non-leaves first, then leaf_index

    std::map<int, std::size_t> node_pos;  // id -> index into nodes
    std::map<int, std::size_t> leaf_row;  // leaf id -> row in |C| matrices
    std::map<int, std::size_t> all_row;   // id -> row in |C'| matrices
    std::map<int, std::vector<int>> children;  // id -> child ids, sorted

    std::size_t num_leaves() const { return leaf_index.size(); }
    std::size_t num_all() const { return all_index.size(); }
    // Leaves occupy rows [leaf_offset, num_all) of full matrices.
    std::size_t leaf_offset() const { return num_all() - num_leaves(); }

    const LabelNode& node(int id) const;
    bool is_leaf_id(int id) const { return leaf_row.count(id) != 0; }
};

// Builds the derived fields (levels, leaf flags, indices) and validates the
// forest structure. Throws ValidationError naming the offending id on
// cycles, dangling parents, self-parents, or empty names.
Taxonomy build_taxonomy(std::vector<LabelNode> nodes);

struct ClickSample {
    std::string query_text;
    std::vector<int> clicked_leaf_ids;  // sorted, unique, non-empty
    std::vector<int> knowledge_ids;
};

enum class KnowledgeKind { Posterior, World };

struct KnowledgeRecord {
    int id = 0;
    std::string text;
    KnowledgeKind kind = KnowledgeKind::Posterior;
};

struct DatasetStats {
    std::size_t num_queries = 0;
    double avg_chars = 0.0;      // unicode scalar values per query, averaged
    std::size_t total_labels = 0;  // distinct leaf labels observed
    double avg_labels = 0.0;
    std::size_t min_labels = 0;
    std::size_t max_labels = 0;
};

// JSONL loaders. Parse errors carry the 1-based line number. Passing a null
// taxonomy skips the leaf-membership check (enough for corpus statistics).
Taxonomy load_taxonomy(const std::string& path);
std::vector<ClickSample> load_clicks(const std::string& path, const Taxonomy* taxonomy);
std::vector<ClickSample> load_clicks(const std::string& path, const Taxonomy& taxonomy);
std::vector<KnowledgeRecord> load_knowledge(const std::string& path);

void save_taxonomy(const Taxonomy& taxonomy, const std::string& path);
void save_clicks(const std::vector<ClickSample>& samples, const std::string& path);
void save_knowledge(const std::vector<KnowledgeRecord>& records, const std::string& path);

// Validates one sample against the taxonomy (used by loaders and generators).
void validate_sample(const ClickSample& sample, const Taxonomy& taxonomy,
                     std::size_t line_no);

std::size_t count_codepoints(const std::string& text);

DatasetStats compute_stats(const std::vector<ClickSample>& samples);
std::string stats_to_json(const DatasetStats& stats);

// Deterministic shuffle-then-split. Sizes: floor(r1*n), floor(r2*n), rest.
struct SplitResult {
    std::vector<ClickSample> train, val, test;
};
SplitResult split_dataset(const std::vector<ClickSample>& samples,
                          const std::array<double, 3>& ratios, std::uint64_t seed);

struct SyntheticCorpus {
    Taxonomy taxonomy;
    std::vector<ClickSample> samples;
    std::vector<KnowledgeRecord> knowledge;
    std::vector<int> tail_leaf_ids;  // the floor(tail_fraction*|C|) clickless leaves
};

// Emits a 2-level taxonomy whose leaf names carry a per-leaf signature token.
// Queries contain their gold labels' signatures plus noise tokens. A
// tail_fraction of leaves receive zero clicks but keep matching side_info and
// knowledge records; some head queries mention a tail leaf in their text and
// knowledge without clicking it.
SyntheticCorpus generate_synthetic(std::size_t num_labels, std::size_t num_queries,
                                   double tail_fraction, std::uint64_t seed);

// Probe queries for evaluation: `per_leaf` queries per leaf, each with gold
// set {leaf}, built with the same token scheme as generate_synthetic. Covers
// every leaf, including clickless tail leaves.
std::vector<ClickSample> generate_probe_samples(const SyntheticCorpus& corpus,
                                                std::size_t per_leaf, std::uint64_t seed);

}  // namespace qc
