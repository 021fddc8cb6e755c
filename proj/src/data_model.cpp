#include "qc/data_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"

namespace qc {

using nlohmann::json;

const LabelNode& Taxonomy::node(int id) const {
    auto it = node_pos.find(id);
    if (it == node_pos.end())
        throw ValidationError("unknown label id " + std::to_string(id));
    return nodes[it->second];
}

Taxonomy build_taxonomy(std::vector<LabelNode> nodes) {
    std::sort(nodes.begin(), nodes.end(),
              [](const LabelNode& a, const LabelNode& b) { return a.id < b.id; });

    Taxonomy tax;
    tax.nodes = std::move(nodes);

    for (std::size_t i = 0; i < tax.nodes.size(); ++i) {
        const LabelNode& n = tax.nodes[i];
        if (n.name.empty())
            throw ValidationError("label id " + std::to_string(n.id) + " has empty name");
        if (!tax.node_pos.emplace(n.id, i).second)
            throw ValidationError("duplicate label id " + std::to_string(n.id));
    }
    for (const LabelNode& n : tax.nodes) {
        if (n.parent_id) {
            if (*n.parent_id == n.id)
                throw ValidationError("label id " + std::to_string(n.id) +
                                      " is its own parent");
            if (!tax.node_pos.count(*n.parent_id))
                throw ValidationError("label id " + std::to_string(n.id) +
                                      " references missing parent " +
                                      std::to_string(*n.parent_id));
            tax.children[*n.parent_id].push_back(n.id);
        }
    }
    for (auto& [id, kids] : tax.children) std::sort(kids.begin(), kids.end());

    // Levels by walking parent chains; a chain longer than the node count is a cycle.
    for (LabelNode& n : tax.nodes) {
        int level = 1;
        const LabelNode* cur = &n;
        while (cur->parent_id) {
            cur = &tax.nodes[tax.node_pos.at(*cur->parent_id)];
            ++level;
            if (level > static_cast<int>(tax.nodes.size()))
                throw ValidationError("cycle in taxonomy involving id " +
                                      std::to_string(n.id));
        }
        n.level = level;
        n.is_leaf = tax.children.find(n.id) == tax.children.end();
    }

    for (const LabelNode& n : tax.nodes)
        if (!n.is_leaf) tax.all_index.push_back(n.id);
    for (const LabelNode& n : tax.nodes)
        if (n.is_leaf) {
            tax.leaf_index.push_back(n.id);
            tax.all_index.push_back(n.id);
        }
    for (std::size_t i = 0; i < tax.leaf_index.size(); ++i)
        tax.leaf_row[tax.leaf_index[i]] = i;
    for (std::size_t i = 0; i < tax.all_index.size(); ++i)
        tax.all_row[tax.all_index[i]] = i;
    return tax;
}

namespace {

json parse_line(const std::string& line, const std::string& path, std::size_t line_no) {
    try {
        return json::parse(line);
    } catch (const json::exception& e) {
        throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

}  // namespace

Taxonomy load_taxonomy(const std::string& path) {
    std::vector<LabelNode> nodes;
    std::size_t line_no = 0;
    for (const std::string& line : read_lines(path)) {
        ++line_no;
        if (line.empty()) continue;
        json j = parse_line(line, path, line_no);
        LabelNode n;
        try {
            n.id = j.at("id").get<int>();
            n.name = j.at("name").get<std::string>();
            if (j.contains("parent_id") && !j["parent_id"].is_null())
                n.parent_id = j["parent_id"].get<int>();
            if (j.contains("side_info"))
                n.side_info = j["side_info"].get<std::vector<std::string>>();
        } catch (const json::exception& e) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        nodes.push_back(std::move(n));
    }
    return build_taxonomy(std::move(nodes));
}

void validate_sample(const ClickSample& sample, const Taxonomy& taxonomy,
                     std::size_t line_no) {
    std::string where = line_no ? "line " + std::to_string(line_no) + ": " : "";
    if (sample.clicked_leaf_ids.empty())
        throw ValidationError(where + "sample has empty clicked label set");
    for (int id : sample.clicked_leaf_ids) {
        if (!taxonomy.node_pos.count(id))
            throw ValidationError(where + "clicked label " + std::to_string(id) +
                                  " not in taxonomy");
        if (!taxonomy.is_leaf_id(id))
            throw ValidationError(where + "clicked label " + std::to_string(id) +
                                  " is not a leaf");
    }
}

std::vector<ClickSample> load_clicks(const std::string& path, const Taxonomy* taxonomy) {
    std::vector<ClickSample> samples;
    std::size_t line_no = 0;
    for (const std::string& line : read_lines(path)) {
        ++line_no;
        if (line.empty()) continue;
        json j = parse_line(line, path, line_no);
        ClickSample s;
        try {
            s.query_text = j.at("query").get<std::string>();
            s.clicked_leaf_ids = j.at("clicked_label_ids").get<std::vector<int>>();
            if (j.contains("knowledge_ids"))
                s.knowledge_ids = j["knowledge_ids"].get<std::vector<int>>();
        } catch (const json::exception& e) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        std::sort(s.clicked_leaf_ids.begin(), s.clicked_leaf_ids.end());
        s.clicked_leaf_ids.erase(
            std::unique(s.clicked_leaf_ids.begin(), s.clicked_leaf_ids.end()),
            s.clicked_leaf_ids.end());
        if (s.clicked_leaf_ids.empty())
            throw ValidationError(path + ":" + std::to_string(line_no) +
                                  ": sample has no clicked labels");
        if (taxonomy) validate_sample(s, *taxonomy, line_no);
        samples.push_back(std::move(s));
    }
    return samples;
}

std::vector<ClickSample> load_clicks(const std::string& path, const Taxonomy& taxonomy) {
    return load_clicks(path, &taxonomy);
}

std::vector<KnowledgeRecord> load_knowledge(const std::string& path) {
    std::vector<KnowledgeRecord> records;
    std::set<int> seen;
    std::size_t line_no = 0;
    for (const std::string& line : read_lines(path)) {
        ++line_no;
        if (line.empty()) continue;
        json j = parse_line(line, path, line_no);
        KnowledgeRecord r;
        try {
            r.id = j.at("id").get<int>();
            r.text = j.at("text").get<std::string>();
            std::string kind = j.at("kind").get<std::string>();
            if (kind == "posterior")
                r.kind = KnowledgeKind::Posterior;
            else if (kind == "world")
                r.kind = KnowledgeKind::World;
            else
                throw ValidationError(path + ":" + std::to_string(line_no) +
                                      ": unknown knowledge kind '" + kind + "'");
        } catch (const json::exception& e) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        if (r.text.empty())
            throw ValidationError(path + ":" + std::to_string(line_no) +
                                  ": knowledge record " + std::to_string(r.id) +
                                  " has empty text");
        if (!seen.insert(r.id).second)
            throw ValidationError(path + ":" + std::to_string(line_no) +
                                  ": duplicate knowledge id " + std::to_string(r.id));
        records.push_back(std::move(r));
    }
    return records;
}

void save_taxonomy(const Taxonomy& taxonomy, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw RuntimeFault("cannot write " + path);
    for (const LabelNode& n : taxonomy.nodes) {
        json j;
        j["id"] = n.id;
        j["name"] = n.name;
        j["parent_id"] = n.parent_id ? json(*n.parent_id) : json(nullptr);
        j["side_info"] = n.side_info;
        out << j.dump() << "\n";
    }
}

void save_clicks(const std::vector<ClickSample>& samples, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw RuntimeFault("cannot write " + path);
    for (const ClickSample& s : samples) {
        json j;
        j["query"] = s.query_text;
        j["clicked_label_ids"] = s.clicked_leaf_ids;
        j["knowledge_ids"] = s.knowledge_ids;
        out << j.dump() << "\n";
    }
}

void save_knowledge(const std::vector<KnowledgeRecord>& records, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw RuntimeFault("cannot write " + path);
    for (const KnowledgeRecord& r : records) {
        json j;
        j["id"] = r.id;
        j["text"] = r.text;
        j["kind"] = r.kind == KnowledgeKind::Posterior ? "posterior" : "world";
        out << j.dump() << "\n";
    }
}

std::size_t count_codepoints(const std::string& text) {
    std::size_t n = 0;
    for (unsigned char c : text)
        if ((c & 0xC0) != 0x80) ++n;
    return n;
}

DatasetStats compute_stats(const std::vector<ClickSample>& samples) {
    if (samples.empty()) throw ValidationError("compute_stats: empty sample list");
    DatasetStats stats;
    stats.num_queries = samples.size();
    std::set<int> distinct;
    double char_sum = 0.0;
    double label_sum = 0.0;
    stats.min_labels = samples.front().clicked_leaf_ids.size();
    stats.max_labels = stats.min_labels;
    for (const ClickSample& s : samples) {
        char_sum += static_cast<double>(count_codepoints(s.query_text));
        std::size_t k = s.clicked_leaf_ids.size();
        label_sum += static_cast<double>(k);
        stats.min_labels = std::min(stats.min_labels, k);
        stats.max_labels = std::max(stats.max_labels, k);
        distinct.insert(s.clicked_leaf_ids.begin(), s.clicked_leaf_ids.end());
    }
    stats.avg_chars = char_sum / static_cast<double>(samples.size());
    stats.avg_labels = label_sum / static_cast<double>(samples.size());
    stats.total_labels = distinct.size();
    return stats;
}

std::string stats_to_json(const DatasetStats& stats) {
    json j;
    j["num_queries"] = stats.num_queries;
    j["avg_chars"] = stats.avg_chars;
    j["total_labels"] = stats.total_labels;
    j["avg_labels"] = stats.avg_labels;
    j["min_labels"] = stats.min_labels;
    j["max_labels"] = stats.max_labels;
    return j.dump();
}

SplitResult split_dataset(const std::vector<ClickSample>& samples,
                          const std::array<double, 3>& ratios, std::uint64_t seed) {
    double sum = ratios[0] + ratios[1] + ratios[2];
    if (std::abs(sum - 1.0) > 1e-9)
        throw ConfigError("split ratios sum to " + std::to_string(sum) + ", expected 1.0");
    for (double r : ratios)
        if (r < 0.0) throw ConfigError("split ratios must be nonnegative");

    std::vector<std::size_t> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    std::size_t n = samples.size();
    std::size_t n_train = static_cast<std::size_t>(std::floor(ratios[0] * n));
    std::size_t n_val = static_cast<std::size_t>(std::floor(ratios[1] * n));

    SplitResult out;
    for (std::size_t i = 0; i < n; ++i) {
        const ClickSample& s = samples[order[i]];
        if (i < n_train)
            out.train.push_back(s);
        else if (i < n_train + n_val)
            out.val.push_back(s);
        else
            out.test.push_back(s);
    }
    return out;
}

namespace {

std::string signature_token(std::size_t leaf_idx) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "sig%03zu", leaf_idx);
    return buf;
}

}  // namespace

SyntheticCorpus generate_synthetic(std::size_t num_labels, std::size_t num_queries,
                                   double tail_fraction, std::uint64_t seed) {
    if (num_labels < 2) throw ConfigError("generate_synthetic: num_labels must be >= 2");
    if (tail_fraction < 0.0 || tail_fraction >= 1.0)
        throw ConfigError("generate_synthetic: tail_fraction must be in [0, 1)");

    SyntheticCorpus corpus;
    std::mt19937_64 rng(seed);

    std::size_t num_tail = static_cast<std::size_t>(
        std::floor(tail_fraction * static_cast<double>(num_labels)));
    std::size_t num_head = num_labels - num_tail;
    // Each tail leaf is a freshly launched product: no clicks yet, but it is
    // a variant of an established head "partner" leaf, so its name shares the
    // partner's signature token plus its own tag, it hangs under the same
    // parent, and its knowledge record carries both tokens.
    auto partner_of = [&](std::size_t j) { return (j - num_head) % num_head; };

    std::size_t num_parents = std::max<std::size_t>(1, num_labels / 10);
    std::vector<LabelNode> nodes;
    for (std::size_t p = 0; p < num_parents; ++p) {
        LabelNode n;
        n.id = static_cast<int>(p + 1);
        n.name = "dept" + std::to_string(p);
        nodes.push_back(n);
    }
    std::vector<int> leaf_ids(num_labels);
    std::vector<std::string> sig(num_labels);
    std::vector<std::string> tag(num_labels);
    for (std::size_t j = 0; j < num_labels; ++j) {
        LabelNode n;
        n.id = static_cast<int>(num_parents + 1 + j);
        sig[j] = signature_token(j);
        if (j < num_head) {
            n.name = sig[j];
            n.side_info = {sig[j]};
            n.parent_id = static_cast<int>(j % num_parents + 1);
        } else {
            char buf[16];
            std::snprintf(buf, sizeof(buf), "tag%03zu", j);
            tag[j] = buf;
            std::size_t p = partner_of(j);
            n.name = sig[p] + " " + tag[j];
            n.side_info = {tag[j]};
            n.parent_id = static_cast<int>(p % num_parents + 1);
        }
        leaf_ids[j] = n.id;
        nodes.push_back(n);
    }
    corpus.taxonomy = build_taxonomy(std::move(nodes));

    for (std::size_t j = 0; j < num_labels; ++j) {
        KnowledgeRecord r;
        r.id = leaf_ids[j];
        r.text = j < num_head ? sig[j] + " " + sig[j]
                              : sig[partner_of(j)] + " " + tag[j];
        r.kind = (j % 2 == 0) ? KnowledgeKind::Posterior : KnowledgeKind::World;
        corpus.knowledge.push_back(r);
    }

    for (std::size_t j = num_head; j < num_labels; ++j)
        corpus.tail_leaf_ids.push_back(leaf_ids[j]);

    // Head-leaf popularity follows a Zipf-like skew blended with a uniform
    // floor, so click counts vary widely but no head leaf is starved. Most
    // queries click one leaf, a minority click two independent draws.
    std::vector<double> leaf_weight(num_head);
    double uniform_share = 0.15 / static_cast<double>(num_head);
    double zipf_total = 0.0;
    for (std::size_t k = 0; k < num_head; ++k)
        zipf_total += 1.0 / std::pow(static_cast<double>(k + 1), 1.1);
    for (std::size_t k = 0; k < num_head; ++k)
        leaf_weight[k] = uniform_share +
                         0.85 / (std::pow(static_cast<double>(k + 1), 1.1) * zipf_total);
    std::discrete_distribution<std::size_t> pick_leaf(leaf_weight.begin(),
                                                      leaf_weight.end());
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> pick_noise(0, 199);

    // tail_mention < 0 for an ordinary query; otherwise the index of the
    // mentioned tail leaf. A tail mention models a search for the new
    // product: its tag dominates the text, retrieval returns its record as
    // the only knowledge, and the user clicks the established partner leaf
    // because the new product has no results yet.
    auto make_query = [&](const std::vector<std::size_t>& gold, long tail_mention) {
        ClickSample s;
        std::vector<std::string> tokens;
        for (std::size_t g : gold) {
            tokens.push_back(sig[g]);
            s.clicked_leaf_ids.push_back(leaf_ids[g]);
        }
        if (tail_mention >= 0) {
            std::size_t t = static_cast<std::size_t>(tail_mention);
            tokens.push_back(tag[t]);
            tokens.push_back(tag[t]);
            s.knowledge_ids.push_back(leaf_ids[t]);
        }
        std::size_t noise = 1 + (unit(rng) < 0.5 ? 1 : 0);
        for (std::size_t i = 0; i < noise; ++i)
            tokens.push_back("nz" + std::to_string(pick_noise(rng)));
        // Most other samples carry retrieved knowledge for one gold leaf.
        bool attach_gold = unit(rng) < 0.6;
        if (attach_gold && tail_mention < 0) s.knowledge_ids.push_back(leaf_ids[gold[0]]);

        std::ostringstream text;
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            if (i) text << ' ';
            text << tokens[i];
        }
        s.query_text = text.str();
        std::sort(s.clicked_leaf_ids.begin(), s.clicked_leaf_ids.end());
        return s;
    };

    for (std::size_t q = 0; q < num_queries; ++q) {
        if (q < num_head) {
            // Coverage pass: every head leaf appears in at least one sample.
            corpus.samples.push_back(make_query({q}, -1));
            continue;
        }
        if (num_tail > 0 && unit(rng) < 0.3) {
            std::uniform_int_distribution<std::size_t> pick_tail(num_head,
                                                                 num_labels - 1);
            std::size_t t = pick_tail(rng);
            corpus.samples.push_back(make_query({partner_of(t)},
                                                static_cast<long>(t)));
            continue;
        }
        std::vector<std::size_t> gold;
        std::size_t a = pick_leaf(rng);
        if (num_head > 1 && unit(rng) < 0.2) {
            std::size_t b = pick_leaf(rng);
            while (b == a) b = pick_leaf(rng);
            gold = {a, b};
        } else {
            gold = {a};
        }
        corpus.samples.push_back(make_query(gold, -1));
    }
    return corpus;
}

std::vector<ClickSample> generate_probe_samples(const SyntheticCorpus& corpus,
                                                std::size_t per_leaf, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick_noise(0, 199);
    std::vector<ClickSample> probes;
    for (int leaf_id : corpus.taxonomy.leaf_index) {
        const LabelNode& n = corpus.taxonomy.node(leaf_id);
        for (std::size_t i = 0; i < per_leaf; ++i) {
            ClickSample s;
            s.query_text = n.name + " nz" + std::to_string(pick_noise(rng));
            s.clicked_leaf_ids = {leaf_id};
            s.knowledge_ids = {leaf_id};
            probes.push_back(std::move(s));
        }
    }
    return probes;
}

}  // namespace qc
