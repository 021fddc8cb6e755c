#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "qc/data_model.hpp"
#include "test_util.hpp"

using qc::ClickSample;
using qc::LabelNode;
using qc::Taxonomy;

namespace {

LabelNode node(int id, const std::string& name, std::optional<int> parent = std::nullopt) {
    LabelNode n;
    n.id = id;
    n.name = name;
    n.parent_id = parent;
    return n;
}

// Two roots, one internal node, three leaves:
//   1 -> 2 -> 4, 1 -> 3, 5 (root leaf)
std::vector<LabelNode> small_forest() {
    return {node(1, "root"), node(2, "mid", 1), node(3, "leaf-a", 1),
            node(4, "leaf-b", 2), node(5, "lone")};
}

}  // namespace

TEST_CASE("build_taxonomy derives levels, leaf flags, and row orders") {
    Taxonomy t = qc::build_taxonomy(small_forest());

    CHECK(t.node(1).level == 1);
    CHECK(t.node(2).level == 2);
    CHECK(t.node(3).level == 2);
    CHECK(t.node(4).level == 3);
    CHECK(t.node(5).level == 1);

    CHECK_FALSE(t.node(1).is_leaf);
    CHECK_FALSE(t.node(2).is_leaf);
    CHECK(t.node(3).is_leaf);
    CHECK(t.node(4).is_leaf);
    CHECK(t.node(5).is_leaf);

    CHECK(t.leaf_index == std::vector<int>{3, 4, 5});
    // Non-leaves ascending, then the leaf block in leaf_index order.
    CHECK(t.all_index == std::vector<int>{1, 2, 3, 4, 5});
    CHECK(t.num_leaves() == 3);
    CHECK(t.num_all() == 5);
    CHECK(t.leaf_offset() == 2);

    CHECK(t.leaf_row.at(3) == 0);
    CHECK(t.leaf_row.at(5) == 2);
    CHECK(t.all_row.at(1) == 0);
    CHECK(t.all_row.at(4) == 3);
    // Leaf rows of full matrices line up with the leaf block.
    for (int id : t.leaf_index) CHECK(t.all_row.at(id) == t.leaf_offset() + t.leaf_row.at(id));

    CHECK(t.children.at(1) == std::vector<int>{2, 3});
    CHECK(t.is_leaf_id(4));
    CHECK_FALSE(t.is_leaf_id(2));
    CHECK_THROWS_AS(t.node(99), qc::ValidationError);
}

TEST_CASE("build_taxonomy input order does not matter") {
    auto nodes = small_forest();
    std::reverse(nodes.begin(), nodes.end());
    Taxonomy t = qc::build_taxonomy(std::move(nodes));
    CHECK(t.leaf_index == std::vector<int>{3, 4, 5});
    CHECK(t.nodes.front().id == 1);
    CHECK(t.nodes.back().id == 5);
}

TEST_CASE("build_taxonomy rejects malformed forests") {
    SUBCASE("empty name") {
        CHECK_THROWS_AS(qc::build_taxonomy({node(1, "")}), qc::ValidationError);
    }
    SUBCASE("duplicate id") {
        CHECK_THROWS_AS(qc::build_taxonomy({node(1, "a"), node(1, "b")}),
                        qc::ValidationError);
    }
    SUBCASE("self parent") {
        CHECK_THROWS_AS(qc::build_taxonomy({node(1, "a", 1)}), qc::ValidationError);
    }
    SUBCASE("dangling parent") {
        CHECK_THROWS_AS(qc::build_taxonomy({node(1, "a", 7)}), qc::ValidationError);
    }
    SUBCASE("two-node cycle") {
        std::vector<LabelNode> nodes{node(1, "a", 2), node(2, "b", 1)};
        CHECK_THROWS_AS(qc::build_taxonomy(std::move(nodes)), qc::ValidationError);
    }
}

TEST_CASE("taxonomy JSONL round-trip") {
    TempDir dir("taxonomy");
    auto nodes = small_forest();
    nodes[2].side_info = {"alpha", "beta"};
    Taxonomy t = qc::build_taxonomy(std::move(nodes));

    std::string path = dir.file("taxonomy.jsonl");
    qc::save_taxonomy(t, path);
    Taxonomy loaded = qc::load_taxonomy(path);

    REQUIRE(loaded.nodes.size() == t.nodes.size());
    for (std::size_t i = 0; i < t.nodes.size(); ++i) {
        CHECK(loaded.nodes[i].id == t.nodes[i].id);
        CHECK(loaded.nodes[i].name == t.nodes[i].name);
        CHECK(loaded.nodes[i].side_info == t.nodes[i].side_info);
        CHECK(loaded.nodes[i].parent_id == t.nodes[i].parent_id);
        CHECK(loaded.nodes[i].level == t.nodes[i].level);
        CHECK(loaded.nodes[i].is_leaf == t.nodes[i].is_leaf);
    }

    // Saving the loaded copy reproduces the file byte for byte.
    std::string path2 = dir.file("taxonomy2.jsonl");
    qc::save_taxonomy(loaded, path2);
    CHECK(read_bytes(path) == read_bytes(path2));
}

TEST_CASE("parse errors carry path and 1-based line number") {
    TempDir dir("parse");
    std::string path = dir.file("bad.jsonl");
    write_text(path, "{\"id\": 1, \"name\": \"ok\"}\nnot json\n");
    try {
        qc::load_taxonomy(path);
        FAIL("expected ParseError");
    } catch (const qc::ParseError& e) {
        std::string msg = e.what();
        CHECK(msg.find(path) != std::string::npos);
        CHECK(msg.find(":2") != std::string::npos);
    }
    CHECK_THROWS_AS(qc::load_taxonomy(dir.file("missing.jsonl")), qc::ParseError);
}

TEST_CASE("click loading validates, sorts, and dedups label ids") {
    TempDir dir("clicks");
    Taxonomy t = qc::build_taxonomy(small_forest());
    std::string path = dir.file("clicks.jsonl");

    SUBCASE("round-trip with knowledge ids") {
        std::vector<ClickSample> samples{
            {"red shoes", {3, 5}, {10}},
            {"blue hat", {4}, {}},
        };
        qc::save_clicks(samples, path);
        auto loaded = qc::load_clicks(path, t);
        REQUIRE(loaded.size() == 2);
        CHECK(loaded[0].query_text == "red shoes");
        CHECK(loaded[0].clicked_leaf_ids == std::vector<int>{3, 5});
        CHECK(loaded[0].knowledge_ids == std::vector<int>{10});
        CHECK(loaded[1].clicked_leaf_ids == std::vector<int>{4});
    }
    SUBCASE("unsorted duplicate ids are normalized") {
        write_text(path, "{\"query\": \"q\", \"clicked_label_ids\": [5, 3, 5]}\n");
        auto loaded = qc::load_clicks(path, t);
        REQUIRE(loaded.size() == 1);
        CHECK(loaded[0].clicked_leaf_ids == std::vector<int>{3, 5});
    }
    SUBCASE("empty label set rejected") {
        write_text(path, "{\"query\": \"q\", \"clicked_label_ids\": []}\n");
        CHECK_THROWS_AS(qc::load_clicks(path, t), qc::ValidationError);
    }
    SUBCASE("non-leaf click rejected") {
        write_text(path, "{\"query\": \"q\", \"clicked_label_ids\": [2]}\n");
        CHECK_THROWS_AS(qc::load_clicks(path, t), qc::ValidationError);
    }
    SUBCASE("unknown id rejected with taxonomy, accepted without") {
        write_text(path, "{\"query\": \"q\", \"clicked_label_ids\": [42]}\n");
        CHECK_THROWS_AS(qc::load_clicks(path, t), qc::ValidationError);
        auto loaded = qc::load_clicks(path, nullptr);
        REQUIRE(loaded.size() == 1);
        CHECK(loaded[0].clicked_leaf_ids == std::vector<int>{42});
    }
}

TEST_CASE("knowledge JSONL round-trip and kind validation") {
    TempDir dir("knowledge");
    std::string path = dir.file("knowledge.jsonl");

    std::vector<qc::KnowledgeRecord> records{
        {7, "mentions label seven", qc::KnowledgeKind::Posterior},
        {9, "world fact", qc::KnowledgeKind::World},
    };
    qc::save_knowledge(records, path);
    auto loaded = qc::load_knowledge(path);
    REQUIRE(loaded.size() == 2);
    CHECK(loaded[0].id == 7);
    CHECK(loaded[0].text == "mentions label seven");
    CHECK(loaded[0].kind == qc::KnowledgeKind::Posterior);
    CHECK(loaded[1].kind == qc::KnowledgeKind::World);

    write_text(path, "{\"id\": 1, \"text\": \"x\", \"kind\": \"bogus\"}\n");
    CHECK_THROWS_AS(qc::load_knowledge(path), qc::ValidationError);
}

TEST_CASE("count_codepoints handles multi-byte UTF-8") {
    CHECK(qc::count_codepoints("") == 0);
    CHECK(qc::count_codepoints("ab") == 2);
    CHECK(qc::count_codepoints("caf\xC3\xA9") == 4);              // cafe with accent
    CHECK(qc::count_codepoints("\xE6\x97\xA5\xE6\x9C\xAC") == 2);  // two CJK chars
}

TEST_CASE("compute_stats worked example") {
    std::vector<ClickSample> samples{
        {"ab", {3}, {}},
        {"abcd", {3, 4, 5}, {}},
    };
    qc::DatasetStats s = qc::compute_stats(samples);
    CHECK(s.num_queries == 2);
    CHECK(s.avg_chars == doctest::Approx(3.0));
    CHECK(s.total_labels == 3);
    CHECK(s.avg_labels == doctest::Approx(2.0));
    CHECK(s.min_labels == 1);
    CHECK(s.max_labels == 3);

    std::string j = qc::stats_to_json(s);
    CHECK(j.find("\"num_queries\":2") != std::string::npos);
    CHECK(j.find("\"total_labels\":3") != std::string::npos);

    CHECK_THROWS_AS(qc::compute_stats({}), qc::ValidationError);
}

TEST_CASE("split_dataset sizes, determinism, and ratio validation") {
    std::vector<ClickSample> samples;
    for (int i = 0; i < 10; ++i)
        samples.push_back({"q" + std::to_string(i), {i}, {}});

    qc::SplitResult r = qc::split_dataset(samples, {0.8, 0.1, 0.1}, 42);
    CHECK(r.train.size() == 8);
    CHECK(r.val.size() == 1);
    CHECK(r.test.size() == 1);

    // A split is a permutation: every query lands in exactly one part.
    std::set<std::string> seen;
    for (const auto* part : {&r.train, &r.val, &r.test})
        for (const ClickSample& s : *part) seen.insert(s.query_text);
    CHECK(seen.size() == 10);

    qc::SplitResult again = qc::split_dataset(samples, {0.8, 0.1, 0.1}, 42);
    REQUIRE(again.train.size() == r.train.size());
    for (std::size_t i = 0; i < r.train.size(); ++i)
        CHECK(again.train[i].query_text == r.train[i].query_text);

    // Remainder goes to test: floor(0.5*7)=3, floor(0.3*7)=2, rest 2.
    qc::SplitResult odd = qc::split_dataset(
        std::vector<ClickSample>(samples.begin(), samples.begin() + 7), {0.5, 0.3, 0.2}, 1);
    CHECK(odd.train.size() == 3);
    CHECK(odd.val.size() == 2);
    CHECK(odd.test.size() == 2);

    CHECK_THROWS_AS(qc::split_dataset(samples, {0.5, 0.3, 0.3}, 1), qc::ConfigError);
    CHECK_THROWS_AS(qc::split_dataset(samples, {1.2, -0.1, -0.1}, 1), qc::ConfigError);
}

TEST_CASE("generate_synthetic without tail covers every leaf") {
    qc::SyntheticCorpus c = qc::generate_synthetic(20, 300, 0.0, 5);
    CHECK(c.tail_leaf_ids.empty());
    CHECK(c.taxonomy.num_leaves() == 20);
    CHECK(c.samples.size() == 300);
    CHECK(c.knowledge.size() == 20);

    // Two-level tree: every leaf hangs off a level-1 parent.
    for (int id : c.taxonomy.leaf_index) {
        const LabelNode& n = c.taxonomy.node(id);
        CHECK(n.level == 2);
        REQUIRE(n.parent_id.has_value());
        CHECK(c.taxonomy.node(*n.parent_id).level == 1);
        CHECK_FALSE(n.side_info.empty());
    }

    std::set<int> clicked;
    for (const ClickSample& s : c.samples) {
        REQUIRE_FALSE(s.clicked_leaf_ids.empty());
        for (int id : s.clicked_leaf_ids) {
            CHECK(c.taxonomy.is_leaf_id(id));
            clicked.insert(id);
        }
        CHECK_FALSE(s.query_text.empty());
    }
    CHECK(clicked.size() == c.taxonomy.num_leaves());

    // One knowledge record per leaf, ids match leaf ids.
    std::set<int> krec;
    for (const auto& k : c.knowledge) {
        CHECK_FALSE(k.text.empty());
        krec.insert(k.id);
    }
    for (int id : c.taxonomy.leaf_index) CHECK(krec.count(id) == 1);
}

TEST_CASE("generate_synthetic with tail keeps tail leaves clickless but mentioned") {
    qc::SyntheticCorpus c = qc::generate_synthetic(20, 600, 0.2, 5);
    REQUIRE(c.tail_leaf_ids.size() == 4);  // floor(0.2 * 20)

    std::set<int> tail(c.tail_leaf_ids.begin(), c.tail_leaf_ids.end());
    std::set<int> mentioned;
    for (const ClickSample& s : c.samples) {
        for (int id : s.clicked_leaf_ids) CHECK(tail.count(id) == 0);
        for (int id : s.knowledge_ids)
            if (tail.count(id)) mentioned.insert(id);
    }
    // Every tail leaf is reachable through some query's knowledge link.
    CHECK(mentioned == tail);

    // Tail leaves keep side_info and share their name's lead token with a
    // clicked sibling, so text evidence about them exists in the corpus.
    for (int id : c.tail_leaf_ids) {
        const LabelNode& n = c.taxonomy.node(id);
        CHECK_FALSE(n.side_info.empty());
        std::string lead = n.name.substr(0, n.name.find(' '));
        bool shared = false;
        for (int other : c.taxonomy.leaf_index)
            if (other != id && c.taxonomy.node(other).name.find(lead) != std::string::npos)
                shared = true;
        CHECK(shared);
    }
}

TEST_CASE("generate_synthetic is deterministic per seed") {
    qc::SyntheticCorpus a = qc::generate_synthetic(10, 100, 0.2, 9);
    qc::SyntheticCorpus b = qc::generate_synthetic(10, 100, 0.2, 9);
    REQUIRE(a.samples.size() == b.samples.size());
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
        CHECK(a.samples[i].query_text == b.samples[i].query_text);
        CHECK(a.samples[i].clicked_leaf_ids == b.samples[i].clicked_leaf_ids);
        CHECK(a.samples[i].knowledge_ids == b.samples[i].knowledge_ids);
    }
    CHECK(a.tail_leaf_ids == b.tail_leaf_ids);

    qc::SyntheticCorpus other = qc::generate_synthetic(10, 100, 0.2, 10);
    bool differs = false;
    for (std::size_t i = 0; i < a.samples.size(); ++i)
        if (a.samples[i].query_text != other.samples[i].query_text) differs = true;
    CHECK(differs);

    CHECK_THROWS_AS(qc::generate_synthetic(1, 10, 0.0, 1), qc::ConfigError);
    CHECK_THROWS_AS(qc::generate_synthetic(10, 10, 1.0, 1), qc::ConfigError);
}

TEST_CASE("generate_probe_samples covers every leaf with singleton gold sets") {
    qc::SyntheticCorpus c = qc::generate_synthetic(15, 200, 0.2, 3);
    auto probes = qc::generate_probe_samples(c, 4, 8);
    CHECK(probes.size() == 15 * 4);

    std::map<int, int> per_leaf;
    for (const ClickSample& s : probes) {
        REQUIRE(s.clicked_leaf_ids.size() == 1);
        int id = s.clicked_leaf_ids[0];
        per_leaf[id] += 1;
        CHECK(s.knowledge_ids == std::vector<int>{id});
        // Probe text embeds the leaf name tokens.
        CHECK(s.query_text.find(c.taxonomy.node(id).name.substr(0, 5)) != std::string::npos);
    }
    for (int id : c.taxonomy.leaf_index) CHECK(per_leaf[id] == 4);
    for (int id : c.tail_leaf_ids) CHECK(per_leaf[id] == 4);
}
