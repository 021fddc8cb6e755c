// qc: train, evaluate, and serve a multi-label query classifier over a
// label taxonomy. One subcommand per invocation; see --help.
#include <array>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "qc/data_model.hpp"
#include "qc/evaluator.hpp"
#include "qc/errors.hpp"
#include "qc/knowledge_semi.hpp"
#include "qc/label_graph.hpp"
#include "qc/serving_cache.hpp"
#include "qc/text_encoder.hpp"
#include "qc/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct GlobalOpts {
    std::optional<long long> seed;
    std::string config_path;
    std::string out_dir = ".";
    std::string token_mode = "word";
};

qc::TrainConfig resolve_config(const GlobalOpts& g,
                               const std::vector<std::string>& overrides) {
    qc::TrainConfig config;
    if (!g.config_path.empty()) config = qc::load_train_config(g.config_path);
    for (const std::string& kv : overrides) {
        std::size_t eq = kv.find('=');
        if (eq == std::string::npos)
            throw qc::ConfigError("--set expects KEY=VALUE, got '" + kv + "'");
        qc::set_config_key(config, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (g.seed) config.seed = static_cast<std::uint64_t>(*g.seed);
    config.validate();
    return config;
}

void echo_config(const qc::TrainConfig& config) {
    std::cerr << "resolved config:\n" << qc::config_to_string(config);
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw qc::RuntimeFault("cannot create directory " + dir + ": " + ec.message());
}

std::array<double, 3> parse_split(const std::string& spec) {
    std::array<double, 3> ratios{};
    std::stringstream ss(spec);
    std::string part;
    std::size_t i = 0;
    while (std::getline(ss, part, ',')) {
        if (i >= 3) throw qc::ConfigError("--split expects three comma-separated ratios");
        try {
            ratios[i++] = std::stod(part);
        } catch (const std::exception&) {
            throw qc::ConfigError("--split: '" + part + "' is not a number");
        }
    }
    if (i != 3) throw qc::ConfigError("--split expects three comma-separated ratios");
    return ratios;
}

json report_json(const qc::MetricsReport& r) {
    return json::parse(qc::report_to_json(r));
}

std::string metric_row(const qc::MetricsReport& r) {
    std::ostringstream out;
    auto put = [&](const qc::Prf& p) {
        out << '\t' << p.precision << '\t' << p.recall << '\t' << p.f1;
    };
    put(r.micro);
    put(r.macro);
    put(r.head);
    put(r.tail);
    return out.str();
}

// Shared by train and ablate: load the three corpus files and split clicks.
struct CorpusArgs {
    std::string taxonomy_path;
    std::string clicks_path;
    std::string knowledge_path;
    std::string split = "0.8,0.1,0.1";
};

struct LoadedCorpus {
    qc::Taxonomy taxonomy;
    std::vector<qc::KnowledgeRecord> knowledge;
    qc::SplitResult split;
};

LoadedCorpus load_corpus(const CorpusArgs& args, std::uint64_t seed) {
    LoadedCorpus c;
    c.taxonomy = qc::load_taxonomy(args.taxonomy_path);
    if (!args.knowledge_path.empty()) c.knowledge = qc::load_knowledge(args.knowledge_path);
    std::vector<qc::ClickSample> samples = qc::load_clicks(args.clicks_path, c.taxonomy);
    c.split = qc::split_dataset(samples, parse_split(args.split), seed);
    return c;
}

const qc::Taxonomy& checkpoint_taxonomy(const qc::Checkpoint& ckpt,
                                        const qc::Taxonomy& taxonomy) {
    std::vector<int> ids;
    for (const qc::LabelNode& n : taxonomy.nodes) ids.push_back(n.id);
    if (ids != ckpt.taxonomy_ids)
        throw qc::ValidationError(
            "taxonomy does not match the one the checkpoint was trained on");
    return taxonomy;
}

int cmd_stats(const std::string& clicks_path, const std::string& taxonomy_path) {
    std::vector<qc::ClickSample> samples;
    if (taxonomy_path.empty()) {
        samples = qc::load_clicks(clicks_path, nullptr);
    } else {
        qc::Taxonomy taxonomy = qc::load_taxonomy(taxonomy_path);
        samples = qc::load_clicks(clicks_path, taxonomy);
    }
    std::cout << qc::stats_to_json(qc::compute_stats(samples)) << "\n";
    return 0;
}

int cmd_synth(const GlobalOpts& g, std::size_t labels, std::size_t queries,
              double tail_fraction, std::size_t probe_per_leaf, long long seed) {
    ensure_dir(g.out_dir);
    qc::SyntheticCorpus corpus = qc::generate_synthetic(
        labels, queries, tail_fraction, static_cast<std::uint64_t>(seed));
    qc::save_taxonomy(corpus.taxonomy, g.out_dir + "/taxonomy.jsonl");
    qc::save_clicks(corpus.samples, g.out_dir + "/clicks.jsonl");
    qc::save_knowledge(corpus.knowledge, g.out_dir + "/knowledge.jsonl");
    {
        std::ofstream out(g.out_dir + "/tail_leaves.json");
        out << json(corpus.tail_leaf_ids).dump() << "\n";
    }
    if (probe_per_leaf > 0) {
        std::vector<qc::ClickSample> probes = qc::generate_probe_samples(
            corpus, probe_per_leaf, static_cast<std::uint64_t>(seed) + 1);
        qc::save_clicks(probes, g.out_dir + "/probe.jsonl");
    }
    std::cerr << "wrote synthetic corpus: " << corpus.taxonomy.num_leaves()
              << " leaves, " << corpus.samples.size() << " queries, "
              << corpus.knowledge.size() << " knowledge records\n";
    return 0;
}

int cmd_build_graph(const GlobalOpts& g, const std::vector<std::string>& overrides,
                    const CorpusArgs& corpus_args, const std::string& checkpoint_path,
                    const std::string& out_path) {
    qc::TrainConfig config = resolve_config(g, overrides);
    echo_config(config);
    qc::Taxonomy taxonomy = qc::load_taxonomy(corpus_args.taxonomy_path);
    std::vector<qc::ClickSample> samples = qc::load_clicks(corpus_args.clicks_path, taxonomy);

    // The similarity graph compares mean-pooled embedding rows of the label
    // sequences; the table comes from a checkpoint when given, otherwise from
    // a freshly initialized model.
    qc::Matrix leaf_embs;
    if (!checkpoint_path.empty()) {
        qc::Checkpoint ckpt = qc::load_checkpoint(checkpoint_path);
        checkpoint_taxonomy(ckpt, taxonomy);
        leaf_embs = qc::pooled_leaf_features(ckpt.model, taxonomy, ckpt.vocab);
    } else {
        std::vector<qc::KnowledgeRecord> knowledge;
        if (!corpus_args.knowledge_path.empty())
            knowledge = qc::load_knowledge(corpus_args.knowledge_path);
        qc::Vocab vocab = qc::build_vocab(qc::vocab_texts(samples, taxonomy, knowledge),
                                          qc::token_mode_from_string(g.token_mode));
        qc::ModelState flat = qc::init_model(config, vocab.size(), taxonomy);
        leaf_embs = qc::pooled_leaf_features(flat, taxonomy, vocab);
    }
    qc::GraphBundle bundle =
        qc::build_graph_bundle(samples, taxonomy, leaf_embs, config.alpha_threshold,
                               config.beta_threshold, config.graph_toggles());
    qc::save_graph_bundle(bundle, out_path);
    std::cerr << "wrote graph bundle to " << out_path << "\n";
    return 0;
}

int cmd_train(const GlobalOpts& g, const std::vector<std::string>& overrides,
              const CorpusArgs& corpus_args) {
    qc::TrainConfig config = resolve_config(g, overrides);
    echo_config(config);
    ensure_dir(g.out_dir);
    LoadedCorpus corpus = load_corpus(corpus_args, config.seed);
    std::cerr << "split: " << corpus.split.train.size() << " train / "
              << corpus.split.val.size() << " val / " << corpus.split.test.size()
              << " test\n";

    std::ofstream metrics(g.out_dir + "/metrics.jsonl");
    if (!metrics) throw qc::RuntimeFault("cannot write " + g.out_dir + "/metrics.jsonl");
    qc::FitResult fit = qc::fit(config, corpus.split.train, corpus.split.val,
                                corpus.taxonomy, corpus.knowledge,
                                qc::token_mode_from_string(g.token_mode), &metrics,
                                &std::cerr);

    qc::save_checkpoint(fit.training.model, fit.vocab, corpus.taxonomy,
                        g.out_dir + "/final.ckpt");
    qc::save_checkpoint(fit.training.best_model, fit.vocab, corpus.taxonomy,
                        g.out_dir + "/best.ckpt");
    if (fit.has_bundle) qc::save_graph_bundle(fit.bundle, g.out_dir + "/graph.bin");
    {
        std::ofstream cfg(g.out_dir + "/config_resolved.cfg");
        cfg << qc::config_to_string(config);
    }
    qc::save_clicks(corpus.split.train, g.out_dir + "/split_train.jsonl");
    qc::save_clicks(corpus.split.val, g.out_dir + "/split_val.jsonl");
    qc::save_clicks(corpus.split.test, g.out_dir + "/split_test.jsonl");

    json summary;
    summary["epochs"] = config.epochs;
    summary["best_epoch"] = fit.training.best_epoch;
    if (!fit.training.log.empty()) {
        summary["final_train_loss"] = fit.training.log.back().train_loss;
        summary["final_val"] = report_json(fit.training.log.back().val);
    }
    std::cout << summary.dump() << "\n";
    return 0;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& taxonomy_path,
             const std::string& clicks_path, const std::string& graph_path,
             const std::string& train_clicks_path, double threshold,
             const std::string& per_label_path) {
    qc::Checkpoint ckpt = qc::load_checkpoint(checkpoint_path);
    qc::Taxonomy taxonomy = qc::load_taxonomy(taxonomy_path);
    checkpoint_taxonomy(ckpt, taxonomy);
    std::vector<qc::ClickSample> eval_samples = qc::load_clicks(clicks_path, taxonomy);

    qc::GraphBundle bundle;
    const qc::GraphBundle* bundle_ptr = nullptr;
    if (ckpt.model.config.use_structure) {
        if (graph_path.empty())
            throw qc::ValidationError("checkpoint uses structure; --graph is required");
        bundle = qc::load_graph_bundle(graph_path);
        bundle_ptr = &bundle;
    }
    std::map<int, long> train_clicks;
    if (!train_clicks_path.empty()) {
        train_clicks = qc::count_label_clicks(qc::load_clicks(train_clicks_path, taxonomy));
    } else {
        train_clicks = qc::count_label_clicks(eval_samples);
        std::cerr << "note: no --train-clicks given; head/tail buckets use the "
                     "evaluation file's click counts\n";
    }
    qc::MetricsReport r = qc::evaluate_model(ckpt.model, bundle_ptr, eval_samples,
                                             taxonomy, ckpt.vocab, train_clicks, threshold);
    if (!per_label_path.empty()) {
        std::ofstream out(per_label_path);
        if (!out) throw qc::RuntimeFault("cannot write " + per_label_path);
        out << qc::per_label_tsv(r);
    }
    std::cout << qc::report_to_json(r) << "\n";
    return 0;
}

int cmd_export_cache(const std::string& checkpoint_path, const std::string& taxonomy_path,
                     const std::string& graph_path, const std::string& out_path) {
    qc::Checkpoint ckpt = qc::load_checkpoint(checkpoint_path);
    qc::Taxonomy taxonomy = qc::load_taxonomy(taxonomy_path);
    checkpoint_taxonomy(ckpt, taxonomy);
    qc::GraphBundle bundle;
    const qc::GraphBundle* bundle_ptr = nullptr;
    if (ckpt.model.config.use_structure) {
        if (graph_path.empty())
            throw qc::ValidationError("checkpoint uses structure; --graph is required");
        bundle = qc::load_graph_bundle(graph_path);
        bundle_ptr = &bundle;
    }
    qc::LeafCache cache = qc::export_cache(ckpt.model, bundle_ptr, taxonomy, ckpt.vocab);
    qc::save_leaf_cache(cache, out_path);
    std::cerr << "wrote leaf cache (" << cache.leaf_ids.size() << " leaves, d="
              << cache.d << ") to " << out_path << "\n";
    return 0;
}

int cmd_predict(const std::string& cache_path, const std::string& query, double threshold) {
    qc::LeafCache cache = qc::load_leaf_cache(cache_path);
    json labels = json::array();
    for (const qc::ScoredLabel& s : qc::predict_from_cache(query, cache, threshold))
        labels.push_back({{"id", s.id}, {"name", s.name}, {"score", s.score}});
    std::cout << json{{"labels", labels}}.dump() << "\n";
    return 0;
}

int cmd_serve(const std::string& cache_path, const std::string& transport, int port,
              double threshold) {
    qc::LeafCache cache = qc::load_leaf_cache(cache_path);
    if (transport == "stdio") {
        std::cerr << "serving on stdio\n";
        qc::serve_lines(cache, std::cin, std::cout, threshold);
        return 0;
    }
    if (transport == "tcp") {
        qc::serve_tcp(cache, port, threshold, std::cerr);
        return 0;
    }
    throw qc::ConfigError("--transport must be stdio or tcp");
}

int cmd_batch_predict(const std::string& cache_path, const std::string& in_path,
                      const std::string& out_path, double threshold) {
    qc::LeafCache cache = qc::load_leaf_cache(cache_path);
    qc::batch_predict(cache, in_path, out_path, threshold);
    return 0;
}

int cmd_semi_targets(const std::string& checkpoint_path, const std::string& taxonomy_path,
                     const std::string& clicks_path, const std::string& knowledge_path,
                     std::optional<double> tau_opt, const std::string& out_path) {
    qc::Checkpoint ckpt = qc::load_checkpoint(checkpoint_path);
    qc::Taxonomy taxonomy = qc::load_taxonomy(taxonomy_path);
    checkpoint_taxonomy(ckpt, taxonomy);
    std::vector<qc::ClickSample> samples = qc::load_clicks(clicks_path, taxonomy);
    std::vector<qc::KnowledgeRecord> knowledge;
    if (!knowledge_path.empty()) knowledge = qc::load_knowledge(knowledge_path);
    double tau = tau_opt ? *tau_opt : ckpt.model.config.tau_end;

    // Label embeddings straight from the encoder; the GCN plays no part in
    // semi-target generation.
    qc::ModelState flat = ckpt.model;
    flat.config.use_structure = false;
    flat.config.use_semi = true;
    qc::LabelState ls = qc::compute_label_state(flat, nullptr, taxonomy, ckpt.vocab);
    qc::Matrix leaf_embs = qc::extract_leaf(ls.x, taxonomy);
    std::map<int, qc::KnowledgeRecord> kmap = qc::knowledge_by_id(knowledge);

    std::ofstream out(out_path);
    if (!out) throw qc::RuntimeFault("cannot write " + out_path);
    for (const qc::ClickSample& sample : samples) {
        std::vector<const qc::ClickSample*> batch{&sample};
        qc::BatchTargets targets = qc::compute_batch_targets(
            batch, flat, leaf_embs, ckpt.vocab, taxonomy, kmap, tau);
        json entries = json::array();
        for (const auto& [row, score] : targets.semi[0].entries)
            entries.push_back({taxonomy.leaf_index[row], score});
        out << json{{"query", sample.query_text}, {"targets", entries}}.dump() << "\n";
    }
    std::cerr << "wrote semi-target dump for " << samples.size() << " queries to "
              << out_path << "\n";
    return 0;
}

int cmd_ablate(const GlobalOpts& g, const std::vector<std::string>& overrides,
               const CorpusArgs& corpus_args, const std::string& eval_set_path,
               const std::string& eval_extra_path) {
    qc::TrainConfig base = resolve_config(g, overrides);
    echo_config(base);
    ensure_dir(g.out_dir);
    LoadedCorpus corpus = load_corpus(corpus_args, base.seed);
    std::map<int, long> train_clicks = qc::count_label_clicks(corpus.split.train);

    // The comparison set defaults to the held-out test split. Click logs
    // under-label queries about clickless leaves, so --eval-set swaps in an
    // audited query file (e.g. probes covering every leaf) and --eval-extra
    // appends one to the split instead.
    std::vector<qc::ClickSample> eval_samples;
    if (!eval_set_path.empty()) {
        eval_samples = qc::load_clicks(eval_set_path, corpus.taxonomy);
    } else {
        eval_samples = corpus.split.test;
    }
    if (!eval_extra_path.empty()) {
        std::vector<qc::ClickSample> extra =
            qc::load_clicks(eval_extra_path, corpus.taxonomy);
        eval_samples.insert(eval_samples.end(), extra.begin(), extra.end());
    }

    std::ostringstream table;
    table << "variant\tmicro_p\tmicro_r\tmicro_f1\tmacro_p\tmacro_r\tmacro_f1"
          << "\thead_p\thead_r\thead_f1\ttail_p\ttail_r\ttail_f1\n";
    for (const auto& [name, config] : qc::ablation_variants(base)) {
        std::cerr << "=== variant: " << name << " ===\n";
        qc::FitResult fit = qc::fit(config, corpus.split.train, corpus.split.val,
                                    corpus.taxonomy, corpus.knowledge,
                                    qc::token_mode_from_string(g.token_mode), nullptr,
                                    &std::cerr);
        qc::MetricsReport r = qc::evaluate_model(
            fit.training.best_model, fit.has_bundle ? &fit.bundle : nullptr,
            eval_samples, corpus.taxonomy, fit.vocab, train_clicks);
        table << name << metric_row(r) << "\n";
    }
    std::string rendered = table.str();
    {
        std::ofstream out(g.out_dir + "/ablation.tsv");
        if (!out) throw qc::RuntimeFault("cannot write " + g.out_dir + "/ablation.tsv");
        out << rendered;
    }
    std::cout << rendered;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"query classification over a label taxonomy"};
    app.require_subcommand(1);

    GlobalOpts g;
    app.add_option("--seed", g.seed, "override the config seed");
    app.add_option("--config", g.config_path, "flat key=value config file");
    app.add_option("--out-dir", g.out_dir, "output directory (default .)");
    app.add_option("--token-mode", g.token_mode, "word or char (default word)")
        ->check(CLI::IsMember({"word", "char"}));

    std::vector<std::string> overrides;
    app.add_option("--set", overrides, "override a config key, KEY=VALUE, repeatable");

    // stats
    std::string stats_clicks, stats_taxonomy;
    CLI::App* stats = app.add_subcommand("stats", "dataset statistics as JSON");
    stats->add_option("--clicks", stats_clicks, "click-log JSONL")->required();
    stats->add_option("--taxonomy", stats_taxonomy, "taxonomy JSONL (enables id checks)");

    // synth
    std::size_t synth_labels = 50, synth_queries = 5000, synth_probe = 0;
    double synth_tail = 0.0;
    long long synth_seed = 42;
    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic corpus");
    synth->add_option("--labels", synth_labels, "number of leaf labels");
    synth->add_option("--queries", synth_queries, "number of click samples");
    synth->add_option("--tail-fraction", synth_tail, "fraction of clickless tail leaves");
    synth->add_option("--probe", synth_probe, "also write probe.jsonl, N queries per leaf");
    synth->add_option("--synth-seed", synth_seed, "generator seed");

    // build-graph
    CorpusArgs graph_corpus;
    std::string graph_ckpt, graph_out;
    CLI::App* build_graph = app.add_subcommand("build-graph", "build the relation graphs");
    build_graph->add_option("--taxonomy", graph_corpus.taxonomy_path)->required();
    build_graph->add_option("--clicks", graph_corpus.clicks_path)->required();
    build_graph->add_option("--knowledge", graph_corpus.knowledge_path);
    build_graph->add_option("--checkpoint", graph_ckpt,
                            "take label embeddings from this checkpoint");
    build_graph->add_option("--out", graph_out, "bundle output path")->required();

    // train
    CorpusArgs train_corpus;
    CLI::App* train = app.add_subcommand("train", "train a model");
    train->add_option("--taxonomy", train_corpus.taxonomy_path)->required();
    train->add_option("--clicks", train_corpus.clicks_path)->required();
    train->add_option("--knowledge", train_corpus.knowledge_path);
    train->add_option("--split", train_corpus.split, "train,val,test ratios");

    // eval
    std::string eval_ckpt, eval_taxonomy, eval_clicks, eval_graph, eval_train_clicks,
        eval_per_label;
    double eval_threshold = 0.5;
    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    eval->add_option("--checkpoint", eval_ckpt)->required();
    eval->add_option("--taxonomy", eval_taxonomy)->required();
    eval->add_option("--clicks", eval_clicks, "evaluation samples")->required();
    eval->add_option("--graph", eval_graph, "graph bundle (required with structure)");
    eval->add_option("--train-clicks", eval_train_clicks,
                     "training clicks for head/tail buckets");
    eval->add_option("--threshold", eval_threshold, "decision threshold");
    eval->add_option("--per-label", eval_per_label, "write per-label TSV here");

    // export-cache
    std::string ec_ckpt, ec_taxonomy, ec_graph, ec_out;
    CLI::App* export_cache = app.add_subcommand("export-cache", "export the serving cache");
    export_cache->add_option("--checkpoint", ec_ckpt)->required();
    export_cache->add_option("--taxonomy", ec_taxonomy)->required();
    export_cache->add_option("--graph", ec_graph);
    export_cache->add_option("--out", ec_out)->required();

    // predict
    std::string pr_cache, pr_query;
    double pr_threshold = 0.5;
    CLI::App* predict = app.add_subcommand("predict", "classify one query from a cache");
    predict->add_option("--cache", pr_cache)->required();
    predict->add_option("--query", pr_query)->required();
    predict->add_option("--threshold", pr_threshold);

    // serve
    std::string sv_cache, sv_transport = "stdio";
    int sv_port = 0;
    double sv_threshold = 0.5;
    CLI::App* serve = app.add_subcommand("serve", "serve predictions from a cache");
    serve->add_option("--cache", sv_cache)->required();
    serve->add_option("--transport", sv_transport, "stdio or tcp")
        ->check(CLI::IsMember({"stdio", "tcp"}));
    serve->add_option("--port", sv_port, "tcp port (0 = ephemeral)");
    serve->add_option("--threshold", sv_threshold);

    // batch-predict
    std::string bp_cache, bp_in, bp_out;
    double bp_threshold = 0.5;
    CLI::App* batch = app.add_subcommand("batch-predict", "classify a JSONL of queries");
    batch->add_option("--cache", bp_cache)->required();
    batch->add_option("--in", bp_in)->required();
    batch->add_option("--out", bp_out)->required();
    batch->add_option("--threshold", bp_threshold);

    // semi-targets
    std::string st_ckpt, st_taxonomy, st_clicks, st_knowledge, st_out;
    std::optional<double> st_tau;
    CLI::App* semi = app.add_subcommand("semi-targets", "dump semi-supervised targets");
    semi->add_option("--checkpoint", st_ckpt)->required();
    semi->add_option("--taxonomy", st_taxonomy)->required();
    semi->add_option("--clicks", st_clicks)->required();
    semi->add_option("--knowledge", st_knowledge);
    semi->add_option("--tau", st_tau, "threshold (default: config tau_end)");
    semi->add_option("--out", st_out)->required();

    // ablate
    CorpusArgs ablate_corpus;
    std::string ablate_eval_set, ablate_eval_extra;
    CLI::App* ablate = app.add_subcommand("ablate", "run the module-removal variants");
    ablate->add_option("--taxonomy", ablate_corpus.taxonomy_path)->required();
    ablate->add_option("--clicks", ablate_corpus.clicks_path)->required();
    ablate->add_option("--knowledge", ablate_corpus.knowledge_path);
    ablate->add_option("--split", ablate_corpus.split, "train,val,test ratios");
    ablate->add_option("--eval-set", ablate_eval_set,
                       "labeled queries evaluated instead of the test split");
    ablate->add_option("--eval-extra", ablate_eval_extra,
                       "extra labeled queries appended to the evaluation set");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (app.got_subcommand(stats)) return cmd_stats(stats_clicks, stats_taxonomy);
        if (app.got_subcommand(synth))
            return cmd_synth(g, synth_labels, synth_queries, synth_tail, synth_probe,
                             g.seed ? *g.seed : synth_seed);
        if (app.got_subcommand(build_graph))
            return cmd_build_graph(g, overrides, graph_corpus, graph_ckpt, graph_out);
        if (app.got_subcommand(train)) return cmd_train(g, overrides, train_corpus);
        if (app.got_subcommand(eval))
            return cmd_eval(eval_ckpt, eval_taxonomy, eval_clicks, eval_graph,
                            eval_train_clicks, eval_threshold, eval_per_label);
        if (app.got_subcommand(export_cache))
            return cmd_export_cache(ec_ckpt, ec_taxonomy, ec_graph, ec_out);
        if (app.got_subcommand(predict))
            return cmd_predict(pr_cache, pr_query, pr_threshold);
        if (app.got_subcommand(serve))
            return cmd_serve(sv_cache, sv_transport, sv_port, sv_threshold);
        if (app.got_subcommand(batch))
            return cmd_batch_predict(bp_cache, bp_in, bp_out, bp_threshold);
        if (app.got_subcommand(semi))
            return cmd_semi_targets(st_ckpt, st_taxonomy, st_clicks, st_knowledge, st_tau,
                                    st_out);
        if (app.got_subcommand(ablate))
            return cmd_ablate(g, overrides, ablate_corpus, ablate_eval_set,
                              ablate_eval_extra);
        std::cerr << "no subcommand given\n";
        return 1;
    } catch (const qc::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const qc::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const qc::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << "\n";
        return 2;
    }
}
