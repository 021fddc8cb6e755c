#include "qc/label_graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "qc/binio.hpp"

namespace qc {

long CooccurrenceCounts::pair(int a, int b) const {
    if (a > b) std::swap(a, b);
    auto it = pair_counts.find({a, b});
    return it == pair_counts.end() ? 0 : it->second;
}

long CooccurrenceCounts::count(int id) const {
    auto it = label_counts.find(id);
    return it == label_counts.end() ? 0 : it->second;
}

CooccurrenceCounts count_cooccurrence(const std::vector<ClickSample>& samples,
                                      const Taxonomy& taxonomy) {
    CooccurrenceCounts counts;
    for (const ClickSample& s : samples) {
        for (std::size_t i = 0; i < s.clicked_leaf_ids.size(); ++i) {
            int a = s.clicked_leaf_ids[i];
            if (!taxonomy.is_leaf_id(a))
                throw ValidationError("clicked label " + std::to_string(a) +
                                      " is not a leaf");
            counts.label_counts[a] += 1;
            for (std::size_t j = i + 1; j < s.clicked_leaf_ids.size(); ++j) {
                int b = s.clicked_leaf_ids[j];
                counts.pair_counts[{std::min(a, b), std::max(a, b)}] += 1;
            }
        }
    }
    return counts;
}

Matrix build_cooccurrence(const CooccurrenceCounts& counts, const Taxonomy& taxonomy,
                          double alpha_threshold) {
    if (alpha_threshold < 0.0 || alpha_threshold > 1.0)
        throw ConfigError("alpha_threshold must lie in [0, 1]");
    std::size_t n = taxonomy.num_leaves();
    Matrix a(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        long ni = counts.count(taxonomy.leaf_index[i]);
        if (ni == 0) continue;
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            long nij = counts.pair(taxonomy.leaf_index[i], taxonomy.leaf_index[j]);
            if (nij == 0) continue;
            double v = static_cast<double>(nij) / static_cast<double>(ni);
            if (v >= alpha_threshold) a(i, j) = v;
        }
    }
    return a;
}

Matrix build_similarity(const Matrix& label_embeddings, double beta_threshold) {
    if (beta_threshold < 0.0 || beta_threshold > 1.0)
        throw ConfigError("beta_threshold must lie in [0, 1]");
    std::size_t n = label_embeddings.rows;
    std::vector<double> norms(n);
    for (std::size_t i = 0; i < n; ++i) {
        norms[i] = norm(label_embeddings.row(i));
        if (norms[i] == 0.0)
            throw RuntimeFault("label embedding row " + std::to_string(i) +
                               " has zero norm; cosine undefined");
    }
    Matrix a(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double v = std::clamp(
                dot(label_embeddings.row(i), label_embeddings.row(j)) /
                    (norms[i] * norms[j]),
                -1.0, 1.0);
            if (v >= beta_threshold) {
                a(i, j) = v;
                a(j, i) = v;
            }
        }
    }
    return a;
}

std::map<int, long> propagate_clicks(const Taxonomy& taxonomy,
                                     const std::map<int, long>& leaf_clicks) {
    std::map<int, long> clicks;
    for (int id : taxonomy.leaf_index) {
        auto it = leaf_clicks.find(id);
        clicks[id] = it == leaf_clicks.end() ? 0 : it->second;
    }
    // Children precede parents when visiting deepest levels first.
    std::vector<int> internal;
    for (const LabelNode& n : taxonomy.nodes)
        if (!n.is_leaf) internal.push_back(n.id);
    std::sort(internal.begin(), internal.end(), [&](int a, int b) {
        return taxonomy.node(a).level > taxonomy.node(b).level;
    });
    for (int id : internal) {
        long sum = 0;
        for (int child : taxonomy.children.at(id)) sum += clicks[child];
        clicks[id] = sum;
    }
    return clicks;
}

Matrix build_hierarchy(const Taxonomy& taxonomy, const std::map<int, long>& leaf_clicks) {
    std::size_t n = taxonomy.num_all();
    Matrix a(n, n);
    std::map<int, long> clicks = propagate_clicks(taxonomy, leaf_clicks);
    for (const auto& [parent, kids] : taxonomy.children) {
        long total = 0;
        for (int child : kids) total += clicks[child];
        double uniform = 1.0 / static_cast<double>(kids.size());
        std::size_t prow = taxonomy.all_row.at(parent);
        for (int child : kids) {
            double share =
                total > 0 ? static_cast<double>(clicks[child]) / static_cast<double>(total)
                          : 0.0;
            a(prow, taxonomy.all_row.at(child)) = std::max(uniform, share);
        }
    }
    return a;
}

Matrix fuse_graphs(const Matrix& a_coo, const Matrix& a_sim, const Matrix& a_hier,
                   const Taxonomy& taxonomy) {
    std::size_t nl = taxonomy.num_leaves();
    std::size_t na = taxonomy.num_all();
    if (a_coo.rows != nl || a_coo.cols != nl || a_sim.rows != nl || a_sim.cols != nl)
        throw RuntimeFault("fuse_graphs: leaf graphs must be |C| x |C|");
    if (a_hier.rows != na || a_hier.cols != na)
        throw RuntimeFault("fuse_graphs: hierarchy graph must be |C'| x |C'|");

    Matrix a = a_hier;
    std::size_t off = taxonomy.leaf_offset();
    for (std::size_t i = 0; i < nl; ++i)
        for (std::size_t j = 0; j < nl; ++j)
            a(off + i, off + j) = 0.5 * (a_coo(i, j) + a_sim(i, j));

    for (std::size_t i = 0; i < na; ++i)
        for (std::size_t j = i + 1; j < na; ++j) {
            double m = std::max(a(i, j), a(j, i));
            a(i, j) = m;
            a(j, i) = m;
        }
    return a;
}

Matrix normalize_adjacency(const Matrix& a) {
    if (a.rows != a.cols) throw RuntimeFault("normalize_adjacency: matrix not square");
    std::size_t n = a.rows;
    std::vector<double> inv_sqrt(n);
    for (std::size_t i = 0; i < n; ++i) {
        double deg = 1.0;  // the +I self-loop
        for (std::size_t j = 0; j < n; ++j) deg += a(i, j);
        inv_sqrt[i] = 1.0 / std::sqrt(deg);
    }
    Matrix out(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double v = a(i, j) + (i == j ? 1.0 : 0.0);
            if (v != 0.0) out(i, j) = inv_sqrt[i] * v * inv_sqrt[j];
        }
    return out;
}

GcnParams init_gcn(std::size_t d, std::size_t d_g, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-0.05, 0.05);
    GcnParams p;
    p.w1 = Matrix(d, d_g);
    for (double& v : p.w1.data) v = dist(rng);
    p.b1 = Vector(d_g, 0.0);
    p.w2 = Matrix(d_g, d);
    for (double& v : p.w2.data) v = dist(rng);
    p.b2 = Vector(d, 0.0);
    return p;
}

GcnGrads zero_gcn_grads(const GcnParams& params) {
    GcnGrads g;
    g.w1 = Matrix(params.w1.rows, params.w1.cols);
    g.b1 = Vector(params.b1.size(), 0.0);
    g.w2 = Matrix(params.w2.rows, params.w2.cols);
    g.b2 = Vector(params.b2.size(), 0.0);
    return g;
}

Matrix gcn_forward(const Matrix& a_hat, const Matrix& x, const GcnParams& params,
                   GcnTrace* trace) {
    if (x.cols != params.w1.rows)
        throw RuntimeFault("gcn_forward: feature width " + std::to_string(x.cols) +
                           " does not match W1 rows " + std::to_string(params.w1.rows));
    if (a_hat.rows != a_hat.cols || a_hat.rows != x.rows)
        throw RuntimeFault("gcn_forward: adjacency/features shape mismatch");

    Matrix prop_in = matmul(a_hat, x);
    Matrix hidden = matmul(prop_in, params.w1);
    for (std::size_t i = 0; i < hidden.rows; ++i)
        for (std::size_t j = 0; j < hidden.cols; ++j) {
            double v = hidden(i, j) + params.b1[j];
            hidden(i, j) = v > 0.0 ? v : 0.0;
        }
    Matrix prop_mid = matmul(a_hat, hidden);
    Matrix out = matmul(prop_mid, params.w2);
    for (std::size_t i = 0; i < out.rows; ++i)
        for (std::size_t j = 0; j < out.cols; ++j) out(i, j) += params.b2[j];

    if (trace) {
        trace->propagated_in = std::move(prop_in);
        trace->hidden = std::move(hidden);
        trace->propagated_mid = std::move(prop_mid);
    }
    return out;
}

void gcn_backward(const Matrix& a_hat, const Matrix& x, const GcnParams& params,
                  const GcnTrace& trace, const Matrix& upstream_grad, GcnGrads& grads,
                  Matrix& x_grad) {
    if (!upstream_grad.same_shape(Matrix(x.rows, params.b2.size())))
        throw RuntimeFault("gcn_backward: upstream gradient shape mismatch");

    // out = prop_mid * W2 + b2
    Matrix d_w2 = matmul(transpose(trace.propagated_mid), upstream_grad);
    for (std::size_t i = 0; i < d_w2.data.size(); ++i) grads.w2.data[i] += d_w2.data[i];
    for (std::size_t j = 0; j < params.b2.size(); ++j)
        for (std::size_t i = 0; i < upstream_grad.rows; ++i)
            grads.b2[j] += upstream_grad(i, j);

    Matrix d_prop_mid = matmul(upstream_grad, transpose(params.w2));
    // prop_mid = A-hat * hidden
    Matrix d_hidden = matmul(transpose(a_hat), d_prop_mid);
    // hidden = relu(prop_in * W1 + b1)
    for (std::size_t i = 0; i < d_hidden.rows; ++i)
        for (std::size_t j = 0; j < d_hidden.cols; ++j)
            if (trace.hidden(i, j) <= 0.0) d_hidden(i, j) = 0.0;

    Matrix d_w1 = matmul(transpose(trace.propagated_in), d_hidden);
    for (std::size_t i = 0; i < d_w1.data.size(); ++i) grads.w1.data[i] += d_w1.data[i];
    for (std::size_t j = 0; j < params.b1.size(); ++j)
        for (std::size_t i = 0; i < d_hidden.rows; ++i) grads.b1[j] += d_hidden(i, j);

    Matrix d_prop_in = matmul(d_hidden, transpose(params.w1));
    x_grad = matmul(transpose(a_hat), d_prop_in);
}

Matrix extract_leaf(const Matrix& h, const Taxonomy& taxonomy) {
    if (h.rows != taxonomy.num_all())
        throw RuntimeFault("extract_leaf: row count does not match taxonomy");
    std::size_t off = taxonomy.leaf_offset();
    std::size_t nl = taxonomy.num_leaves();
    Matrix out(nl, h.cols);
    std::memcpy(out.data.data(), h.data.data() + off * h.cols,
                nl * h.cols * sizeof(double));
    return out;
}

namespace {

void fuse_into(GraphBundle& bundle, const Taxonomy& taxonomy,
               const GraphToggles& toggles) {
    std::size_t nl = taxonomy.num_leaves();
    std::size_t na = taxonomy.num_all();
    Matrix hier = toggles.use_hier ? bundle.hier : Matrix(na, na);
    Matrix leaf_block(nl, nl);
    int active = (toggles.use_coo ? 1 : 0) + (toggles.use_sim ? 1 : 0);
    if (active > 0) {
        double w = 1.0 / static_cast<double>(active);
        for (std::size_t i = 0; i < nl * nl; ++i) {
            double v = 0.0;
            if (toggles.use_coo) v += bundle.coo.data[i];
            if (toggles.use_sim) v += bundle.sim.data[i];
            leaf_block.data[i] = w * v;
        }
        // Embed via the same fusion path: feed the pre-weighted block twice so
        // the 1/2 average reproduces it unchanged.
        bundle.fused = fuse_graphs(leaf_block, leaf_block, hier, taxonomy);
    } else {
        Matrix zero(nl, nl);
        bundle.fused = fuse_graphs(zero, zero, hier, taxonomy);
    }
    bundle.norm = normalize_adjacency(bundle.fused);
}

}  // namespace

GraphBundle build_graph_bundle(const std::vector<ClickSample>& samples,
                               const Taxonomy& taxonomy, const Matrix& leaf_embeddings,
                               double alpha_threshold, double beta_threshold,
                               const GraphToggles& toggles) {
    GraphBundle bundle;
    bundle.alpha = alpha_threshold;
    bundle.beta = beta_threshold;
    CooccurrenceCounts counts = count_cooccurrence(samples, taxonomy);
    bundle.coo = build_cooccurrence(counts, taxonomy, alpha_threshold);
    bundle.sim = build_similarity(leaf_embeddings, beta_threshold);
    std::map<int, long> leaf_clicks(counts.label_counts.begin(),
                                    counts.label_counts.end());
    bundle.hier = build_hierarchy(taxonomy, leaf_clicks);
    fuse_into(bundle, taxonomy, toggles);
    return bundle;
}

void refuse_bundle(GraphBundle& bundle, const Taxonomy& taxonomy,
                   const GraphToggles& toggles) {
    fuse_into(bundle, taxonomy, toggles);
}

namespace {

using binio::read_f64;
using binio::read_u64;
using binio::write_f64;
using binio::write_u64;

constexpr char kBundleMagic[8] = {'Q', 'C', 'G', 'R', 'A', 'P', 'H', '\0'};

// Coordinate triplets sorted by (row, col); row-major scan gives that order.
void write_matrix(std::ofstream& out, const Matrix& m) {
    write_u64(out, m.rows);
    write_u64(out, m.cols);
    std::uint64_t nnz = 0;
    for (double v : m.data)
        if (v != 0.0) ++nnz;
    write_u64(out, nnz);
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < m.cols; ++j)
            if (m(i, j) != 0.0) {
                write_u64(out, i);
                write_u64(out, j);
                write_f64(out, m(i, j));
            }
}

Matrix read_matrix(std::ifstream& in) {
    std::uint64_t rows = read_u64(in);
    std::uint64_t cols = read_u64(in);
    std::uint64_t nnz = read_u64(in);
    Matrix m(rows, cols);
    for (std::uint64_t k = 0; k < nnz; ++k) {
        std::uint64_t i = read_u64(in);
        std::uint64_t j = read_u64(in);
        double v = read_f64(in);
        if (i >= rows || j >= cols) throw ParseError("graph file: triplet out of range");
        m(i, j) = v;
    }
    return m;
}

}  // namespace

void save_graph_bundle(const GraphBundle& bundle, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw RuntimeFault("cannot write " + path);
    out.write(kBundleMagic, sizeof(kBundleMagic));
    write_u64(out, bundle.version);
    write_u64(out, bundle.coo.rows);    // |C|
    write_u64(out, bundle.hier.rows);   // |C'|
    write_f64(out, bundle.alpha);
    write_f64(out, bundle.beta);
    write_matrix(out, bundle.coo);
    write_matrix(out, bundle.sim);
    write_matrix(out, bundle.hier);
    write_matrix(out, bundle.fused);
    write_matrix(out, bundle.norm);
}

GraphBundle load_graph_bundle(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kBundleMagic, sizeof(magic)) != 0)
        throw ParseError(path + ": not a graph bundle file");
    GraphBundle bundle;
    bundle.version = static_cast<std::uint32_t>(read_u64(in));
    if (bundle.version != 1)
        throw RuntimeFault(path + ": unsupported graph bundle version " +
                           std::to_string(bundle.version));
    read_u64(in);  // |C|, implied by the matrices
    read_u64(in);  // |C'|
    bundle.alpha = read_f64(in);
    bundle.beta = read_f64(in);
    bundle.coo = read_matrix(in);
    bundle.sim = read_matrix(in);
    bundle.hier = read_matrix(in);
    bundle.fused = read_matrix(in);
    bundle.norm = read_matrix(in);
    if (!in) throw ParseError(path + ": truncated graph bundle");
    return bundle;
}

}  // namespace qc
