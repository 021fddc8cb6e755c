#include "qc/serving_cache.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "qc/binio.hpp"
#include "qc/evaluator.hpp"

namespace qc {

LeafCache export_cache(const ModelState& model, const GraphBundle* bundle,
                       const Taxonomy& taxonomy, const Vocab& vocab) {
    LeafCache cache;
    cache.d = model.encoder.dim();
    cache.max_query_len = model.config.max_query_len;
    cache.leaf_ids = taxonomy.leaf_index;
    for (int id : taxonomy.leaf_index) cache.leaf_names.push_back(taxonomy.node(id).name);
    LabelState ls = compute_label_state(model, bundle, taxonomy, vocab);
    cache.h_leaf = std::move(ls.h_leaf);
    cache.bias = model.bias;
    cache.encoder = model.encoder;
    cache.vocab = vocab;
    if (!all_finite(cache.h_leaf.data) || !all_finite(cache.bias))
        throw RuntimeFault("export_cache: non-finite leaf representations");
    return cache;
}

namespace {

constexpr char kCacheMagic[8] = {'Q', 'C', 'C', 'A', 'C', 'H', 'E', '\0'};

void write_matrix_dense(std::ostream& out, const Matrix& m) {
    binio::write_u64(out, m.rows);
    binio::write_u64(out, m.cols);
    binio::write_f64_array(out, m.data.data(), m.data.size());
}

Matrix read_matrix_dense(std::istream& in) {
    std::uint64_t rows = binio::read_u64(in);
    std::uint64_t cols = binio::read_u64(in);
    Matrix m(rows, cols);
    binio::read_f64_array(in, m.data.data(), m.data.size());
    return m;
}

void write_vector_dense(std::ostream& out, const Vector& v) {
    binio::write_u64(out, v.size());
    binio::write_f64_array(out, v.data(), v.size());
}

Vector read_vector_dense(std::istream& in) {
    std::uint64_t n = binio::read_u64(in);
    Vector v(n, 0.0);
    binio::read_f64_array(in, v.data(), n);
    return v;
}

}  // namespace

void save_leaf_cache(const LeafCache& cache, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw RuntimeFault("cannot write " + path);
    out.write(kCacheMagic, sizeof(kCacheMagic));
    binio::write_u64(out, cache.version);
    binio::write_u64(out, cache.d);
    binio::write_u64(out, static_cast<std::uint64_t>(cache.max_query_len));
    binio::write_u64(out, cache.vocab.mode == TokenMode::Word ? 0 : 1);
    binio::write_u64(out, cache.leaf_ids.size());
    for (int id : cache.leaf_ids) binio::write_i64(out, id);
    for (const std::string& name : cache.leaf_names) binio::write_string(out, name);
    write_matrix_dense(out, cache.h_leaf);
    write_vector_dense(out, cache.bias);
    write_matrix_dense(out, cache.encoder.embedding);
    write_matrix_dense(out, cache.encoder.w1);
    write_vector_dense(out, cache.encoder.b1);
    write_matrix_dense(out, cache.encoder.w2);
    write_vector_dense(out, cache.encoder.b2);
    binio::write_u64(out, cache.vocab.size());
    std::vector<std::pair<int, std::string>> by_id;
    for (const auto& [token, id] : cache.vocab.token_to_id) by_id.emplace_back(id, token);
    std::sort(by_id.begin(), by_id.end());
    for (const auto& [id, token] : by_id) {
        binio::write_i64(out, id);
        binio::write_string(out, token);
    }
    if (!out) throw RuntimeFault("write failed for " + path);
}

LeafCache load_leaf_cache(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCacheMagic, sizeof(magic)) != 0)
        throw ParseError(path + ": not a leaf cache file");
    LeafCache cache;
    cache.version = static_cast<std::uint32_t>(binio::read_u64(in));
    if (cache.version != 1)
        throw RuntimeFault(path + ": unsupported cache version " +
                           std::to_string(cache.version));
    cache.d = binio::read_u64(in);
    cache.max_query_len = static_cast<int>(binio::read_u64(in));
    cache.vocab.mode = binio::read_u64(in) == 0 ? TokenMode::Word : TokenMode::Char;
    std::uint64_t n = binio::read_u64(in);
    cache.leaf_ids.resize(n);
    for (std::uint64_t i = 0; i < n; ++i)
        cache.leaf_ids[i] = static_cast<int>(binio::read_i64(in));
    cache.leaf_names.resize(n);
    for (std::uint64_t i = 0; i < n; ++i) cache.leaf_names[i] = binio::read_string(in);
    cache.h_leaf = read_matrix_dense(in);
    cache.bias = read_vector_dense(in);
    cache.encoder.embedding = read_matrix_dense(in);
    cache.encoder.w1 = read_matrix_dense(in);
    cache.encoder.b1 = read_vector_dense(in);
    cache.encoder.w2 = read_matrix_dense(in);
    cache.encoder.b2 = read_vector_dense(in);
    std::uint64_t vocab_count = binio::read_u64(in);
    for (std::uint64_t i = 0; i < vocab_count; ++i) {
        int id = static_cast<int>(binio::read_i64(in));
        cache.vocab.token_to_id[binio::read_string(in)] = id;
    }
    if (cache.h_leaf.rows != n || cache.bias.size() != n || cache.h_leaf.cols != cache.d)
        throw ParseError(path + ": inconsistent cache dimensions");
    return cache;
}

Vector score_from_cache(const std::string& query_text, const LeafCache& cache) {
    std::vector<int> ids = tokenize(query_text, cache.vocab,
                                    static_cast<std::size_t>(cache.max_query_len));
    Vector q = encode(ids, cache.encoder);
    return predict_scores(q, cache.h_leaf, cache.bias);
}

std::vector<ScoredLabel> predict_from_cache(const std::string& query_text,
                                            const LeafCache& cache, double threshold) {
    Vector scores = score_from_cache(query_text, cache);
    std::vector<ScoredLabel> out;
    for (std::size_t row : binarize(scores, threshold))
        out.push_back({cache.leaf_ids[row], cache.leaf_names[row], scores[row]});
    std::sort(out.begin(), out.end(), [](const ScoredLabel& a, const ScoredLabel& b) {
        return a.score != b.score ? a.score > b.score : a.id < b.id;
    });
    return out;
}

std::string handle_request(const LeafCache& cache, const std::string& request_line,
                           double default_threshold) {
    nlohmann::json response;
    try {
        nlohmann::json req = nlohmann::json::parse(request_line);
        if (!req.is_object() || !req.contains("query") || !req["query"].is_string())
            throw ValidationError("request must be an object with a string 'query'");
        double threshold = default_threshold;
        if (req.contains("threshold")) {
            if (!req["threshold"].is_number())
                throw ValidationError("'threshold' must be a number");
            threshold = req["threshold"].get<double>();
        }
        nlohmann::json labels = nlohmann::json::array();
        for (const ScoredLabel& s :
             predict_from_cache(req["query"].get<std::string>(), cache, threshold))
            labels.push_back({{"id", s.id}, {"name", s.name}, {"score", s.score}});
        response["labels"] = std::move(labels);
    } catch (const nlohmann::json::exception& e) {
        response = {{"error", std::string("bad request: ") + e.what()}};
    } catch (const std::exception& e) {
        response = {{"error", e.what()}};
    }
    return response.dump();
}

std::size_t serve_lines(const LeafCache& cache, std::istream& in, std::ostream& out,
                        double default_threshold) {
    std::size_t served = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        out << handle_request(cache, line, default_threshold) << "\n";
        out.flush();
        ++served;
    }
    return served;
}

namespace {

void handle_tcp_client(const LeafCache* cache, int client_fd, double threshold) {
    std::string buffer;
    char chunk[4096];
    for (;;) {
        ssize_t got = ::recv(client_fd, chunk, sizeof(chunk), 0);
        if (got <= 0) break;
        buffer.append(chunk, static_cast<std::size_t>(got));
        std::size_t nl;
        while ((nl = buffer.find('\n')) != std::string::npos) {
            std::string line = buffer.substr(0, nl);
            buffer.erase(0, nl + 1);
            if (line.empty()) continue;
            std::string response = handle_request(*cache, line, threshold) + "\n";
            std::size_t sent = 0;
            while (sent < response.size()) {
                ssize_t n = ::send(client_fd, response.data() + sent,
                                   response.size() - sent, 0);
                if (n <= 0) {
                    ::close(client_fd);
                    return;
                }
                sent += static_cast<std::size_t>(n);
            }
        }
    }
    ::close(client_fd);
}

}  // namespace

void serve_tcp(const LeafCache& cache, int port, double default_threshold,
               std::ostream& announce, std::atomic<bool>* stop) {
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw RuntimeFault("socket: " + std::string(std::strerror(errno)));
    int yes = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));

    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(static_cast<std::uint16_t>(port));
    if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        int err = errno;
        ::close(fd);
        throw RuntimeFault("bind: " + std::string(std::strerror(err)));
    }
    if (::listen(fd, 16) != 0) {
        int err = errno;
        ::close(fd);
        throw RuntimeFault("listen: " + std::string(std::strerror(err)));
    }
    socklen_t len = sizeof(addr);
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
    announce << "listening on 127.0.0.1:" << ntohs(addr.sin_port) << "\n";
    announce.flush();

    // Accept with a timeout so a stop flag set by another thread is noticed.
    timeval tv{};
    tv.tv_sec = 0;
    tv.tv_usec = 200 * 1000;
    ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));

    while (!stop || !stop->load()) {
        int client = ::accept(fd, nullptr, nullptr);
        if (client < 0) {
            if (errno == EAGAIN || errno == EWOULDBLOCK || errno == EINTR) continue;
            break;
        }
        std::thread(handle_tcp_client, &cache, client, default_threshold).detach();
    }
    ::close(fd);
}

void batch_predict(const LeafCache& cache, const std::string& input_path,
                   const std::string& output_path, double threshold) {
    std::ifstream in(input_path);
    if (!in) throw ParseError("cannot open " + input_path);
    std::ofstream out(output_path);
    if (!out) throw RuntimeFault("cannot write " + output_path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json req;
        try {
            req = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(input_path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        if (!req.is_object() || !req.contains("query") || !req["query"].is_string())
            throw ValidationError(input_path + ":" + std::to_string(line_no) +
                                  ": expected an object with a string 'query'");
        std::string query = req["query"].get<std::string>();
        nlohmann::json labels = nlohmann::json::array();
        for (const ScoredLabel& s : predict_from_cache(query, cache, threshold))
            labels.push_back({{"id", s.id}, {"name", s.name}, {"score", s.score}});
        nlohmann::json rec = {{"query", query}, {"labels", std::move(labels)}};
        out << rec.dump() << "\n";
    }
}

}  // namespace qc
