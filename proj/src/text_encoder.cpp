#include "qc/text_encoder.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>

#include "json.hpp"

namespace qc {

using nlohmann::json;

TokenMode token_mode_from_string(const std::string& s) {
    if (s == "word") return TokenMode::Word;
    if (s == "char") return TokenMode::Char;
    throw ConfigError("unknown token mode '" + s + "' (expected word or char)");
}

std::string token_mode_to_string(TokenMode mode) {
    return mode == TokenMode::Word ? "word" : "char";
}

namespace {

std::size_t codepoint_len(unsigned char lead) {
    if (lead < 0x80) return 1;
    if ((lead >> 5) == 0x6) return 2;
    if ((lead >> 4) == 0xE) return 3;
    if ((lead >> 3) == 0x1E) return 4;
    return 1;  // invalid byte, consume one
}

bool is_word_char(unsigned char c) {
    return std::isalnum(c) != 0 || c == '_';
}

}  // namespace

std::vector<std::string> split_tokens(const std::string& text, TokenMode mode) {
    std::vector<std::string> tokens;
    std::size_t i = 0;
    while (i < text.size()) {
        unsigned char c = text[i];
        if (mode == TokenMode::Char) {
            std::size_t len = std::min(codepoint_len(c), text.size() - i);
            if (!std::isspace(c)) tokens.push_back(text.substr(i, len));
            i += len;
            continue;
        }
        if (c < 0x80) {
            if (is_word_char(c)) {
                std::size_t start = i;
                while (i < text.size() && static_cast<unsigned char>(text[i]) < 0x80 &&
                       is_word_char(text[i]))
                    ++i;
                tokens.push_back(text.substr(start, i - start));
            } else {
                ++i;  // separator
            }
        } else {
            std::size_t len = std::min(codepoint_len(c), text.size() - i);
            tokens.push_back(text.substr(i, len));
            i += len;
        }
    }
    return tokens;
}

Vocab build_vocab(const std::vector<std::string>& texts, TokenMode mode) {
    std::set<std::string> seen;
    for (const std::string& t : texts)
        for (std::string& tok : split_tokens(t, mode)) seen.insert(std::move(tok));

    Vocab vocab;
    vocab.mode = mode;
    vocab.token_to_id["<pad>"] = 0;
    vocab.token_to_id["<unk>"] = 1;
    vocab.pad_id = 0;
    vocab.unk_id = 1;
    int next = 2;
    for (const std::string& tok : seen) {
        if (tok == "<pad>" || tok == "<unk>") continue;
        vocab.token_to_id[tok] = next++;
    }
    return vocab;
}

void save_vocab(const Vocab& vocab, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw RuntimeFault("cannot write " + path);
    std::vector<const std::string*> by_id(vocab.size());
    for (const auto& [tok, id] : vocab.token_to_id) by_id[id] = &tok;
    for (std::size_t id = 0; id < by_id.size(); ++id) {
        json j;
        j["token"] = *by_id[id];
        j["id"] = id;
        out << j.dump() << "\n";
    }
}

Vocab load_vocab(const std::string& path, TokenMode mode) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path);
    Vocab vocab;
    vocab.mode = mode;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            json j = json::parse(line);
            vocab.token_to_id[j.at("token").get<std::string>()] = j.at("id").get<int>();
        } catch (const json::exception& e) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    auto pad = vocab.token_to_id.find("<pad>");
    auto unk = vocab.token_to_id.find("<unk>");
    if (pad == vocab.token_to_id.end() || unk == vocab.token_to_id.end())
        throw ValidationError(path + ": vocab missing <pad> or <unk>");
    vocab.pad_id = pad->second;
    vocab.unk_id = unk->second;
    return vocab;
}

std::vector<int> tokenize(const std::string& text, const Vocab& vocab, std::size_t max_len) {
    if (max_len < 1) throw ConfigError("tokenize: max_len must be >= 1");
    std::vector<int> ids;
    for (const std::string& tok : split_tokens(text, vocab.mode)) {
        if (ids.size() >= max_len) break;
        auto it = vocab.token_to_id.find(tok);
        ids.push_back(it == vocab.token_to_id.end() ? vocab.unk_id : it->second);
    }
    return ids;
}

std::string build_label_sequence(const LabelNode& node) {
    std::string seq = node.name;
    for (const std::string& info : node.side_info) {
        seq += '|';
        seq += info;
    }
    return seq;
}

EncoderParams init_encoder(std::size_t vocab_size, std::size_t d_emb,
                           std::size_t d_hidden, std::size_t d, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-0.05, 0.05);
    EncoderParams p;
    p.embedding = Matrix(vocab_size, d_emb);
    for (double& v : p.embedding.data) v = dist(rng);
    p.w1 = Matrix(d_emb, d_hidden);
    for (double& v : p.w1.data) v = dist(rng);
    p.b1 = Vector(d_hidden, 0.0);
    p.w2 = Matrix(d_hidden, d);
    for (double& v : p.w2.data) v = dist(rng);
    p.b2 = Vector(d, 0.0);
    return p;
}

namespace {

struct EncodeTrace {
    Vector pooled;  // d_emb
    Vector hidden;  // d_hidden, post-tanh
};

Vector pool_rows(const std::vector<int>& ids, const EncoderParams& params) {
    std::size_t d_emb = params.embedding.cols;
    Vector pooled(d_emb, 0.0);
    if (!ids.empty()) {
        std::vector<int> sorted = ids;
        std::sort(sorted.begin(), sorted.end());
        for (int id : sorted) {
            if (id < 0 || static_cast<std::size_t>(id) >= params.embedding.rows)
                throw RuntimeFault("token id " + std::to_string(id) +
                                   " outside embedding table");
            add_scaled(pooled, params.embedding.row(id), 1.0);
        }
        double inv = 1.0 / static_cast<double>(sorted.size());
        for (double& v : pooled) v *= inv;
    }
    return pooled;
}

Vector encode_impl(const std::vector<int>& ids, const EncoderParams& params,
                   EncodeTrace* trace) {
    std::size_t d_emb = params.embedding.cols;
    Vector pooled = pool_rows(ids, params);

    std::size_t d_hidden = params.b1.size();
    Vector hidden(d_hidden);
    for (std::size_t j = 0; j < d_hidden; ++j) {
        double a = params.b1[j];
        for (std::size_t i = 0; i < d_emb; ++i) a += pooled[i] * params.w1(i, j);
        hidden[j] = std::tanh(a);
    }

    std::size_t d = params.b2.size();
    Vector out(d);
    for (std::size_t j = 0; j < d; ++j) {
        double a = params.b2[j];
        for (std::size_t i = 0; i < d_hidden; ++i) a += hidden[i] * params.w2(i, j);
        out[j] = a;
    }
    if (trace) {
        trace->pooled = std::move(pooled);
        trace->hidden = std::move(hidden);
    }
    return out;
}

}  // namespace

Vector encode(const std::vector<int>& ids, const EncoderParams& params) {
    return encode_impl(ids, params, nullptr);
}

Vector mean_pool(const std::vector<int>& ids, const EncoderParams& params) {
    return pool_rows(ids, params);
}

EncoderGrads zero_encoder_grads(const EncoderParams& params) {
    EncoderGrads g;
    g.embedding = Matrix(params.embedding.rows, params.embedding.cols);
    g.w1 = Matrix(params.w1.rows, params.w1.cols);
    g.b1 = Vector(params.b1.size(), 0.0);
    g.w2 = Matrix(params.w2.rows, params.w2.cols);
    g.b2 = Vector(params.b2.size(), 0.0);
    return g;
}

void encode_backward(const std::vector<int>& ids, const EncoderParams& params,
                     const Vector& upstream_grad, EncoderGrads& grads) {
    if (upstream_grad.size() != params.b2.size())
        throw RuntimeFault("encode_backward: upstream gradient has " +
                           std::to_string(upstream_grad.size()) + " entries, expected " +
                           std::to_string(params.b2.size()));

    EncodeTrace trace;
    encode_impl(ids, params, &trace);

    std::size_t d_emb = params.embedding.cols;
    std::size_t d_hidden = params.b1.size();
    std::size_t d = params.b2.size();

    // z = hidden * w2 + b2
    Vector d_hidden_grad(d_hidden, 0.0);
    for (std::size_t i = 0; i < d_hidden; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            grads.w2(i, j) += trace.hidden[i] * upstream_grad[j];
            d_hidden_grad[i] += params.w2(i, j) * upstream_grad[j];
        }
    }
    for (std::size_t j = 0; j < d; ++j) grads.b2[j] += upstream_grad[j];

    // hidden = tanh(pooled * w1 + b1)
    Vector d_pre(d_hidden);
    for (std::size_t j = 0; j < d_hidden; ++j)
        d_pre[j] = d_hidden_grad[j] * (1.0 - trace.hidden[j] * trace.hidden[j]);

    Vector d_pooled(d_emb, 0.0);
    for (std::size_t i = 0; i < d_emb; ++i) {
        for (std::size_t j = 0; j < d_hidden; ++j) {
            grads.w1(i, j) += trace.pooled[i] * d_pre[j];
            d_pooled[i] += params.w1(i, j) * d_pre[j];
        }
    }
    for (std::size_t j = 0; j < d_hidden; ++j) grads.b1[j] += d_pre[j];

    if (ids.empty()) return;
    double inv = 1.0 / static_cast<double>(ids.size());
    for (int id : ids) add_scaled(grads.embedding.row(id), d_pooled, inv);
}

}  // namespace qc
