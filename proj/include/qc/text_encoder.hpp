#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "qc/data_model.hpp"
#include "qc/matrix.hpp"

namespace qc {

enum class TokenMode { Word, Char };

TokenMode token_mode_from_string(const std::string& s);
std::string token_mode_to_string(TokenMode mode);

struct Vocab {
    std::map<std::string, int> token_to_id;
    int unk_id = 1;
    int pad_id = 0;
    TokenMode mode = TokenMode::Word;

    std::size_t size() const { return token_to_id.size(); }
};

// Splits text into tokens. Word mode: maximal runs of ASCII alphanumerics;
// any non-ASCII codepoint is its own token, so CJK text degrades to
// characters. Char mode: every unicode scalar value is a token.
std::vector<std::string> split_tokens(const std::string& text, TokenMode mode);

// Vocabulary over every token of the given texts (min frequency 1), ids
// assigned in lexicographic token order after the fixed <pad>/<unk> slots.
Vocab build_vocab(const std::vector<std::string>& texts, TokenMode mode);

void save_vocab(const Vocab& vocab, const std::string& path);
Vocab load_vocab(const std::string& path, TokenMode mode);

// Token ids in text order, truncated to max_len. Unknown tokens map to
// unk_id. No padding: pooling handles variable length.
std::vector<int> tokenize(const std::string& text, const Vocab& vocab, std::size_t max_len);

// Label name then side_info items, '|'-separated.
std::string build_label_sequence(const LabelNode& node);

// The shared text encoder: mean-pooled token embeddings through a 2-layer
// tanh MLP. Queries, labels, and knowledge all flow through one instance of
// these parameters.
struct EncoderParams {
    Matrix embedding;  // vocab_size x d_emb
    Matrix w1;         // d_emb x d_hidden
    Vector b1;         // d_hidden
    Matrix w2;         // d_hidden x d
    Vector b2;         // d

    std::size_t dim() const { return b2.size(); }
};

EncoderParams init_encoder(std::size_t vocab_size, std::size_t d_emb,
                           std::size_t d_hidden, std::size_t d, std::mt19937_64& rng);

// Mean-pool over (sorted) ids, then proj1 + tanh, then proj2. The empty
// sequence pools to zero, so the output is the pure bias path. Pooling sums
// in sorted-id order, making encode bitwise permutation-invariant.
Vector encode(const std::vector<int>& ids, const EncoderParams& params);

// The pooling stage alone: the mean of the ids' embedding rows. The output
// bias of the full encoder gives every rarely-updated text a large shared
// component, so static text similarity (the label similarity graph) is
// computed on this zero-mean representation instead.
Vector mean_pool(const std::vector<int>& ids, const EncoderParams& params);

struct EncoderGrads {
    Matrix embedding;
    Matrix w1;
    Vector b1;
    Matrix w2;
    Vector b2;
};

EncoderGrads zero_encoder_grads(const EncoderParams& params);

// Accumulates d(loss)/d(params) into `grads` given d(loss)/d(output).
// Embedding rows outside `ids` are untouched.
void encode_backward(const std::vector<int>& ids, const EncoderParams& params,
                     const Vector& upstream_grad, EncoderGrads& grads);

}  // namespace qc
