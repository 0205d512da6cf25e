#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "sgr/corpus.hpp"
#include "sgr/error.hpp"
#include "sgr/params.hpp"
#include "sgr/tape.hpp"
#include "sgr/vocab.hpp"

namespace sgr {

struct ModelConfig {
    int d = 64;       // shared hidden width
    int layers = 2;   // transformer blocks
    int heads = 4;
    int ff_mult = 2;  // feed-forward width = ff_mult * d
    int l_max = 128;  // maximum encoded sequence length
    int head_hidden = 0; // predictor MLP width, 0 means d

    int ff_dim() const { return ff_mult * d; }
    int predictor_hidden() const { return head_hidden > 0 ? head_hidden : d; }

    void validate() const {
        require(d > 0 && layers > 0 && heads > 0 && ff_mult > 0 && l_max > 0,
                "ModelConfig: all dimensions must be positive");
        require(d % heads == 0, "ModelConfig: hidden size must be divisible by head count");
    }
};

// Restructured sentence input: the tracked entities mentioned in the
// sentence are prefixed in first-mention order, each followed by [SEP], and
// the sentence follows, closed by a final [SEP]:
//   [CLS] e_a [SEP] e_b [SEP] w_1 ... w_n [SEP]
// Truncation to l_max drops sentence-tail tokens only; the prefix and the
// closing [SEP] always survive.
inline std::vector<std::string> restructure_input(const std::string& sentence,
                                                  const std::vector<std::string>& entities,
                                                  int l_max) {
    std::vector<std::string> sent_toks = tokenize(sentence);
    struct Mention {
        int first = 0;
        int entity = 0;
    };
    std::vector<Mention> mentioned;
    for (size_t e = 0; e < entities.size(); ++e) {
        auto spans = match_entity(sent_toks, entities[e], static_cast<int>(e));
        if (!spans.empty()) mentioned.push_back({spans.front().start, static_cast<int>(e)});
    }
    std::stable_sort(mentioned.begin(), mentioned.end(),
                     [](const Mention& a, const Mention& b) { return a.first < b.first; });

    std::vector<std::string> out = {"[CLS]"};
    for (const Mention& m : mentioned) {
        for (const std::string& t : tokenize(entities[m.entity])) out.push_back(t);
        out.push_back("[SEP]");
    }
    require(static_cast<int>(out.size()) + 1 <= l_max,
            "restructure_input: entity prefix alone exceeds l_max=" + std::to_string(l_max));
    int budget = l_max - static_cast<int>(out.size()) - 1; // room before the closing [SEP]
    for (int i = 0; i < static_cast<int>(sent_toks.size()) && i < budget; ++i)
        out.push_back(sent_toks[i]);
    out.push_back("[SEP]");
    return out;
}

// Input for the virtual initial step that predicts y_0 before any sentence
// has been read. The paragraph prompt stands in for the sentence.
inline std::vector<std::string> init_step_input(const std::string& prompt, int l_max) {
    std::vector<std::string> out = {"[CLS]", "[INIT]"};
    int budget = l_max - 3;
    std::vector<std::string> toks = tokenize(prompt);
    for (int i = 0; i < static_cast<int>(toks.size()) && i < budget; ++i) out.push_back(toks[i]);
    out.push_back("[SEP]");
    return out;
}

// ---- parameter layout ----

inline void init_context_params(ParamStore& ps, const ModelConfig& cfg, int vocab_size,
                                std::mt19937_64& rng) {
    auto uni = [&](int r, int c) {
        double b = 1.0 / std::sqrt(static_cast<double>(c));
        return random_uniform(r, c, -b, b, rng);
    };
    ps.add("ctx.tok_emb", uni(vocab_size, cfg.d));
    ps.add("ctx.pos_emb", uni(cfg.l_max, cfg.d));
    for (int l = 0; l < cfg.layers; ++l) {
        std::string p = "ctx.l" + std::to_string(l) + ".";
        for (const char* w : {"wq", "wk", "wv", "wo"}) {
            ps.add(p + w, uni(cfg.d, cfg.d));
            ps.add(p + w + std::string("_b"), Tensor(1, cfg.d));
        }
        ps.add(p + "ln1_g", Tensor(1, cfg.d, 1.0));
        ps.add(p + "ln1_b", Tensor(1, cfg.d));
        ps.add(p + "ff1", uni(cfg.d, cfg.ff_dim()));
        ps.add(p + "ff1_b", Tensor(1, cfg.ff_dim()));
        ps.add(p + "ff2", uni(cfg.ff_dim(), cfg.d));
        ps.add(p + "ff2_b", Tensor(1, cfg.d));
        ps.add(p + "ln2_g", Tensor(1, cfg.d, 1.0));
        ps.add(p + "ln2_b", Tensor(1, cfg.d));
    }
}

// ---- forward pass ----

namespace detail {

inline Tape::Val attention_block(Tape& tape, const BoundParams& bp, const ModelConfig& cfg,
                                 const std::string& p, Tape::Val x) {
    const int dh = cfg.d / cfg.heads;
    Tape::Val q = tape.add_row_broadcast(tape.matmul(x, bp[p + "wq"]), bp[p + "wq_b"]);
    Tape::Val k = tape.add_row_broadcast(tape.matmul(x, bp[p + "wk"]), bp[p + "wk_b"]);
    Tape::Val v = tape.add_row_broadcast(tape.matmul(x, bp[p + "wv"]), bp[p + "wv_b"]);
    std::vector<Tape::Val> heads;
    for (int h = 0; h < cfg.heads; ++h) {
        Tape::Val qh = tape.slice_cols(q, h * dh, (h + 1) * dh);
        Tape::Val kh = tape.slice_cols(k, h * dh, (h + 1) * dh);
        Tape::Val vh = tape.slice_cols(v, h * dh, (h + 1) * dh);
        Tape::Val scores = tape.scale(tape.matmul(qh, tape.transpose(kh)),
                                      1.0 / std::sqrt(static_cast<double>(dh)));
        Tape::Val attn = tape.softmax_rows(scores);
        heads.push_back(tape.matmul(attn, vh));
    }
    Tape::Val cat = cfg.heads == 1 ? heads[0] : tape.concat_cols(heads);
    return tape.add_row_broadcast(tape.matmul(cat, bp[p + "wo"]), bp[p + "wo_b"]);
}

} // namespace detail

// Full-sequence encoding: summed token and learned position embeddings, then
// `layers` post-norm blocks of bidirectional multi-head self-attention and
// an ELU feed-forward. Returns the n x d matrix of contextual states.
inline Tape::Val encode_sequence(Tape& tape, const BoundParams& bp, const ModelConfig& cfg,
                                 const std::vector<int>& token_ids) {
    const int n = static_cast<int>(token_ids.size());
    require(n >= 1, "encode_sequence: empty token sequence");
    require(n <= cfg.l_max,
            "encode_sequence: sequence length " + std::to_string(n) + " exceeds l_max");
    std::vector<int> pos(n);
    for (int i = 0; i < n; ++i) pos[i] = i;
    Tape::Val x = tape.add(tape.gather_rows(bp["ctx.tok_emb"], token_ids),
                           tape.gather_rows(bp["ctx.pos_emb"], pos));
    for (int l = 0; l < cfg.layers; ++l) {
        std::string p = "ctx.l" + std::to_string(l) + ".";
        Tape::Val attn = detail::attention_block(tape, bp, cfg, p, x);
        x = tape.layer_norm(tape.add(x, attn), bp[p + "ln1_g"], bp[p + "ln1_b"]);
        Tape::Val h = tape.elu(tape.add_row_broadcast(tape.matmul(x, bp[p + "ff1"]), bp[p + "ff1_b"]));
        Tape::Val ff = tape.add_row_broadcast(tape.matmul(h, bp[p + "ff2"]), bp[p + "ff2_b"]);
        x = tape.layer_norm(tape.add(x, ff), bp[p + "ln2_g"], bp[p + "ln2_b"]);
    }
    return x;
}

// [CLS] summary of a sequence: the first row of the encoded matrix.
inline Tape::Val encode_context(Tape& tape, const BoundParams& bp, const ModelConfig& cfg,
                                const std::vector<int>& token_ids) {
    return tape.slice_rows(encode_sequence(tape, bp, cfg, token_ids), 0, 1);
}

} // namespace sgr
