#pragma once

#include <string>
#include <utility>
#include <vector>

#include "canon/config.hpp"
#include "canon/lm.hpp"
#include "canon/rng.hpp"
#include "canon/tensor.hpp"

namespace canon {

// Low-rank adapters on the MLP up/down projections of a contiguous layer
// range. With q == 0 the adapter is an exact no-op.
struct LoraAdapter {
    Tensor q_up, r_up;      // [d][rank], [rank][m]
    Tensor q_down, r_down;  // [m][rank], [rank][d]
};

struct LoraAdapters {
    long layer_lo = 0;
    long layer_hi = -1;  // inclusive
    long rank = 0;
    std::vector<LoraAdapter> adapters;

    const LoraAdapter* for_layer(long layer) const {
        if (layer < layer_lo || layer > layer_hi) return nullptr;
        return &adapters[std::size_t(layer - layer_lo)];
    }
    std::vector<Tensor> trainable() const;
    std::vector<std::pair<std::string, Tensor>> named_params() const;
};

// Pre-LN causal decoder stack shared by the host LM and the Backpack
// contextualizer.
struct TransformerStack {
    long d = 0, heads = 0, mlp = 0, n_layers = 0, vocab = 0, max_len = 0;

    Tensor tok_emb;  // [V][d]
    Tensor pos_emb;  // [max_len][d]
    struct Layer {
        Tensor ln1_g, ln1_b;
        Tensor wq, wk, wv, wo;  // [d][d]
        Tensor bq, bk, bv, bo;  // [d]
        Tensor ln2_g, ln2_b;
        Tensor w_up;    // [d][m]
        Tensor b_up;    // [m]
        Tensor w_down;  // [m][d]
        Tensor b_down;  // [d]
    };
    std::vector<Layer> layers;
    Tensor lnf_g, lnf_b;

    static TransformerStack init(long vocab, long d, long heads, long mlp, long n_layers,
                                 long max_len, Rng& rng);
    // Final-normed hidden states [T][d]. Graph-building when grads are on.
    Tensor hidden(const std::vector<long>& tokens, const LoraAdapters* lora = nullptr) const;

    std::vector<std::pair<std::string, Tensor>> named_params(const std::string& prefix) const;
    void set_requires_grad(bool v);
    TransformerStack clone() const;

    // rank-aware adapter construction; q sides zero, r sides random
    LoraAdapters make_lora(long layer_lo, long layer_hi, long rank, Rng& rng) const;
    // materialize w_up += q r etc. for the adapted layers
    void merge_lora(const LoraAdapters& lora);
};

struct HostTransformerLM : LanguageModel {
    ModelConfig cfg;
    TransformerStack stack;
    Tensor out_emb;  // [V][d] softmax matrix

    static HostTransformerLM init(const ModelConfig& cfg, Rng& rng);

    Tensor forward(const std::vector<long>& tokens, const LoraAdapters* lora = nullptr) const;

    long vocab_size() const override { return cfg.vocab_size; }
    long max_len() const override { return cfg.max_len; }
    Matrix logits(const std::vector<long>& tokens) const override;

    std::vector<std::pair<std::string, Tensor>> named_params() const;
    std::vector<Tensor> trainable() const;
    void set_requires_grad(bool v);
    HostTransformerLM clone() const;
};

// Host view with adapters attached (adapter-form forward, base untouched).
struct LoraHostLM : LanguageModel {
    const HostTransformerLM* base;
    const LoraAdapters* lora;

    LoraHostLM(const HostTransformerLM* b, const LoraAdapters* l) : base(b), lora(l) {}
    long vocab_size() const override { return base->cfg.vocab_size; }
    long max_len() const override { return base->cfg.max_len; }
    Matrix logits(const std::vector<long>& tokens) const override;
};

}  // namespace canon
