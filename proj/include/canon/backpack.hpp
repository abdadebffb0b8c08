#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "canon/config.hpp"
#include "canon/lm.hpp"
#include "canon/rng.hpp"
#include "canon/tensor.hpp"
#include "canon/transformer.hpp"

namespace canon {

// Contextualization weights for a length-T prefix, stored as [T][T*k] with
// column j*k + l holding the weight on sense l of prefix position j.
// For each prediction position t the weights over {(j <= t, l)} are a single
// softmax, so they are non-negative and sum to one; entries with j > t are
// exactly zero.
struct AlphaTensor {
    Tensor w;  // [T][T*k]
    long t_len = 0;
    long k = 0;

    double at(long t, long j, long l) const { return w.at(t, j * k + l); }
    // throws EvalError when an invariant fails
    void validate(double tol = 1e-9) const;
};

// Additive overlay on a selected set of sense vectors, parameterized
// independently of the bank so an edit touches exactly the selected rows.
struct SenseDelta {
    std::vector<std::pair<long, long>> slots;  // (word, sense index), sorted
    Tensor rows;                               // [slots.size()][d]

    std::vector<long> bank_rows(long k) const {
        std::vector<long> out;
        out.reserve(slots.size());
        for (auto [w, l] : slots) out.push_back(w * k + l);
        return out;
    }
    SenseDelta clone() const {
        SenseDelta d;
        d.slots = slots;
        d.rows = rows.clone(true);
        return d;
    }
};

struct BackpackModel : LanguageModel {
    ModelConfig cfg;
    Tensor senses;   // [V*k][d], row w*k + l is sense l of word w
    Tensor out_emb;  // [V][d] softmax matrix E
    TransformerStack ctx;
    Tensor alpha_q, alpha_k;  // [d][d], sliced into k blocks of d/k columns

    mutable std::uint64_t ctx_invocations = 0;

    static BackpackModel init(const ModelConfig& cfg, Rng& rng);

    struct ForwardResult {
        Tensor logits;  // [T][V]
        AlphaTensor alpha;
    };

    // Full forward: contextualizer -> alpha -> weighted sense sum -> E h_t.
    ForwardResult forward(const std::vector<long>& tokens,
                          const LoraAdapters* ctx_lora = nullptr) const;

    // Contextualizer pass only. Counted by ctx_invocations.
    AlphaTensor alpha_only(const std::vector<long>& tokens,
                           const LoraAdapters* ctx_lora = nullptr) const;

    // Sense-sum + output projection with a caller-provided alpha; skips the
    // contextualizer entirely. delta, if given, overlays the sense bank.
    Tensor logits_with_alpha(const std::vector<long>& tokens, const AlphaTensor& alpha,
                             const SenseDelta* delta = nullptr) const;

    long vocab_size() const override { return cfg.vocab_size; }
    long max_len() const override { return cfg.max_len; }
    Matrix logits(const std::vector<long>& tokens) const override;

    std::vector<std::pair<std::string, Tensor>> named_params() const;
    std::vector<Tensor> trainable() const;
    void set_requires_grad(bool v);
    BackpackModel clone() const;

    // New model with the delta folded into the sense bank.
    BackpackModel with_delta_applied(const SenseDelta& delta) const;

    // Bitwise comparison of contextualizer + alpha projections (cache guard).
    bool same_contextualizer(const BackpackModel& other) const;
};

// Backpack view with a sense delta attached (evaluation-side overlay).
struct SenseEditedBackpack : LanguageModel {
    const BackpackModel* base;
    const SenseDelta* delta;

    SenseEditedBackpack(const BackpackModel* b, const SenseDelta* d) : base(b), delta(d) {}
    long vocab_size() const override { return base->cfg.vocab_size; }
    long max_len() const override { return base->cfg.max_len; }
    Matrix logits(const std::vector<long>& tokens) const override;
};

}  // namespace canon
