#pragma once

#include <json.hpp>

#include <string>
#include <vector>

#include "canon/data.hpp"
#include "canon/lm.hpp"
#include "canon/tensor.hpp"

namespace canon {

// B_eps membership reference: eps plus the mean per-token NLL of the
// unedited model on the corpus G it was measured on.
struct DegradationBall {
    double epsilon = 0.0;
    double base_loss = 0.0;
    std::string corpus_ref;

    void validate() const {
        if (epsilon <= 0.0) throw ConfigError("ball epsilon must be positive");
        if (base_loss <= 0.0) throw ConfigError("ball base loss must be positive");
    }
};

struct BallCheck {
    double ratio = 0.0;
    bool member = false;
};

struct EvalReport {
    double success_rate = 0.0;
    std::vector<double> losses;      // per eval example
    std::vector<int> successes;      // per eval example
    double ball_ratio = 0.0;
    bool ball_member = false;
    double hard_negative_delta = 0.0;

    nlohmann::json to_json() const;
    std::string to_csv() const;  // example-id, loss, success
};

// Sum of next-token log-probabilities of y under teacher forcing, i.e.
// log p(y | prefix). Inference-side (plain values).
double sequence_logprob(const LanguageModel& model, const std::vector<long>& prefix,
                        const std::vector<long>& y);

// Table-1 losses on tokenized strings.
double example_loss(const LanguageModel& model, const CanonicalExample& ex);
// 1 iff example_loss < ex.delta (strict)
int success(const LanguageModel& model, const CanonicalExample& ex);

// Mean per-token NLL over all predicted positions of all sequences.
double mean_nll(const LanguageModel& model, const std::vector<std::string>& corpus);

// base_loss must come from the same corpus with the same token accounting.
BallCheck ball_membership(const LanguageModel& model, const DegradationBall& ball,
                          const std::vector<std::string>& corpus);

DegradationBall make_ball(const LanguageModel& base_model, double epsilon,
                          const std::vector<std::string>& corpus,
                          const std::string& corpus_ref);

// Mean over H of nll_after - nll_before on the true completion; negative
// means the edit helped on hard negatives.
double hard_negative_delta(const LanguageModel& after, const LanguageModel& before,
                           const std::vector<HardNegative>& hard_neg);

EvalReport evaluate(const LanguageModel& model, const LanguageModel& baseline,
                    const TaskBundle& bundle, const DegradationBall& ball,
                    const std::vector<std::string>& ball_corpus);

// Differentiable path used by the editors: the same four losses built on the
// autodiff graph from precomputed logits over [prefix || y].
struct TokenizedExample {
    std::vector<long> prefix;
    std::vector<long> y_a, y_b;  // empty when absent
    LossKind loss = LossKind::NllGood;
    double delta = 0.0;

    static TokenizedExample from(const CanonicalExample& ex);
    std::vector<long> full_a() const;  // prefix || y_a
    std::vector<long> full_b() const;
};

// logits_a/logits_b are graph tensors for the full sequences; pass an
// undefined Tensor when that continuation is absent.
Tensor example_loss_graph(const TokenizedExample& ex, const Tensor& logits_a,
                          const Tensor& logits_b);

// Differentiable log p(y | prefix) from full-sequence logits.
Tensor sequence_logprob_graph(const Tensor& logits, long prefix_len,
                              const std::vector<long>& y);

// Exact KL(p || q) summed over the vocabulary, averaged over rows.
// logq is detached (reference model).
Tensor kl_rows_mean(const Tensor& logits_p, const Tensor& logits_q_const);

}  // namespace canon
