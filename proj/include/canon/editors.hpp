#pragma once

#include <json.hpp>

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "canon/backpack.hpp"
#include "canon/data.hpp"
#include "canon/losses.hpp"
#include "canon/transformer.hpp"

namespace canon {

enum class EditMethod { Full, Lora, Senses };

const char* edit_method_name(EditMethod m);
EditMethod edit_method_from_name(const std::string& name);

struct EditConfig {
    EditMethod method = EditMethod::Senses;
    double learning_rate = 1e-2;
    double kl_weight = 0.3;  // lambda in the KL-regularized objective
    long epochs = 10;        // at most 10
    long lora_rank = 8;
    double lora_layer_pct = 50.0;  // contiguous range centered on the middle layer
    long sense_count_k_sel = 8;    // senses kept per canonical example
    double sense_reg = 1000.0;     // lambda in the sense importance score
    std::uint64_t seed = 0;
    long reg_sample = 32;          // sequences drawn from R once per run
    long reg_batch_per_step = 8;   // of those, how many enter each step's KL term

    void validate() const;
    // centered contiguous layer range [lo, hi] for a stack of n layers
    std::pair<long, long> lora_range(long n_layers) const;
    nlohmann::json to_json() const;
    static EditConfig from_json(const nlohmann::json& j);
};

// Fixed per-run sample of regularization sequences.
struct RegSample {
    std::vector<std::vector<long>> tokens;

    static RegSample draw(const std::vector<std::string>& reg_corpus, long count, Rng& rng);
};

struct SenseSelection {
    // union over examples of each example's top-k_sel (word, sense) pairs
    std::vector<std::pair<long, long>> slots;
    // per-example top slots in score order, for reporting
    std::vector<std::vector<std::pair<long, long>>> per_example;
};

// Total weight each (word, sense) slot receives: for every listed target row
// t, sum alpha[t][j*k+l] over prefix positions j holding that word.
std::vector<double> sense_scores_for_rows(const AlphaTensor& alpha,
                                          const std::vector<long>& tokens,
                                          const std::vector<long>& rows, long vocab_size);

// Eq.-9-style selection: canonical-example weight minus lambda times the
// mean weight under the regularization sample, top-k_sel per example,
// ties broken by ascending (word id, sense index).
SenseSelection select_senses(const BackpackModel& model,
                             const std::vector<CanonicalExample>& train,
                             const RegSample& reg, long k_sel, double lambda_sel);

struct EpochInfo {
    double train_loss = 0.0;
    double ball_ratio = 1.0;
};

struct EditOutcome {
    EditMethod method;
    std::string target;  // "backpack" | "host"
    std::vector<EpochInfo> epochs;  // index 0 is the unedited model
    long chosen_epoch = -1;

    std::shared_ptr<const BackpackModel> bp_base;
    std::shared_ptr<const HostTransformerLM> host_base;

    std::vector<SenseDelta> sense_snapshots;           // Senses
    std::vector<LoraAdapters> lora_snapshots;          // Lora
    std::vector<std::vector<double>> flat_snapshots;   // Full (flattened params)
    SenseSelection selection;                          // Senses

    // Evaluable view of the model at an epoch (0 = unedited).
    std::unique_ptr<LanguageModel> model_at(long epoch) const;
    BackpackModel materialize_backpack(long epoch) const;
    HostTransformerLM materialize_host(long epoch) const;

    nlohmann::json trace_json() const;
};

// The KL-regularized objective: mean canonical-example loss over T plus
// lambda times the mean per-position KL(p_theta || p_theta0) over the
// sampled regularization sequences. forward builds graph logits for a token
// sequence; base_logits are the detached reference logits per reg sequence.
Tensor kl_regularized_objective(
    const std::function<Tensor(const std::vector<long>&)>& forward,
    const std::vector<TokenizedExample>& train,
    const std::vector<std::vector<long>>& reg_tokens,
    const std::vector<Tensor>& base_logits, double lambda);

EditOutcome full_finetune_backpack(std::shared_ptr<const BackpackModel> model,
                                   const TaskBundle& bundle, const RegSample& reg,
                                   const EditConfig& cfg, const DegradationBall& ball,
                                   const std::vector<std::string>& ball_corpus);

EditOutcome full_finetune_host(std::shared_ptr<const HostTransformerLM> model,
                               const TaskBundle& bundle, const RegSample& reg,
                               const EditConfig& cfg, const DegradationBall& ball,
                               const std::vector<std::string>& ball_corpus);

EditOutcome lora_finetune_host(std::shared_ptr<const HostTransformerLM> model,
                               const TaskBundle& bundle, const RegSample& reg,
                               const EditConfig& cfg, const DegradationBall& ball,
                               const std::vector<std::string>& ball_corpus);

EditOutcome lora_finetune_backpack_ctx(std::shared_ptr<const BackpackModel> model,
                                       const TaskBundle& bundle, const RegSample& reg,
                                       const EditConfig& cfg, const DegradationBall& ball,
                                       const std::vector<std::string>& ball_corpus);

EditOutcome sense_finetune(std::shared_ptr<const BackpackModel> model,
                           const SenseSelection& selection, const TaskBundle& bundle,
                           const RegSample& reg, const EditConfig& cfg,
                           const DegradationBall& ball,
                           const std::vector<std::string>& ball_corpus);

// Latest epoch inside the ball, never past val_epoch when given; epoch 0
// always qualifies.
long select_epoch(const std::vector<EpochInfo>& epochs, const DegradationBall& ball,
                  std::optional<long> val_epoch = std::nullopt);

// Closed-form sense gradient for the NLL-only objective (lambda = 0): the
// mean over examples of -sum_t alpha_tc (E_{y_t} - sum_w p(w) E_w), one row
// per selected slot.
std::vector<std::vector<double>> sense_gradient_closed_form(
    const BackpackModel& model, const SenseSelection& selection,
    const std::vector<CanonicalExample>& train);

}  // namespace canon
