#pragma once

#include <json.hpp>

#include <memory>
#include <string>
#include <vector>

#include "canon/backpack.hpp"
#include "canon/losses.hpp"
#include "canon/transformer.hpp"

namespace canon {

// Logit-difference ensemble: host logits plus beta times the difference of
// the finetuned and pretrained Backpack log-probabilities. The combined
// vector is left unnormalized; softmax at use sites realizes the
// proportionality.
struct EnsembleSpec {
    std::shared_ptr<const HostTransformerLM> host;
    std::shared_ptr<const BackpackModel> bp_pre;
    std::shared_ptr<const BackpackModel> bp_ft;  // either a full model ...
    const SenseDelta* delta = nullptr;           // ... or bp_pre + delta
    double beta = 1.0;

    void validate() const;
    bool sense_edit_only() const;  // alpha cache precondition
};

Matrix ensemble_logits(const EnsembleSpec& spec, const std::vector<long>& tokens);

// Single contextualizer pass reused for both sense banks. Requires the two
// Backpacks to share the contextualizer bit for bit.
Matrix ensemble_logits_cached(const EnsembleSpec& spec, const std::vector<long>& tokens);

struct EnsembleLM : LanguageModel {
    EnsembleSpec spec;
    bool use_cache = false;

    explicit EnsembleLM(EnsembleSpec s, bool cached = false)
        : spec(std::move(s)), use_cache(cached) {}
    long vocab_size() const override { return spec.host->cfg.vocab_size; }
    long max_len() const override { return spec.host->cfg.max_len; }
    Matrix logits(const std::vector<long>& tokens) const override {
        return use_cache ? ensemble_logits_cached(spec, tokens) : ensemble_logits(spec, tokens);
    }
};

struct BetaCalibration {
    double beta = 0.0;               // 0 when no grid point is admissible
    bool admissible = false;
    std::vector<std::pair<double, double>> grid;  // (beta, ball ratio), descending beta

    nlohmann::json to_json() const;
};

// Generic form used by tests: candidate logit providers for host/ft/pre.
BetaCalibration calibrate_beta(const LanguageModel& host, const LanguageModel& bp_ft,
                               const LanguageModel& bp_pre, const DegradationBall& ball,
                               const std::vector<std::string>& corpus);

// Convenience on a spec (beta field ignored).
BetaCalibration calibrate_beta(const EnsembleSpec& spec, const DegradationBall& ball,
                               const std::vector<std::string>& corpus);

}  // namespace canon
