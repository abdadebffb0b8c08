#pragma once

#include <json.hpp>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "canon/data.hpp"

namespace canon {

// Per-task example counts plus corpus sizes. Bounds reflect the pools the
// closed vocabulary supports (entities, groups, roles, verb pairs).
struct GenSizes {
    long fact_train = 12;
    long fact_hardneg = 12;
    long supp_train = 6;
    long bal_train = 6;
    long pref_train = 6;
    long reg_sentences = 64;
    long ball_sentences = 64;
    long pretrain_extra = 400;  // generic sentences appended to the teaching set

    void validate() const;
    nlohmann::json to_json() const;
    static GenSizes from_json(const nlohmann::json& j);
    bool operator==(const GenSizes&) const = default;
};

struct SynthData {
    // task name -> bundle; names: fact_recall, suppression, pair_balance, preference
    std::map<std::string, TaskBundle> val;
    std::map<std::string, TaskBundle> test;
    std::vector<std::string> pretrain;
    CorpusSplit corpus;  // reg = R, ball_ref = G
    nlohmann::json provenance;
};

extern const std::vector<std::string> kTaskNames;

// Deterministic: one (seed, sizes) pair maps to exactly one SynthData.
SynthData generate_synthetic_tasks(std::uint64_t seed, const GenSizes& sizes);

}  // namespace canon
