#pragma once

#include <optional>
#include <string>
#include <vector>

#include "canon/errors.hpp"

namespace canon {

enum class LossKind { NllGood, SuppressBad, AbsBalance, PreferAOverB };

const char* loss_kind_name(LossKind k);
LossKind loss_kind_from_name(const std::string& name);

// A prefix with up to two continuations, the loss expressing the preference,
// and the success threshold delta.
struct CanonicalExample {
    std::string prefix;
    std::optional<std::string> y_a;
    std::optional<std::string> y_b;
    LossKind loss = LossKind::NllGood;
    double delta = 0.0;

    void validate() const;
};

struct HardNegative {
    std::string prefix;
    std::string y;

    void validate() const;
};

struct TaskBundle {
    std::string name;
    std::string provenance;
    std::vector<CanonicalExample> train;   // T
    std::vector<CanonicalExample> eval;    // E
    std::vector<HardNegative> hard_neg;    // H

    void validate(long max_len) const;  // every example must tokenize in range
};

// Regularization texts R and ball-reference texts G; disjoint by contract.
struct CorpusSplit {
    std::vector<std::string> reg;
    std::vector<std::string> ball_ref;

    void validate() const;
};

// Directory layout: <dir>/train.jsonl, <dir>/eval.jsonl, <dir>/hardneg.jsonl.
TaskBundle load_bundle(const std::string& dir, const std::string& name = "");
void save_bundle(const std::string& dir, const TaskBundle& bundle);

std::vector<std::string> load_lines(const std::string& path);
void save_lines(const std::string& path, const std::vector<std::string>& lines);

}  // namespace canon
