#pragma once

#include <vector>

#include "canon/errors.hpp"

namespace canon {

// Plain value matrix for inference-side outputs (no graph attached).
struct Matrix {
    long rows = 0, cols = 0;
    std::vector<double> v;

    Matrix() = default;
    Matrix(long r, long c) : rows(r), cols(c), v(std::size_t(r * c), 0.0) {}

    double& at(long r, long c) { return v[std::size_t(r * cols + c)]; }
    double at(long r, long c) const { return v[std::size_t(r * cols + c)]; }
    double* row(long r) { return v.data() + r * cols; }
    const double* row(long r) const { return v.data() + r * cols; }
};

// Anything that maps a token prefix to per-position next-token logits.
// Row t scores the token at position t+1.
struct LanguageModel {
    virtual ~LanguageModel() = default;
    virtual long vocab_size() const = 0;
    virtual long max_len() const = 0;
    virtual Matrix logits(const std::vector<long>& tokens) const = 0;
};

inline void check_tokens(const std::vector<long>& tokens, long vocab, long max_len) {
    if (tokens.empty()) throw LengthError("empty token sequence");
    if (long(tokens.size()) > max_len) throw LengthError("sequence exceeds max length");
    for (long t : tokens)
        if (t < 0 || t >= vocab) throw VocabError("token id outside vocabulary");
}

}  // namespace canon
