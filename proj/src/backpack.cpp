#include "canon/backpack.hpp"

#include <cmath>

namespace canon {

void AlphaTensor::validate(double tol) const {
    const long cols = t_len * k;
    if (w.rank() != 2 || w.dim(0) != t_len || w.dim(1) != cols)
        throw DimensionError("alpha tensor shape mismatch");
    for (long t = 0; t < t_len; ++t) {
        double total = 0.0;
        for (long j = 0; j < t_len; ++j) {
            for (long l = 0; l < k; ++l) {
                const double v = w.at(t, j * k + l);
                if (v < 0.0) throw EvalError("alpha has a negative weight");
                if (j > t && v != 0.0) throw EvalError("alpha violates the causal mask");
                total += v;
            }
        }
        if (std::abs(total - 1.0) > tol)
            throw EvalError("alpha row does not sum to one");
    }
}

BackpackModel BackpackModel::init(const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    BackpackModel m;
    m.cfg = cfg;
    m.senses = Tensor::randn(rng, {cfg.vocab_size * cfg.sense_count, cfg.model_dim}, 0.02, true);
    m.out_emb = Tensor::randn(rng, {cfg.vocab_size, cfg.model_dim}, 0.02, true);
    m.ctx = TransformerStack::init(cfg.vocab_size, cfg.model_dim, cfg.ctx_heads,
                                   cfg.ctx_mlp_dim, cfg.ctx_layers, cfg.max_len, rng);
    m.alpha_q = Tensor::randn(rng, {cfg.model_dim, cfg.model_dim}, 0.02, true);
    m.alpha_k = Tensor::randn(rng, {cfg.model_dim, cfg.model_dim}, 0.02, true);
    return m;
}

AlphaTensor BackpackModel::alpha_only(const std::vector<long>& tokens,
                                      const LoraAdapters* ctx_lora) const {
    check_tokens(tokens, cfg.vocab_size, cfg.max_len);
    ++ctx_invocations;
    const long t_len = long(tokens.size());
    const long k = cfg.sense_count;
    const long ds = cfg.model_dim / k;

    Tensor h = ctx.hidden(tokens, ctx_lora);
    Tensor q = matmul(h, alpha_q);
    Tensor kk = matmul(h, alpha_k);

    // Per-sense scores [T][T], stacked as columns l*T + j then permuted to
    // the [T][T*k] layout with column j*k + l.
    std::vector<Tensor> per_sense;
    for (long l = 0; l < k; ++l) {
        Tensor ql = col_slice(q, l * ds, (l + 1) * ds);
        Tensor kl = col_slice(kk, l * ds, (l + 1) * ds);
        per_sense.push_back(scale(matmul_nt(ql, kl), 1.0 / std::sqrt(double(ds))));
    }
    Tensor stacked = concat_cols(per_sense);
    std::vector<long> perm(std::size_t(t_len * k));
    for (long j = 0; j < t_len; ++j)
        for (long l = 0; l < k; ++l) perm[std::size_t(j * k + l)] = l * t_len + j;
    Tensor scores = permute_cols(stacked, perm);

    std::vector<long> prefix(std::size_t(t_len));
    for (long t = 0; t < t_len; ++t) prefix[std::size_t(t)] = (t + 1) * k;

    AlphaTensor a;
    a.w = prefix_softmax(scores, prefix);
    a.t_len = t_len;
    a.k = k;
    return a;
}

Tensor BackpackModel::logits_with_alpha(const std::vector<long>& tokens,
                                        const AlphaTensor& alpha,
                                        const SenseDelta* delta) const {
    check_tokens(tokens, cfg.vocab_size, cfg.max_len);
    const long t_len = long(tokens.size());
    const long k = cfg.sense_count;
    if (alpha.t_len != t_len || alpha.k != k)
        throw DimensionError("alpha shape does not match the token sequence");

    Tensor bank = senses;
    if (delta) {
        if (long(delta->slots.size()) != delta->rows.dim(0))
            throw DimensionError("sense delta slots and rows disagree");
        for (auto [w, l] : delta->slots)
            if (w < 0 || w >= cfg.vocab_size || l < 0 || l >= k)
                throw IndexError("sense delta references an out-of-range sense");
        bank = overlay_rows(senses, delta->rows, delta->bank_rows(k));
    }

    std::vector<long> rows(std::size_t(t_len * k));
    for (long j = 0; j < t_len; ++j)
        for (long l = 0; l < k; ++l) rows[std::size_t(j * k + l)] = tokens[std::size_t(j)] * k + l;
    Tensor c_sel = gather_rows(bank, rows);   // [T*k][d]
    Tensor h_sum = matmul(alpha.w, c_sel);    // [T][d]
    return matmul_nt(h_sum, out_emb);         // [T][V]
}

BackpackModel::ForwardResult BackpackModel::forward(const std::vector<long>& tokens,
                                                    const LoraAdapters* ctx_lora) const {
    AlphaTensor a = alpha_only(tokens, ctx_lora);
    Tensor l = logits_with_alpha(tokens, a);
    return {l, a};
}

Matrix BackpackModel::logits(const std::vector<long>& tokens) const {
    NoGradGuard ng;
    Tensor t = forward(tokens).logits;
    Matrix m(t.dim(0), t.dim(1));
    std::copy(t.data().begin(), t.data().end(), m.v.begin());
    return m;
}

std::vector<std::pair<std::string, Tensor>> BackpackModel::named_params() const {
    std::vector<std::pair<std::string, Tensor>> out;
    out.emplace_back("senses", senses);
    out.emplace_back("out_emb", out_emb);
    out.emplace_back("alpha_q", alpha_q);
    out.emplace_back("alpha_k", alpha_k);
    for (auto& p : ctx.named_params("ctx/")) out.push_back(p);
    return out;
}

std::vector<Tensor> BackpackModel::trainable() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_params()) {
        (void)name;
        out.push_back(t);
    }
    return out;
}

void BackpackModel::set_requires_grad(bool v) {
    for (auto& [name, t] : named_params()) {
        (void)name;
        t.raw()->requires_grad = v;
    }
}

BackpackModel BackpackModel::clone() const {
    BackpackModel m;
    m.cfg = cfg;
    m.senses = senses.clone(true);
    m.out_emb = out_emb.clone(true);
    m.ctx = ctx.clone();
    m.alpha_q = alpha_q.clone(true);
    m.alpha_k = alpha_k.clone(true);
    return m;
}

BackpackModel BackpackModel::with_delta_applied(const SenseDelta& delta) const {
    BackpackModel m = clone();
    auto data = m.senses.mutable_data();
    const long d = cfg.model_dim;
    for (std::size_t i = 0; i < delta.slots.size(); ++i) {
        const long row = delta.slots[i].first * cfg.sense_count + delta.slots[i].second;
        for (long c = 0; c < d; ++c)
            data[std::size_t(row * d + c)] += delta.rows.data()[std::size_t(long(i) * d + c)];
    }
    return m;
}

bool BackpackModel::same_contextualizer(const BackpackModel& other) const {
    auto mine = ctx.named_params("ctx/");
    auto theirs = other.ctx.named_params("ctx/");
    if (mine.size() != theirs.size()) return false;
    auto eq = [](const Tensor& a, const Tensor& b) {
        if (a.shape() != b.shape()) return false;
        for (std::size_t i = 0; i < a.size(); ++i)
            if (a.data()[i] != b.data()[i]) return false;
        return true;
    };
    for (std::size_t i = 0; i < mine.size(); ++i) {
        if (mine[i].first != theirs[i].first) return false;
        if (!eq(mine[i].second, theirs[i].second)) return false;
    }
    return eq(alpha_q, other.alpha_q) && eq(alpha_k, other.alpha_k) &&
           eq(ctx.tok_emb, other.ctx.tok_emb);
}

Matrix SenseEditedBackpack::logits(const std::vector<long>& tokens) const {
    NoGradGuard ng;
    AlphaTensor a = base->alpha_only(tokens);
    Tensor t = base->logits_with_alpha(tokens, a, delta);
    Matrix m(t.dim(0), t.dim(1));
    std::copy(t.data().begin(), t.data().end(), m.v.begin());
    return m;
}

}  // namespace canon
