#include "canon/losses.hpp"

#include <cmath>
#include <sstream>

#include "canon/kernels.hpp"
#include "canon/vocab.hpp"

namespace canon {

namespace {

// log softmax(row)[id] from a plain logits row
double row_logprob(const double* row, long cols, long id) {
    const double m = kern::active().max(row, std::size_t(cols));
    double z = 0.0;
    for (long j = 0; j < cols; ++j) z += std::exp(row[j] - m);
    return row[id] - (m + std::log(z));
}

}  // namespace

double sequence_logprob(const LanguageModel& model, const std::vector<long>& prefix,
                        const std::vector<long>& y) {
    if (prefix.empty()) throw SchemaError("example prefix has no tokens");
    if (y.empty()) throw SchemaError("continuation has no tokens");
    std::vector<long> full = prefix;
    full.insert(full.end(), y.begin(), y.end());
    Matrix logits = model.logits(full);
    double lp = 0.0;
    const long p = long(prefix.size());
    for (std::size_t i = 0; i < y.size(); ++i)
        lp += row_logprob(logits.row(p - 1 + long(i)), logits.cols, y[i]);
    return lp;
}

TokenizedExample TokenizedExample::from(const CanonicalExample& ex) {
    ex.validate();
    const Vocab& vocab = Vocab::get();
    TokenizedExample t;
    t.prefix = vocab.tokenize(ex.prefix);
    if (ex.y_a) t.y_a = vocab.tokenize(*ex.y_a);
    if (ex.y_b) t.y_b = vocab.tokenize(*ex.y_b);
    t.loss = ex.loss;
    t.delta = ex.delta;
    if (t.prefix.empty()) throw SchemaError("example prefix has no tokens");
    return t;
}

std::vector<long> TokenizedExample::full_a() const {
    std::vector<long> f = prefix;
    f.insert(f.end(), y_a.begin(), y_a.end());
    return f;
}

std::vector<long> TokenizedExample::full_b() const {
    std::vector<long> f = prefix;
    f.insert(f.end(), y_b.begin(), y_b.end());
    return f;
}

double example_loss(const LanguageModel& model, const CanonicalExample& ex) {
    const Vocab& vocab = Vocab::get();
    ex.validate();
    const std::vector<long> prefix = vocab.tokenize(ex.prefix);
    auto lp = [&](const std::optional<std::string>& y) {
        return sequence_logprob(model, prefix, vocab.tokenize(*y));
    };
    switch (ex.loss) {
        case LossKind::NllGood: return -lp(ex.y_a);
        case LossKind::SuppressBad: return lp(ex.y_b);
        case LossKind::AbsBalance: return std::abs(lp(ex.y_b) - lp(ex.y_a));
        case LossKind::PreferAOverB: return -(lp(ex.y_a) - lp(ex.y_b));
    }
    throw SchemaError("unknown loss kind");
}

int success(const LanguageModel& model, const CanonicalExample& ex) {
    return example_loss(model, ex) < ex.delta ? 1 : 0;
}

double mean_nll(const LanguageModel& model, const std::vector<std::string>& corpus) {
    if (corpus.empty()) throw CorpusError("empty corpus");
    const Vocab& vocab = Vocab::get();
    double total = 0.0;
    long count = 0;
    for (const auto& text : corpus) {
        const std::vector<long> tokens = vocab.tokenize(text);
        if (tokens.size() < 2) continue;
        Matrix logits = model.logits(tokens);
        for (std::size_t t = 0; t + 1 < tokens.size(); ++t) {
            total -= row_logprob(logits.row(long(t)), logits.cols, tokens[t + 1]);
            ++count;
        }
    }
    if (count == 0) throw CorpusError("corpus has no predicted tokens");
    return total / double(count);
}

BallCheck ball_membership(const LanguageModel& model, const DegradationBall& ball,
                          const std::vector<std::string>& corpus) {
    ball.validate();
    BallCheck out;
    out.ratio = mean_nll(model, corpus) / ball.base_loss;
    out.member = out.ratio <= 1.0 + ball.epsilon;
    return out;
}

DegradationBall make_ball(const LanguageModel& base_model, double epsilon,
                          const std::vector<std::string>& corpus,
                          const std::string& corpus_ref) {
    DegradationBall b;
    b.epsilon = epsilon;
    b.base_loss = mean_nll(base_model, corpus);
    b.corpus_ref = corpus_ref;
    b.validate();
    return b;
}

double hard_negative_delta(const LanguageModel& after, const LanguageModel& before,
                           const std::vector<HardNegative>& hard_neg) {
    if (hard_neg.empty()) throw CorpusError("empty hard-negative set");
    if (after.vocab_size() != before.vocab_size())
        throw VocabError("hard negatives need models over the same vocabulary");
    const Vocab& vocab = Vocab::get();
    double total = 0.0;
    for (const auto& h : hard_neg) {
        h.validate();
        const std::vector<long> prefix = vocab.tokenize(h.prefix);
        const std::vector<long> y = vocab.tokenize(h.y);
        const double nll_after = -sequence_logprob(after, prefix, y);
        const double nll_before = -sequence_logprob(before, prefix, y);
        total += nll_after - nll_before;
    }
    return total / double(hard_neg.size());
}

EvalReport evaluate(const LanguageModel& model, const LanguageModel& baseline,
                    const TaskBundle& bundle, const DegradationBall& ball,
                    const std::vector<std::string>& ball_corpus) {
    EvalReport r;
    long hits = 0;
    for (const auto& ex : bundle.eval) {
        const double l = example_loss(model, ex);
        r.losses.push_back(l);
        const int s = l < ex.delta ? 1 : 0;
        r.successes.push_back(s);
        hits += s;
    }
    r.success_rate = bundle.eval.empty() ? 0.0 : double(hits) / double(bundle.eval.size());
    BallCheck bc = ball_membership(model, ball, ball_corpus);
    r.ball_ratio = bc.ratio;
    r.ball_member = bc.member;
    if (!bundle.hard_neg.empty())
        r.hard_negative_delta = hard_negative_delta(model, baseline, bundle.hard_neg);
    return r;
}

nlohmann::json EvalReport::to_json() const {
    return {{"success_rate", success_rate},
            {"losses", losses},
            {"successes", successes},
            {"ball_ratio", ball_ratio},
            {"ball_member", ball_member},
            {"hard_negative_delta", hard_negative_delta}};
}

std::string EvalReport::to_csv() const {
    std::ostringstream os;
    os << "example,loss,success\n";
    os.precision(17);
    for (std::size_t i = 0; i < losses.size(); ++i)
        os << i << "," << losses[i] << "," << successes[i] << "\n";
    return os.str();
}

Tensor sequence_logprob_graph(const Tensor& logits, long prefix_len,
                              const std::vector<long>& y) {
    if (y.empty()) throw SchemaError("continuation has no tokens");
    Tensor lp = log_softmax(logits);
    std::vector<std::pair<long, long>> cells;
    for (std::size_t i = 0; i < y.size(); ++i)
        cells.emplace_back(prefix_len - 1 + long(i), y[i]);
    return pick_sum(lp, cells);
}

Tensor example_loss_graph(const TokenizedExample& ex, const Tensor& logits_a,
                          const Tensor& logits_b) {
    const long p = long(ex.prefix.size());
    switch (ex.loss) {
        case LossKind::NllGood:
            return neg(sequence_logprob_graph(logits_a, p, ex.y_a));
        case LossKind::SuppressBad:
            return sequence_logprob_graph(logits_b, p, ex.y_b);
        case LossKind::AbsBalance:
            return vabs(sub(sequence_logprob_graph(logits_b, p, ex.y_b),
                            sequence_logprob_graph(logits_a, p, ex.y_a)));
        case LossKind::PreferAOverB:
            return neg(sub(sequence_logprob_graph(logits_a, p, ex.y_a),
                           sequence_logprob_graph(logits_b, p, ex.y_b)));
    }
    throw SchemaError("unknown loss kind");
}

Tensor kl_rows_mean(const Tensor& logits_p, const Tensor& logits_q_const) {
    if (logits_p.rank() != 2) throw DimensionError("kl: rank-2 logits required");
    if (logits_p.shape() != logits_q_const.shape())
        throw DimensionError("kl: logit shapes disagree");
    Tensor lp = log_softmax(logits_p);
    Tensor lq = log_softmax(logits_q_const);
    if (lq.requires_grad()) throw EvalError("kl reference side must be detached");
    Tensor p = vexp(lp);
    Tensor kl = sum_all(mul(p, sub(lp, lq)));
    return scale(kl, 1.0 / double(logits_p.dim(0)));
}

}  // namespace canon
