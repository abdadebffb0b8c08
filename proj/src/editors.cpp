#include "canon/editors.hpp"

#include <algorithm>
#include <cmath>

#include "canon/optim.hpp"
#include "canon/vocab.hpp"

namespace canon {

const char* edit_method_name(EditMethod m) {
    switch (m) {
        case EditMethod::Full: return "full";
        case EditMethod::Lora: return "lora";
        case EditMethod::Senses: return "senses";
    }
    throw ConfigError("unknown edit method value");
}

EditMethod edit_method_from_name(const std::string& name) {
    if (name == "full") return EditMethod::Full;
    if (name == "lora") return EditMethod::Lora;
    if (name == "senses") return EditMethod::Senses;
    throw ConfigError("unknown edit method: " + name);
}

void EditConfig::validate() const {
    if (epochs < 1 || epochs > 10) throw ConfigError("epochs must be in [1, 10]");
    if (learning_rate < 0.0) throw ConfigError("learning rate must be non-negative");
    if (kl_weight < 0.0) throw ConfigError("kl weight must be non-negative");
    if (method == EditMethod::Lora) {
        if (lora_rank < 1) throw ConfigError("lora rank must be >= 1");
        if (lora_layer_pct <= 0.0 || lora_layer_pct > 100.0)
            throw ConfigError("lora layer percent must be in (0, 100]");
    }
    if (method == EditMethod::Senses) {
        if (sense_count_k_sel < 1) throw ConfigError("sense_count_k_sel must be >= 1");
        if (sense_reg < 0.0) throw ConfigError("sense_reg must be non-negative");
    }
    if (reg_sample < 1) throw ConfigError("reg_sample must be >= 1");
    if (reg_batch_per_step < 1) throw ConfigError("reg_batch_per_step must be >= 1");
}

std::pair<long, long> EditConfig::lora_range(long n_layers) const {
    long count = long(std::lround(lora_layer_pct / 100.0 * double(n_layers)));
    count = std::max(1L, std::min(n_layers, count));
    const long lo = (n_layers - count) / 2;
    return {lo, lo + count - 1};
}

nlohmann::json EditConfig::to_json() const {
    return {{"method", edit_method_name(method)},
            {"learning_rate", learning_rate},
            {"kl_weight", kl_weight},
            {"epochs", epochs},
            {"lora_rank", lora_rank},
            {"lora_layer_pct", lora_layer_pct},
            {"sense_count_k_sel", sense_count_k_sel},
            {"sense_reg", sense_reg},
            {"seed", seed},
            {"reg_sample", reg_sample},
            {"reg_batch_per_step", reg_batch_per_step}};
}

EditConfig EditConfig::from_json(const nlohmann::json& j) {
    EditConfig c;
    if (j.contains("method")) c.method = edit_method_from_name(j.at("method").get<std::string>());
    auto getd = [&](const char* k, double& f) { if (j.contains(k)) f = j.at(k).get<double>(); };
    auto getl = [&](const char* k, long& f) { if (j.contains(k)) f = j.at(k).get<long>(); };
    getd("learning_rate", c.learning_rate);
    getd("kl_weight", c.kl_weight);
    getl("epochs", c.epochs);
    getl("lora_rank", c.lora_rank);
    getd("lora_layer_pct", c.lora_layer_pct);
    getl("sense_count_k_sel", c.sense_count_k_sel);
    getd("sense_reg", c.sense_reg);
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    getl("reg_sample", c.reg_sample);
    getl("reg_batch_per_step", c.reg_batch_per_step);
    c.validate();
    return c;
}

RegSample RegSample::draw(const std::vector<std::string>& reg_corpus, long count, Rng& rng) {
    if (reg_corpus.empty()) throw CorpusError("regularization corpus is empty");
    const Vocab& vocab = Vocab::get();
    std::vector<std::size_t> idx(reg_corpus.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (std::size_t i = idx.size(); i > 1; --i)
        std::swap(idx[i - 1], idx[std::size_t(rng.below(i))]);
    if (long(idx.size()) > count) idx.resize(std::size_t(count));
    RegSample out;
    for (std::size_t i : idx) {
        auto toks = vocab.tokenize(reg_corpus[i]);
        if (toks.size() >= 2) out.tokens.push_back(std::move(toks));
    }
    if (out.tokens.empty()) throw CorpusError("regularization sample has no usable sequences");
    return out;
}

std::vector<double> sense_scores_for_rows(const AlphaTensor& alpha,
                                          const std::vector<long>& tokens,
                                          const std::vector<long>& rows, long vocab_size) {
    const long k = alpha.k;
    std::vector<double> scores(std::size_t(vocab_size * k), 0.0);
    for (long t : rows) {
        if (t < 0 || t >= alpha.t_len) throw IndexError("target row outside alpha");
        for (long j = 0; j <= t && j < long(tokens.size()); ++j) {
            const long w = tokens[std::size_t(j)];
            for (long l = 0; l < k; ++l)
                scores[std::size_t(w * k + l)] += alpha.at(t, j, l);
        }
    }
    return scores;
}

SenseSelection select_senses(const BackpackModel& model,
                             const std::vector<CanonicalExample>& train, const RegSample& reg,
                             long k_sel, double lambda_sel) {
    if (k_sel < 1) throw ConfigError("k_sel must be >= 1");
    if (reg.tokens.empty()) throw CorpusError("regularization sample is empty");
    NoGradGuard ng;
    const long vocab = model.cfg.vocab_size;
    const long k = model.cfg.sense_count;

    // regularization weight per slot: mean over sequences of the total
    // alpha mass, every prediction row counted
    std::vector<double> reg_score(std::size_t(vocab * k), 0.0);
    for (const auto& seq : reg.tokens) {
        AlphaTensor a = model.alpha_only(seq);
        std::vector<long> rows(seq.size());
        for (std::size_t i = 0; i < seq.size(); ++i) rows[i] = long(i);
        auto s = sense_scores_for_rows(a, seq, rows, vocab);
        for (std::size_t i = 0; i < s.size(); ++i) reg_score[i] += s[i];
    }
    for (double& v : reg_score) v /= double(reg.tokens.size());

    SenseSelection sel;
    std::vector<std::pair<long, long>> union_slots;
    for (const auto& ex : train) {
        TokenizedExample tex = TokenizedExample::from(ex);
        std::vector<double> score(std::size_t(vocab * k), 0.0);
        auto accumulate = [&](const std::vector<long>& full, std::size_t y_len) {
            if (y_len == 0) return;
            AlphaTensor a = model.alpha_only(full);
            std::vector<long> rows;
            const long p = long(tex.prefix.size());
            for (std::size_t i = 0; i < y_len; ++i) rows.push_back(p - 1 + long(i));
            auto s = sense_scores_for_rows(a, full, rows, vocab);
            for (std::size_t i = 0; i < s.size(); ++i) score[i] += s[i];
        };
        accumulate(tex.full_a(), tex.y_a.size());
        accumulate(tex.full_b(), tex.y_b.size());
        for (std::size_t i = 0; i < score.size(); ++i)
            score[i] -= lambda_sel * reg_score[i];

        std::vector<long> order(score.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = long(i);
        std::sort(order.begin(), order.end(), [&](long a_, long b_) {
            if (score[std::size_t(a_)] != score[std::size_t(b_)])
                return score[std::size_t(a_)] > score[std::size_t(b_)];
            return a_ < b_;  // slot index order == (word id, sense index) order
        });
        std::vector<std::pair<long, long>> top;
        for (long i = 0; i < k_sel && i < long(order.size()); ++i)
            top.emplace_back(order[std::size_t(i)] / k, order[std::size_t(i)] % k);
        for (auto s : top) union_slots.push_back(s);
        sel.per_example.push_back(std::move(top));
    }
    std::sort(union_slots.begin(), union_slots.end());
    union_slots.erase(std::unique(union_slots.begin(), union_slots.end()), union_slots.end());
    sel.slots = std::move(union_slots);
    return sel;
}

Tensor kl_regularized_objective(
    const std::function<Tensor(const std::vector<long>&)>& forward,
    const std::vector<TokenizedExample>& train,
    const std::vector<std::vector<long>>& reg_tokens,
    const std::vector<Tensor>& base_logits, double lambda) {
    if (lambda <= 0.0) throw ConfigError("kl weight must be positive");
    if (reg_tokens.empty()) throw CorpusError("regularization sample is empty");
    if (train.empty()) throw SchemaError("no canonical examples");
    Tensor total = Tensor::scalar(0.0);
    for (const auto& ex : train) {
        Tensor la = ex.y_a.empty() ? Tensor() : forward(ex.full_a());
        Tensor lb = ex.y_b.empty() ? Tensor() : forward(ex.full_b());
        total = add(total, example_loss_graph(ex, la, lb));
    }
    total = scale(total, 1.0 / double(train.size()));
    Tensor kl = Tensor::scalar(0.0);
    for (std::size_t i = 0; i < reg_tokens.size(); ++i)
        kl = add(kl, kl_rows_mean(forward(reg_tokens[i]), base_logits[i]));
    kl = scale(kl, 1.0 / double(reg_tokens.size()));
    return add(total, scale(kl, lambda));
}

namespace {

struct FnLM : LanguageModel {
    long vocab, maxl;
    std::function<Matrix(const std::vector<long>&)> fn;
    FnLM(long v, long m, std::function<Matrix(const std::vector<long>&)> f)
        : vocab(v), maxl(m), fn(std::move(f)) {}
    long vocab_size() const override { return vocab; }
    long max_len() const override { return maxl; }
    Matrix logits(const std::vector<long>& tokens) const override { return fn(tokens); }
};

Matrix tensor_to_matrix(const Tensor& t) {
    Matrix m(t.dim(0), t.dim(1));
    std::copy(t.data().begin(), t.data().end(), m.v.begin());
    return m;
}

// One prepared graph forward per distinct token sequence in the run.
struct SeqForward {
    std::vector<long> tokens;
    std::function<Tensor()> fwd;
};

struct LoopPlan {
    std::vector<TokenizedExample> examples;
    // per example: indices into seq_forwards for the a/b sequences (-1 absent)
    std::vector<std::pair<long, long>> example_seqs;
    std::vector<SeqForward> seq_forwards;
    std::vector<long> reg_seq_ids;          // indices into seq_forwards
    std::vector<Tensor> reg_base_logits;    // detached, aligned with reg_seq_ids
    std::vector<Tensor> params;
    std::function<double()> ball_ratio;     // of the current parameter values
    std::function<void(long)> snapshot;     // record payload for an epoch
};

void run_training_loop(const LoopPlan& plan, const EditConfig& cfg,
                       const DegradationBall& ball, EditOutcome& out) {
    ball.validate();
    Rng rng(cfg.seed);
    const long steps_per_epoch = long(plan.examples.size());
    Adam opt(plan.params, CosineSchedule{cfg.learning_rate, cfg.epochs * steps_per_epoch});

    plan.snapshot(0);
    out.epochs.push_back({0.0, plan.ball_ratio()});

    long step = 0;
    for (long epoch = 1; epoch <= cfg.epochs; ++epoch) {
        Rng order_rng = rng.fork("epoch-" + std::to_string(epoch));
        std::vector<long> order(plan.examples.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = long(i);
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[std::size_t(order_rng.below(i))]);

        double epoch_loss = 0.0;
        for (long idx : order) {
            const TokenizedExample& ex = plan.examples[std::size_t(idx)];
            auto [ai, bi] = plan.example_seqs[std::size_t(idx)];
            Tensor la = ai >= 0 ? plan.seq_forwards[std::size_t(ai)].fwd() : Tensor();
            Tensor lb = bi >= 0 ? plan.seq_forwards[std::size_t(bi)].fwd() : Tensor();
            Tensor objective = example_loss_graph(ex, la, lb);

            if (cfg.kl_weight > 0.0 && !plan.reg_seq_ids.empty()) {
                const long n_reg = long(plan.reg_seq_ids.size());
                const long batch = std::min(cfg.reg_batch_per_step, n_reg);
                Tensor kl = Tensor::scalar(0.0);
                for (long b = 0; b < batch; ++b) {
                    const long r = (step * batch + b) % n_reg;
                    Tensor lp = plan.seq_forwards[std::size_t(plan.reg_seq_ids[std::size_t(r)])].fwd();
                    kl = add(kl, kl_rows_mean(lp, plan.reg_base_logits[std::size_t(r)]));
                }
                objective = add(objective, scale(kl, cfg.kl_weight / double(batch)));
            }

            const double value = objective.value();
            if (!std::isfinite(value))
                throw EvalError("training diverged: non-finite loss at epoch " +
                                std::to_string(epoch));
            epoch_loss += value;
            objective.backward();
            opt.clip_global_norm(1.0);
            opt.step();
            opt.zero_grad();
            ++step;
        }
        plan.snapshot(epoch);
        out.epochs.push_back({epoch_loss / double(steps_per_epoch), plan.ball_ratio()});
    }
}

LoopPlan plan_sequences(const TaskBundle& bundle, const RegSample& reg,
                        const std::function<Tensor(const std::vector<long>&)>& forward,
                        const std::function<Matrix(const std::vector<long>&)>& infer) {
    LoopPlan plan;
    auto add_seq = [&](const std::vector<long>& tokens) {
        SeqForward sf;
        sf.tokens = tokens;
        sf.fwd = [forward, tokens] { return forward(tokens); };
        plan.seq_forwards.push_back(std::move(sf));
        return long(plan.seq_forwards.size()) - 1;
    };
    for (const auto& ex : bundle.train) {
        TokenizedExample tex = TokenizedExample::from(ex);
        long ai = -1, bi = -1;
        if (!tex.y_a.empty()) ai = add_seq(tex.full_a());
        if (!tex.y_b.empty()) bi = add_seq(tex.full_b());
        plan.examples.push_back(std::move(tex));
        plan.example_seqs.emplace_back(ai, bi);
    }
    for (const auto& seq : reg.tokens) {
        plan.reg_seq_ids.push_back(add_seq(seq));
        NoGradGuard ng;
        Matrix base = infer(seq);
        plan.reg_base_logits.push_back(
            Tensor::from({base.rows, base.cols}, base.v, false));
    }
    return plan;
}

struct OwningSenseView : LanguageModel {
    std::shared_ptr<const BackpackModel> base;
    SenseDelta delta;
    long vocab_size() const override { return base->cfg.vocab_size; }
    long max_len() const override { return base->cfg.max_len; }
    Matrix logits(const std::vector<long>& tokens) const override {
        NoGradGuard ng;
        AlphaTensor a = base->alpha_only(tokens);
        return tensor_to_matrix(base->logits_with_alpha(tokens, a, &delta));
    }
};

struct OwningLoraHostView : LanguageModel {
    std::shared_ptr<const HostTransformerLM> base;
    LoraAdapters lora;
    long vocab_size() const override { return base->cfg.vocab_size; }
    long max_len() const override { return base->cfg.max_len; }
    Matrix logits(const std::vector<long>& tokens) const override {
        NoGradGuard ng;
        return tensor_to_matrix(base->forward(tokens, &lora));
    }
};

struct OwningLoraBpView : LanguageModel {
    std::shared_ptr<const BackpackModel> base;
    LoraAdapters lora;
    long vocab_size() const override { return base->cfg.vocab_size; }
    long max_len() const override { return base->cfg.max_len; }
    Matrix logits(const std::vector<long>& tokens) const override {
        NoGradGuard ng;
        return tensor_to_matrix(base->forward(tokens, &lora).logits);
    }
};

struct OwningBpView : LanguageModel {
    BackpackModel m;
    explicit OwningBpView(BackpackModel b) : m(std::move(b)) {}
    long vocab_size() const override { return m.cfg.vocab_size; }
    long max_len() const override { return m.cfg.max_len; }
    Matrix logits(const std::vector<long>& tokens) const override { return m.logits(tokens); }
};

struct OwningHostView : LanguageModel {
    HostTransformerLM m;
    explicit OwningHostView(HostTransformerLM h) : m(std::move(h)) {}
    long vocab_size() const override { return m.cfg.vocab_size; }
    long max_len() const override { return m.cfg.max_len; }
    Matrix logits(const std::vector<long>& tokens) const override { return m.logits(tokens); }
};

std::vector<double> flatten_params(const std::vector<std::pair<std::string, Tensor>>& named) {
    std::vector<double> out;
    for (const auto& [name, t] : named) {
        (void)name;
        out.insert(out.end(), t.data().begin(), t.data().end());
    }
    return out;
}

void unflatten_params(const std::vector<double>& flat,
                      std::vector<std::pair<std::string, Tensor>> named) {
    std::size_t off = 0;
    for (auto& [name, t] : named) {
        (void)name;
        std::copy_n(flat.begin() + long(off), t.size(), t.mutable_data().begin());
        off += t.size();
    }
    if (off != flat.size()) throw DimensionError("flat snapshot length mismatch");
}

LoraAdapters clone_adapters(const LoraAdapters& a) {
    LoraAdapters out;
    out.layer_lo = a.layer_lo;
    out.layer_hi = a.layer_hi;
    out.rank = a.rank;
    for (const auto& ad : a.adapters) {
        LoraAdapter c;
        c.q_up = ad.q_up.clone(true);
        c.r_up = ad.r_up.clone(true);
        c.q_down = ad.q_down.clone(true);
        c.r_down = ad.r_down.clone(true);
        out.adapters.push_back(std::move(c));
    }
    return out;
}

std::vector<std::vector<long>> tokenize_corpus(const std::vector<std::string>& corpus) {
    const Vocab& vocab = Vocab::get();
    std::vector<std::vector<long>> out;
    for (const auto& s : corpus) {
        auto t = vocab.tokenize(s);
        if (t.size() >= 2) out.push_back(std::move(t));
    }
    if (out.empty()) throw CorpusError("corpus has no usable sequences");
    return out;
}

}  // namespace

EditOutcome full_finetune_backpack(std::shared_ptr<const BackpackModel> model,
                                   const TaskBundle& bundle, const RegSample& reg,
                                   const EditConfig& cfg, const DegradationBall& ball,
                                   const std::vector<std::string>& ball_corpus) {
    cfg.validate();
    EditOutcome out;
    out.method = EditMethod::Full;
    out.target = "backpack";
    out.bp_base = model;

    auto work = std::make_shared<BackpackModel>(model->clone());
    auto forward = [work](const std::vector<long>& toks) {
        return work->forward(toks).logits;
    };
    auto infer = [work](const std::vector<long>& toks) { return work->logits(toks); };
    LoopPlan plan = plan_sequences(bundle, reg, forward, infer);
    for (auto& [name, t] : work->named_params()) {
        (void)name;
        plan.params.push_back(t);
    }
    FnLM view(model->cfg.vocab_size, model->cfg.max_len, infer);
    plan.ball_ratio = [&view, &ball, &ball_corpus] {
        return ball_membership(view, ball, ball_corpus).ratio;
    };
    plan.snapshot = [&out, work](long) {
        out.flat_snapshots.push_back(flatten_params(work->named_params()));
    };
    run_training_loop(plan, cfg, ball, out);
    return out;
}

EditOutcome full_finetune_host(std::shared_ptr<const HostTransformerLM> model,
                               const TaskBundle& bundle, const RegSample& reg,
                               const EditConfig& cfg, const DegradationBall& ball,
                               const std::vector<std::string>& ball_corpus) {
    cfg.validate();
    EditOutcome out;
    out.method = EditMethod::Full;
    out.target = "host";
    out.host_base = model;

    auto work = std::make_shared<HostTransformerLM>(model->clone());
    auto forward = [work](const std::vector<long>& toks) { return work->forward(toks); };
    auto infer = [work](const std::vector<long>& toks) { return work->logits(toks); };
    LoopPlan plan = plan_sequences(bundle, reg, forward, infer);
    for (auto& [name, t] : work->named_params()) {
        (void)name;
        plan.params.push_back(t);
    }
    FnLM view(model->cfg.vocab_size, model->cfg.max_len, infer);
    plan.ball_ratio = [&view, &ball, &ball_corpus] {
        return ball_membership(view, ball, ball_corpus).ratio;
    };
    plan.snapshot = [&out, work](long) {
        out.flat_snapshots.push_back(flatten_params(work->named_params()));
    };
    run_training_loop(plan, cfg, ball, out);
    return out;
}

EditOutcome lora_finetune_host(std::shared_ptr<const HostTransformerLM> model,
                               const TaskBundle& bundle, const RegSample& reg,
                               const EditConfig& cfg, const DegradationBall& ball,
                               const std::vector<std::string>& ball_corpus) {
    cfg.validate();
    if (cfg.method != EditMethod::Lora) throw ConfigError("config method must be lora");
    EditOutcome out;
    out.method = EditMethod::Lora;
    out.target = "host";
    out.host_base = model;

    auto frozen = std::make_shared<HostTransformerLM>(model->clone());
    frozen->set_requires_grad(false);
    Rng rng(cfg.seed);
    Rng lora_rng = rng.fork("lora-init");
    auto [lo, hi] = cfg.lora_range(frozen->cfg.host_layers);
    auto lora = std::make_shared<LoraAdapters>(
        frozen->stack.make_lora(lo, hi, cfg.lora_rank, lora_rng));

    auto forward = [frozen, lora](const std::vector<long>& toks) {
        return frozen->forward(toks, lora.get());
    };
    auto infer = [frozen, lora](const std::vector<long>& toks) {
        NoGradGuard ng;
        return tensor_to_matrix(frozen->forward(toks, lora.get()));
    };
    LoopPlan plan = plan_sequences(bundle, reg, forward, infer);
    plan.params = lora->trainable();
    FnLM view(model->cfg.vocab_size, model->cfg.max_len, infer);
    plan.ball_ratio = [&view, &ball, &ball_corpus] {
        return ball_membership(view, ball, ball_corpus).ratio;
    };
    plan.snapshot = [&out, lora](long) { out.lora_snapshots.push_back(clone_adapters(*lora)); };
    run_training_loop(plan, cfg, ball, out);
    return out;
}

EditOutcome lora_finetune_backpack_ctx(std::shared_ptr<const BackpackModel> model,
                                       const TaskBundle& bundle, const RegSample& reg,
                                       const EditConfig& cfg, const DegradationBall& ball,
                                       const std::vector<std::string>& ball_corpus) {
    cfg.validate();
    if (cfg.method != EditMethod::Lora) throw ConfigError("config method must be lora");
    EditOutcome out;
    out.method = EditMethod::Lora;
    out.target = "backpack";
    out.bp_base = model;

    auto frozen = std::make_shared<BackpackModel>(model->clone());
    frozen->set_requires_grad(false);
    Rng rng(cfg.seed);
    Rng lora_rng = rng.fork("lora-init");
    auto [lo, hi] = cfg.lora_range(frozen->cfg.ctx_layers);
    auto lora = std::make_shared<LoraAdapters>(
        frozen->ctx.make_lora(lo, hi, cfg.lora_rank, lora_rng));

    auto forward = [frozen, lora](const std::vector<long>& toks) {
        return frozen->forward(toks, lora.get()).logits;
    };
    auto infer = [frozen, lora](const std::vector<long>& toks) {
        NoGradGuard ng;
        return tensor_to_matrix(frozen->forward(toks, lora.get()).logits);
    };
    LoopPlan plan = plan_sequences(bundle, reg, forward, infer);
    plan.params = lora->trainable();
    FnLM view(model->cfg.vocab_size, model->cfg.max_len, infer);
    plan.ball_ratio = [&view, &ball, &ball_corpus] {
        return ball_membership(view, ball, ball_corpus).ratio;
    };
    plan.snapshot = [&out, lora](long) { out.lora_snapshots.push_back(clone_adapters(*lora)); };
    run_training_loop(plan, cfg, ball, out);
    return out;
}

EditOutcome sense_finetune(std::shared_ptr<const BackpackModel> model,
                           const SenseSelection& selection, const TaskBundle& bundle,
                           const RegSample& reg, const EditConfig& cfg,
                           const DegradationBall& ball,
                           const std::vector<std::string>& ball_corpus) {
    cfg.validate();
    if (selection.slots.empty()) throw ConfigError("sense selection is empty");
    for (auto [w, l] : selection.slots)
        if (w < 0 || w >= model->cfg.vocab_size || l < 0 || l >= model->cfg.sense_count)
            throw IndexError("selection references an out-of-range sense");

    EditOutcome out;
    out.method = EditMethod::Senses;
    out.target = "backpack";
    out.bp_base = model;
    out.selection = selection;

    const long d = model->cfg.model_dim;
    auto delta = std::make_shared<SenseDelta>();
    delta->slots = selection.slots;
    delta->rows = Tensor::zeros({long(selection.slots.size()), d}, true);

    // Frozen private copy: only the delta rows may receive gradient.
    auto frozen = std::make_shared<BackpackModel>(model->clone());
    frozen->set_requires_grad(false);

    // The contextualizer is frozen, so alpha is a constant of each token
    // sequence for the whole run; compute each one once.
    std::vector<std::pair<std::vector<long>, AlphaTensor>> alpha_cache;
    auto cached_alpha = [&alpha_cache, frozen](const std::vector<long>& toks) -> const AlphaTensor& {
        for (auto& [t, a] : alpha_cache)
            if (t == toks) return a;
        NoGradGuard ng;
        alpha_cache.emplace_back(toks, frozen->alpha_only(toks));
        return alpha_cache.back().second;
    };

    auto forward = [frozen, delta, &cached_alpha](const std::vector<long>& toks) {
        return frozen->logits_with_alpha(toks, cached_alpha(toks), delta.get());
    };
    auto infer = [frozen, delta, &cached_alpha](const std::vector<long>& toks) {
        NoGradGuard ng;
        return tensor_to_matrix(frozen->logits_with_alpha(toks, cached_alpha(toks), delta.get()));
    };
    LoopPlan plan = plan_sequences(bundle, reg, forward, infer);
    plan.params = {delta->rows};

    // Ball ratio via cached alphas over G.
    const auto ball_tokens = tokenize_corpus(ball_corpus);
    for (const auto& t : ball_tokens) cached_alpha(t);
    plan.ball_ratio = [frozen, delta, &ball_tokens, &cached_alpha, &ball] {
        NoGradGuard ng;
        double total = 0.0;
        long count = 0;
        for (const auto& toks : ball_tokens) {
            Tensor lg = frozen->logits_with_alpha(toks, cached_alpha(toks), delta.get());
            Tensor lp = log_softmax(lg);
            for (std::size_t t = 0; t + 1 < toks.size(); ++t) {
                total -= lp.at(long(t), toks[t + 1]);
                ++count;
            }
        }
        return (total / double(count)) / ball.base_loss;
    };
    plan.snapshot = [&out, delta](long) { out.sense_snapshots.push_back(delta->clone()); };
    run_training_loop(plan, cfg, ball, out);
    return out;
}

long select_epoch(const std::vector<EpochInfo>& epochs, const DegradationBall& ball,
                  std::optional<long> val_epoch) {
    ball.validate();
    if (epochs.empty()) throw ConfigError("trace has no epochs");
    long best = 0;
    const long cap = val_epoch ? std::min(*val_epoch, long(epochs.size()) - 1)
                               : long(epochs.size()) - 1;
    for (long e = 0; e <= cap; ++e)
        if (epochs[std::size_t(e)].ball_ratio <= 1.0 + ball.epsilon) best = e;
    return best;
}

std::vector<std::vector<double>> sense_gradient_closed_form(
    const BackpackModel& model, const SenseSelection& selection,
    const std::vector<CanonicalExample>& train) {
    NoGradGuard ng;
    const long d = model.cfg.model_dim;
    const long k = model.cfg.sense_count;
    const long v = model.cfg.vocab_size;
    std::vector<std::vector<double>> grads(selection.slots.size(),
                                           std::vector<double>(std::size_t(d), 0.0));
    for (const auto& ex : train) {
        TokenizedExample tex = TokenizedExample::from(ex);
        if (tex.loss != LossKind::NllGood)
            throw ConfigError("closed-form gradient covers the nll_good case");
        const auto full = tex.full_a();
        AlphaTensor alpha = model.alpha_only(full);
        Tensor lp = log_softmax(model.logits_with_alpha(full, alpha));
        const long p = long(tex.prefix.size());
        for (std::size_t yi = 0; yi < tex.y_a.size(); ++yi) {
            const long row = p - 1 + long(yi);
            const long target = tex.y_a[yi];
            // expected output embedding under the model at this position
            std::vector<double> mean_emb(std::size_t(d), 0.0);
            for (long w = 0; w < v; ++w) {
                const double pw = std::exp(lp.at(row, w));
                for (long c = 0; c < d; ++c)
                    mean_emb[std::size_t(c)] += pw * model.out_emb.at(w, c);
            }
            for (std::size_t si = 0; si < selection.slots.size(); ++si) {
                const auto [word, ell] = selection.slots[si];
                double a_tc = 0.0;
                for (long j = 0; j <= row && j < long(full.size()); ++j)
                    if (full[std::size_t(j)] == word) a_tc += alpha.at(row, j, ell);
                if (a_tc == 0.0) continue;
                for (long c = 0; c < d; ++c)
                    grads[si][std::size_t(c)] -=
                        a_tc * (model.out_emb.at(target, c) - mean_emb[std::size_t(c)]);
            }
        }
    }
    const double inv = 1.0 / double(train.size());
    for (auto& g : grads)
        for (double& x : g) x *= inv;
    return grads;
}

std::unique_ptr<LanguageModel> EditOutcome::model_at(long epoch) const {
    if (epoch < 0 || epoch >= long(epochs.size())) throw IndexError("epoch out of range");
    switch (method) {
        case EditMethod::Senses: {
            auto v = std::make_unique<OwningSenseView>();
            v->base = bp_base;
            v->delta = sense_snapshots[std::size_t(epoch)].clone();
            return v;
        }
        case EditMethod::Lora: {
            if (target == "host") {
                auto v = std::make_unique<OwningLoraHostView>();
                v->base = host_base;
                v->lora = clone_adapters(lora_snapshots[std::size_t(epoch)]);
                return v;
            }
            auto v = std::make_unique<OwningLoraBpView>();
            v->base = bp_base;
            v->lora = clone_adapters(lora_snapshots[std::size_t(epoch)]);
            return v;
        }
        case EditMethod::Full: {
            if (target == "host")
                return std::make_unique<OwningHostView>(materialize_host(epoch));
            return std::make_unique<OwningBpView>(materialize_backpack(epoch));
        }
    }
    throw ConfigError("unknown edit method");
}

BackpackModel EditOutcome::materialize_backpack(long epoch) const {
    if (!bp_base) throw ConfigError("outcome does not target a backpack");
    if (epoch < 0 || epoch >= long(epochs.size())) throw IndexError("epoch out of range");
    switch (method) {
        case EditMethod::Senses:
            return bp_base->with_delta_applied(sense_snapshots[std::size_t(epoch)]);
        case EditMethod::Full: {
            BackpackModel m = bp_base->clone();
            unflatten_params(flat_snapshots[std::size_t(epoch)], m.named_params());
            return m;
        }
        case EditMethod::Lora: {
            BackpackModel m = bp_base->clone();
            m.ctx.merge_lora(lora_snapshots[std::size_t(epoch)]);
            return m;
        }
    }
    throw ConfigError("unknown edit method");
}

HostTransformerLM EditOutcome::materialize_host(long epoch) const {
    if (!host_base) throw ConfigError("outcome does not target the host model");
    if (epoch < 0 || epoch >= long(epochs.size())) throw IndexError("epoch out of range");
    switch (method) {
        case EditMethod::Full: {
            HostTransformerLM m = host_base->clone();
            unflatten_params(flat_snapshots[std::size_t(epoch)], m.named_params());
            return m;
        }
        case EditMethod::Lora: {
            HostTransformerLM m = host_base->clone();
            m.stack.merge_lora(lora_snapshots[std::size_t(epoch)]);
            return m;
        }
        case EditMethod::Senses:
            throw ConfigError("sense finetuning does not apply to the host model");
    }
    throw ConfigError("unknown edit method");
}

nlohmann::json EditOutcome::trace_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (std::size_t e = 0; e < epochs.size(); ++e)
        arr.push_back({{"epoch", e},
                       {"train_loss", epochs[e].train_loss},
                       {"ball_ratio", epochs[e].ball_ratio},
                       {"chosen", long(e) == chosen_epoch}});
    return arr;
}

}  // namespace canon
