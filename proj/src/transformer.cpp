#include "canon/transformer.hpp"

#include <cmath>

namespace canon {

namespace {

Matrix tensor_to_matrix(const Tensor& t) {
    Matrix m(t.dim(0), t.dim(1));
    std::copy(t.data().begin(), t.data().end(), m.v.begin());
    return m;
}

}  // namespace

std::vector<Tensor> LoraAdapters::trainable() const {
    std::vector<Tensor> out;
    for (const auto& a : adapters) {
        out.push_back(a.q_up);
        out.push_back(a.r_up);
        out.push_back(a.q_down);
        out.push_back(a.r_down);
    }
    return out;
}

std::vector<std::pair<std::string, Tensor>> LoraAdapters::named_params() const {
    std::vector<std::pair<std::string, Tensor>> out;
    for (std::size_t i = 0; i < adapters.size(); ++i) {
        const std::string p = "lora/layer" + std::to_string(layer_lo + long(i)) + "/";
        out.emplace_back(p + "q_up", adapters[i].q_up);
        out.emplace_back(p + "r_up", adapters[i].r_up);
        out.emplace_back(p + "q_down", adapters[i].q_down);
        out.emplace_back(p + "r_down", adapters[i].r_down);
    }
    return out;
}

TransformerStack TransformerStack::init(long vocab, long d, long heads, long mlp,
                                        long n_layers, long max_len, Rng& rng) {
    TransformerStack s;
    s.d = d;
    s.heads = heads;
    s.mlp = mlp;
    s.n_layers = n_layers;
    s.vocab = vocab;
    s.max_len = max_len;
    const double std0 = 0.02;
    s.tok_emb = Tensor::randn(rng, {vocab, d}, std0, true);
    s.pos_emb = Tensor::randn(rng, {max_len, d}, std0, true);
    for (long i = 0; i < n_layers; ++i) {
        Layer l;
        l.ln1_g = Tensor::full({d}, 1.0, true);
        l.ln1_b = Tensor::zeros({d}, true);
        l.wq = Tensor::randn(rng, {d, d}, std0, true);
        l.wk = Tensor::randn(rng, {d, d}, std0, true);
        l.wv = Tensor::randn(rng, {d, d}, std0, true);
        l.wo = Tensor::randn(rng, {d, d}, std0, true);
        l.bq = Tensor::zeros({d}, true);
        l.bk = Tensor::zeros({d}, true);
        l.bv = Tensor::zeros({d}, true);
        l.bo = Tensor::zeros({d}, true);
        l.ln2_g = Tensor::full({d}, 1.0, true);
        l.ln2_b = Tensor::zeros({d}, true);
        l.w_up = Tensor::randn(rng, {d, mlp}, std0, true);
        l.b_up = Tensor::zeros({mlp}, true);
        l.w_down = Tensor::randn(rng, {mlp, d}, std0, true);
        l.b_down = Tensor::zeros({d}, true);
        s.layers.push_back(std::move(l));
    }
    s.lnf_g = Tensor::full({d}, 1.0, true);
    s.lnf_b = Tensor::zeros({d}, true);
    return s;
}

Tensor TransformerStack::hidden(const std::vector<long>& tokens,
                                const LoraAdapters* lora) const {
    check_tokens(tokens, vocab, max_len);
    const long t_len = long(tokens.size());
    const long dh = d / heads;

    std::vector<long> pos(tokens.size());
    for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = long(i);
    Tensor x = add(gather_rows(tok_emb, tokens), gather_rows(pos_emb, pos));

    std::vector<long> causal(std::size_t(t_len));
    for (long i = 0; i < t_len; ++i) causal[std::size_t(i)] = i + 1;

    for (long li = 0; li < n_layers; ++li) {
        const Layer& l = layers[std::size_t(li)];
        Tensor h1 = layer_norm(x, l.ln1_g, l.ln1_b);
        Tensor q = add_bias(matmul(h1, l.wq), l.bq);
        Tensor k = add_bias(matmul(h1, l.wk), l.bk);
        Tensor v = add_bias(matmul(h1, l.wv), l.bv);
        std::vector<Tensor> heads_out;
        for (long h = 0; h < heads; ++h) {
            Tensor qh = col_slice(q, h * dh, (h + 1) * dh);
            Tensor kh = col_slice(k, h * dh, (h + 1) * dh);
            Tensor vh = col_slice(v, h * dh, (h + 1) * dh);
            Tensor scores = scale(matmul_nt(qh, kh), 1.0 / std::sqrt(double(dh)));
            Tensor att = prefix_softmax(scores, causal);
            heads_out.push_back(matmul(att, vh));
        }
        Tensor ctx = concat_cols(heads_out);
        x = add(x, add_bias(matmul(ctx, l.wo), l.bo));

        Tensor h2 = layer_norm(x, l.ln2_g, l.ln2_b);
        Tensor up_pre = matmul(h2, l.w_up);
        const LoraAdapter* ad = lora ? lora->for_layer(li) : nullptr;
        if (ad) up_pre = add(up_pre, matmul(matmul(h2, ad->q_up), ad->r_up));
        Tensor up = gelu(add_bias(up_pre, l.b_up));
        Tensor down_pre = matmul(up, l.w_down);
        if (ad) down_pre = add(down_pre, matmul(matmul(up, ad->q_down), ad->r_down));
        x = add(x, add_bias(down_pre, l.b_down));
    }
    return layer_norm(x, lnf_g, lnf_b);
}

std::vector<std::pair<std::string, Tensor>> TransformerStack::named_params(
    const std::string& prefix) const {
    std::vector<std::pair<std::string, Tensor>> out;
    out.emplace_back(prefix + "tok_emb", tok_emb);
    out.emplace_back(prefix + "pos_emb", pos_emb);
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const std::string p = prefix + "layer" + std::to_string(i) + "/";
        const Layer& l = layers[i];
        out.emplace_back(p + "ln1_g", l.ln1_g);
        out.emplace_back(p + "ln1_b", l.ln1_b);
        out.emplace_back(p + "wq", l.wq);
        out.emplace_back(p + "wk", l.wk);
        out.emplace_back(p + "wv", l.wv);
        out.emplace_back(p + "wo", l.wo);
        out.emplace_back(p + "bq", l.bq);
        out.emplace_back(p + "bk", l.bk);
        out.emplace_back(p + "bv", l.bv);
        out.emplace_back(p + "bo", l.bo);
        out.emplace_back(p + "ln2_g", l.ln2_g);
        out.emplace_back(p + "ln2_b", l.ln2_b);
        out.emplace_back(p + "w_up", l.w_up);
        out.emplace_back(p + "b_up", l.b_up);
        out.emplace_back(p + "w_down", l.w_down);
        out.emplace_back(p + "b_down", l.b_down);
    }
    out.emplace_back(prefix + "lnf_g", lnf_g);
    out.emplace_back(prefix + "lnf_b", lnf_b);
    return out;
}

void TransformerStack::set_requires_grad(bool v) {
    for (auto& [name, t] : named_params("")) {
        (void)name;
        t.raw()->requires_grad = v;
    }
}

TransformerStack TransformerStack::clone() const {
    TransformerStack s = *this;
    s.tok_emb = tok_emb.clone(true);
    s.pos_emb = pos_emb.clone(true);
    s.layers.clear();
    for (const Layer& l : layers) {
        Layer c;
        c.ln1_g = l.ln1_g.clone(true);
        c.ln1_b = l.ln1_b.clone(true);
        c.wq = l.wq.clone(true);
        c.wk = l.wk.clone(true);
        c.wv = l.wv.clone(true);
        c.wo = l.wo.clone(true);
        c.bq = l.bq.clone(true);
        c.bk = l.bk.clone(true);
        c.bv = l.bv.clone(true);
        c.bo = l.bo.clone(true);
        c.ln2_g = l.ln2_g.clone(true);
        c.ln2_b = l.ln2_b.clone(true);
        c.w_up = l.w_up.clone(true);
        c.b_up = l.b_up.clone(true);
        c.w_down = l.w_down.clone(true);
        c.b_down = l.b_down.clone(true);
        s.layers.push_back(std::move(c));
    }
    s.lnf_g = lnf_g.clone(true);
    s.lnf_b = lnf_b.clone(true);
    return s;
}

LoraAdapters TransformerStack::make_lora(long layer_lo, long layer_hi, long rank,
                                         Rng& rng) const {
    if (layer_lo < 0 || layer_hi >= n_layers || layer_lo > layer_hi)
        throw ConfigError("lora layer range out of bounds");
    if (rank < 1 || rank > std::min(d, mlp))
        throw ConfigError("lora rank exceeds the smaller matrix dimension");
    LoraAdapters out;
    out.layer_lo = layer_lo;
    out.layer_hi = layer_hi;
    out.rank = rank;
    for (long i = layer_lo; i <= layer_hi; ++i) {
        LoraAdapter a;
        a.q_up = Tensor::zeros({d, rank}, true);
        a.r_up = Tensor::randn(rng, {rank, mlp}, 0.02, true);
        a.q_down = Tensor::zeros({mlp, rank}, true);
        a.r_down = Tensor::randn(rng, {rank, d}, 0.02, true);
        out.adapters.push_back(std::move(a));
    }
    return out;
}

void TransformerStack::merge_lora(const LoraAdapters& lora) {
    NoGradGuard ng;
    for (long li = lora.layer_lo; li <= lora.layer_hi; ++li) {
        Layer& l = layers[std::size_t(li)];
        const LoraAdapter* a = lora.for_layer(li);
        Tensor up = add(l.w_up, matmul(a->q_up, a->r_up));
        Tensor down = add(l.w_down, matmul(a->q_down, a->r_down));
        std::copy(up.data().begin(), up.data().end(), l.w_up.mutable_data().begin());
        std::copy(down.data().begin(), down.data().end(), l.w_down.mutable_data().begin());
    }
}

HostTransformerLM HostTransformerLM::init(const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    HostTransformerLM m;
    m.cfg = cfg;
    m.stack = TransformerStack::init(cfg.vocab_size, cfg.host_dim, cfg.host_heads,
                                     cfg.host_mlp_dim, cfg.host_layers, cfg.max_len, rng);
    m.out_emb = Tensor::randn(rng, {cfg.vocab_size, cfg.host_dim}, 0.02, true);
    return m;
}

Tensor HostTransformerLM::forward(const std::vector<long>& tokens,
                                  const LoraAdapters* lora) const {
    Tensor h = stack.hidden(tokens, lora);
    return matmul_nt(h, out_emb);
}

Matrix HostTransformerLM::logits(const std::vector<long>& tokens) const {
    NoGradGuard ng;
    return tensor_to_matrix(forward(tokens));
}

std::vector<std::pair<std::string, Tensor>> HostTransformerLM::named_params() const {
    auto out = stack.named_params("stack/");
    out.emplace_back("out_emb", out_emb);
    return out;
}

std::vector<Tensor> HostTransformerLM::trainable() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_params()) {
        (void)name;
        out.push_back(t);
    }
    return out;
}

void HostTransformerLM::set_requires_grad(bool v) {
    stack.set_requires_grad(v);
    out_emb.raw()->requires_grad = v;
}

HostTransformerLM HostTransformerLM::clone() const {
    HostTransformerLM m;
    m.cfg = cfg;
    m.stack = stack.clone();
    m.out_emb = out_emb.clone(true);
    return m;
}

Matrix LoraHostLM::logits(const std::vector<long>& tokens) const {
    NoGradGuard ng;
    Tensor t = base->forward(tokens, lora);
    Matrix m(t.dim(0), t.dim(1));
    std::copy(t.data().begin(), t.data().end(), m.v.begin());
    return m;
}

}  // namespace canon
