#include "plat/backbone.hpp"

#include <cmath>

#include "plat/errors.hpp"
#include "plat/rng.hpp"

namespace plat {

void BackboneConfig::validate() const {
    if (d_m < 1 || n_heads < 1 || d_m % n_heads != 0)
        throw ConfigError("backbone: d_m must be a positive multiple of n_heads");
    if (n_layers < 1 || n_planner_layers < 0)
        throw ConfigError("backbone: layer counts out of range");
    if (max_seq_len < 1 || vocab_size < 1)
        throw ConfigError("backbone: max_seq_len and vocab_size must be positive");
}

MixedSequence to_mixed(const std::vector<int>& token_ids) {
    MixedSequence seq;
    seq.reserve(token_ids.size());
    for (int t : token_ids) seq.push_back(MixedItem::tok(t));
    return seq;
}

Backbone::Backbone(const BackboneConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    const int d = cfg_.d_m, dh = cfg_.head_dim();
    auto w = [&](const std::string& name, std::vector<int> shape) {
        params_[name] = Tensor::randn(std::move(shape), cfg_.init_std, rng, true);
    };
    auto zeros = [&](const std::string& name, std::vector<int> shape) {
        params_[name] = Tensor::zeros(std::move(shape), true);
    };
    auto ones = [&](const std::string& name, std::vector<int> shape) {
        params_[name] = Tensor::full(std::move(shape), 1.0, true);
    };

    w("tok_emb", {cfg_.vocab_size, d});
    w("pos_emb", {cfg_.max_seq_len, d});
    auto make_block = [&](const std::string& pre) {
        ones(pre + "ln1_g", {d});
        zeros(pre + "ln1_b", {d});
        ones(pre + "ln2_g", {d});
        zeros(pre + "ln2_b", {d});
        for (int h = 0; h < cfg_.n_heads; ++h) {
            const std::string hs = std::to_string(h);
            w(pre + "attn_wq" + hs, {d, dh});
            zeros(pre + "attn_bq" + hs, {dh});
            w(pre + "attn_wk" + hs, {d, dh});
            zeros(pre + "attn_bk" + hs, {dh});
            w(pre + "attn_wv" + hs, {d, dh});
            zeros(pre + "attn_bv" + hs, {dh});
            w(pre + "attn_wo" + hs, {dh, d});
        }
        zeros(pre + "attn_bo", {d});
        w(pre + "mlp_w1", {d, 4 * d});
        zeros(pre + "mlp_b1", {4 * d});
        w(pre + "mlp_w2", {4 * d, d});
        zeros(pre + "mlp_b2", {d});
    };
    for (int l = 0; l < cfg_.n_layers; ++l) make_block("blk" + std::to_string(l) + ".");
    for (int l = 0; l < cfg_.n_planner_layers; ++l) make_block("pblk" + std::to_string(l) + ".");
    ones("lnf_g", {d});
    zeros("lnf_b", {d});
    w("head_w", {d, cfg_.vocab_size});
    zeros("head_b", {cfg_.vocab_size});
}

const Tensor& Backbone::p(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ContractError("backbone: missing parameter '" + name + "'");
    return it->second;
}

Tensor Backbone::embed_mixed(const MixedSequence& seq) const {
    if (seq.empty()) throw ContractError("embed_mixed: empty sequence");
    if (seq.size() > static_cast<size_t>(cfg_.max_seq_len))
        throw CapacityError("sequence length " + std::to_string(seq.size()) + " exceeds " +
                            std::to_string(cfg_.max_seq_len));

    // Consecutive token items share one embedding lookup.
    std::vector<Tensor> rows;
    std::vector<int> run;
    auto flush = [&] {
        if (!run.empty()) {
            rows.push_back(embedding_lookup(p("tok_emb"), run));
            run.clear();
        }
    };
    for (const auto& item : seq) {
        if (item.is_vec()) {
            if (item.vec.rank() != 2 || item.vec.dim(0) != 1 || item.vec.dim(1) != cfg_.d_m)
                throw ShapeError("mixed item vector must be a [1, d_m] row");
            flush();
            rows.push_back(item.vec);
        } else {
            if (item.token < 0 || item.token >= cfg_.vocab_size)
                throw ShapeError("mixed item token id out of vocabulary");
            run.push_back(item.token);
        }
    }
    flush();
    Tensor content = rows.size() == 1 ? rows[0] : concat_rows(rows);

    std::vector<int> positions(seq.size());
    for (size_t i = 0; i < seq.size(); ++i) positions[i] = static_cast<int>(i);
    return add(content, embedding_lookup(p("pos_emb"), positions));
}

Tensor Backbone::block(Tensor x, const std::string& pre) const {
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(cfg_.head_dim()));
    Tensor h = layernorm_lastdim(x, p(pre + "ln1_g"), p(pre + "ln1_b"));
    Tensor attn;
    for (int head = 0; head < cfg_.n_heads; ++head) {
        const std::string hs = std::to_string(head);
        Tensor q = add(matmul(h, p(pre + "attn_wq" + hs)), p(pre + "attn_bq" + hs));
        Tensor k = add(matmul(h, p(pre + "attn_wk" + hs)), p(pre + "attn_bk" + hs));
        Tensor v = add(matmul(h, p(pre + "attn_wv" + hs)), p(pre + "attn_bv" + hs));
        Tensor scores = scale(matmul(q, transpose2d(k)), inv_sqrt_dh);
        Tensor weights = causal_softmax(scores);
        Tensor proj = matmul(matmul(weights, v), p(pre + "attn_wo" + hs));
        attn = attn.defined() ? add(attn, proj) : proj;
    }
    x = add(x, add(attn, p(pre + "attn_bo")));
    Tensor m = layernorm_lastdim(x, p(pre + "ln2_g"), p(pre + "ln2_b"));
    m = gelu(add(matmul(m, p(pre + "mlp_w1")), p(pre + "mlp_b1")));
    m = add(matmul(m, p(pre + "mlp_w2")), p(pre + "mlp_b2"));
    return add(x, m);
}

Tensor Backbone::hidden_states(const MixedSequence& seq, bool use_planner_layers) const {
    Tensor x = embed_mixed(seq);
    for (int l = 0; l < cfg_.n_layers; ++l) x = block(x, "blk" + std::to_string(l) + ".");
    if (use_planner_layers)
        for (int l = 0; l < cfg_.n_planner_layers; ++l)
            x = block(x, "pblk" + std::to_string(l) + ".");
    return layernorm_lastdim(x, p("lnf_g"), p("lnf_b"));
}

Tensor Backbone::logits(const Tensor& hidden) const {
    return add(matmul(hidden, p("head_w")), p("head_b"));
}

Backbone Backbone::clone() const {
    Backbone out;
    out.cfg_ = cfg_;
    for (const auto& [name, t] : params_)
        out.params_[name] = Tensor::from_values(t.shape(), t.values(), true);
    return out;
}

}  // namespace plat
