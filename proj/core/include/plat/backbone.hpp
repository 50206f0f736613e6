#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "plat/tensor.hpp"

namespace plat {

class Rng;

struct BackboneConfig {
    int d_m = 128;
    int n_layers = 4;
    int n_planner_layers = 2;
    int n_heads = 4;
    int max_seq_len = 256;
    int vocab_size = 0;
    double init_std = 0.02;

    void validate() const;
    int head_dim() const { return d_m / n_heads; }
};

// One element of an interleaved input sequence: either a token id or a
// continuous row vector of width d_m. Positions run in a single shared index
// stream over the whole sequence.
struct MixedItem {
    int token = -1;
    Tensor vec;

    static MixedItem tok(int id) { return MixedItem{id, Tensor{}}; }
    static MixedItem cont(Tensor v) { return MixedItem{-1, std::move(v)}; }
    bool is_vec() const { return vec.defined(); }
};
using MixedSequence = std::vector<MixedItem>;

MixedSequence to_mixed(const std::vector<int>& token_ids);

// Decoder-only transformer with learned absolute positions and a stack of
// extension blocks applied only on planner passes. Parameters live in a named
// store so checkpointing and optimizers can treat them uniformly.
class Backbone {
public:
    Backbone() = default;
    Backbone(const BackboneConfig& cfg, Rng& rng);

    const BackboneConfig& config() const { return cfg_; }
    std::map<std::string, Tensor>& params() { return params_; }
    const std::map<std::string, Tensor>& params() const { return params_; }

    // Token items get token+position embeddings; continuous items pass through
    // verbatim plus the position embedding.
    Tensor embed_mixed(const MixedSequence& seq) const;

    // Causal self-attention stack; with use_planner_layers the extension
    // blocks run after the base stack. Output is post final-layernorm,
    // shape [len, d_m].
    Tensor hidden_states(const MixedSequence& seq, bool use_planner_layers) const;

    // Unnormalized next-token scores, [len, vocab_size].
    Tensor logits(const Tensor& hidden) const;

    // Deep copy: fresh leaf tensors with identical values.
    Backbone clone() const;

private:
    const Tensor& p(const std::string& name) const;
    Tensor block(Tensor x, const std::string& prefix) const;

    BackboneConfig cfg_;
    std::map<std::string, Tensor> params_;
};

}  // namespace plat
