#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "plat/backbone.hpp"
#include "plat/tensor.hpp"

namespace plat {

enum class Aggregation { ema, none, residual };

struct PlannerConfig {
    int d_s = 64;           // latent width
    int n_latent = 1;       // latent states per reasoning step
    double alpha_ema = 0.9; // smoothing coefficient (0.5 pairs well with n_latent=2)
    double sigma_noise = 0.1;
    int max_plan_steps = 6;
    Aggregation aggregation = Aggregation::ema;
    bool context_ablation = false;  // planner input sees a one-token stub, not the question

    void validate() const;
};

// The four affine maps bridging backbone width d_m and latent width d_s.
// enc and h2l are deliberately distinct parameter sets.
struct Projectors {
    Tensor enc_w, enc_b;  // d_m -> d_s, initial state from the question
    Tensor h2l_w, h2l_b;  // d_m -> d_s, planner output
    Tensor l2h_w, l2h_b;  // d_s -> d_m, planner input
    Tensor dec_w, dec_b;  // d_s -> d_m, verbalization prefix
};

// Applies y = x W + b for a [1, in] row.
Tensor project(const Tensor& x, const Tensor& w, const Tensor& b);

// Backbone + planner extension layers + projectors. The planner always runs on
// `net`; the decoder runs on `decoder_net` when present (after the RL split or
// under the independent-decoder variant) and on the shared `net` otherwise.
struct ModelBundle {
    BackboneConfig bcfg;
    PlannerConfig pcfg;
    Backbone net;
    std::optional<Backbone> decoder_net;
    Projectors proj;

    const Backbone& decoder() const { return decoder_net ? *decoder_net : net; }
    bool split() const { return decoder_net.has_value(); }
};

ModelBundle make_bundle(const BackboneConfig& bcfg, const PlannerConfig& pcfg, uint64_t seed,
                        bool independent_decoder = false);

// Duplicates the shared backbone into a trainable decoder copy (planner
// extension blocks are not copied; the decoder never runs them).
void split_decoder(ModelBundle& bundle);

ModelBundle clone_bundle(const ModelBundle& bundle);

// Flat named view over every parameter: "net.*", "dec.*", "proj.*".
std::map<std::string, Tensor> named_parameters(const ModelBundle& bundle);

// Frozen/trainable name sets for the RL phase: everything on the planner side
// (net.*, proj.enc/h2l/l2h) is frozen; the decoder copy and proj.dec train.
struct ParamPartition {
    std::vector<std::string> frozen;
    std::vector<std::string> trainable;
};

ParamPartition rl_partition(const ModelBundle& bundle);

// Byte-level snapshot/compare used to assert the frozen set never moves.
std::map<std::string, std::vector<double>> snapshot_params(const ModelBundle& bundle,
                                                           const std::vector<std::string>& names);
bool verify_frozen(const ModelBundle& bundle,
                   const std::map<std::string, std::vector<double>>& before);

}  // namespace plat
