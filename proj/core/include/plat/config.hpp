#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "plat/data.hpp"
#include "plat/evalsuite.hpp"
#include "plat/model.hpp"
#include "plat/training.hpp"

namespace plat {

// Whole-run configuration. Plain-text sectioned format:
//
//   # comment
//   [section]
//   key = value
//
// Every key has a default; unknown sections/keys or bad values are rejected
// with their location. Precedence: defaults < file < command-line overrides.
struct RunConfig {
    // [run]
    uint64_t seed = 1;
    std::string out_dir = "runs";

    // [backbone]
    int d_m = 128;
    int n_layers = 4;
    int n_planner_layers = 2;
    int n_heads = 4;
    int max_seq_len = 256;
    double init_std = 0.02;

    // [planner]
    int d_s = 64;
    int n_latent = 1;
    double alpha_ema = 0.9;
    double sigma_noise = 0.1;
    int max_plan_steps = 6;
    std::string aggregation = "ema";  // ema | none | residual
    bool context_ablation = false;
    bool independent_decoder = false;

    // [data]
    int data_n = 2000;
    int step_min = 1;
    int step_max = 3;
    int operand_min = 2;
    int operand_max = 12;
    long long value_cap = 60;
    double frac_train = 0.8;
    double frac_val = 0.1;
    double frac_test = 0.1;

    // [sft_cot]
    int cot_epochs = 20;
    double cot_lr = 1e-3;
    int cot_batch_size = 16;
    double cot_clip_norm = 1.0;
    std::string cot_lr_schedule = "cosine";  // cosine | constant

    // [sft_plat]
    int plat_epochs = 12;
    double plat_lr = 1e-3;
    int plat_batch_size = 8;
    double plat_clip_norm = 1.0;
    std::string plat_lr_schedule = "cosine";

    // [rl]
    int rl_group_size = 8;
    double rl_lr = 1e-4;
    double rl_kl_beta = 0.01;
    double rl_clip_eps = 0.0;
    double rl_temperature = 0.9;
    int rl_batch_size = 8;
    int rl_steps = 60;
    double rl_clip_norm = 1.0;

    // [eval]
    int eval_n_samples = 32;
    std::vector<int> eval_ks = {1, 4, 8, 16};
    double eval_tau = 0.9;
    int eval_bins = 10;
    int branch_samples = 10;
    int eval_max_tokens = 24;

    // ---- application ----
    void apply_text(const std::string& text, const std::string& origin);
    void apply_override(const std::string& key_eq_value);  // "section.key=value"
    std::string to_text() const;

    // ---- derived module configs ----
    BackboneConfig backbone(int vocab_size) const;
    PlannerConfig planner() const;
    GeneratorConfig generator() const;
    SplitFractions fractions() const;
    SftConfig sft(SftPhase phase) const;
    RlConfig rl() const;
    EvalOptions eval(ModelKind kind) const;
};

// defaults <- file (optional) <- overrides, in order.
RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides);
RunConfig parse_config_text(const std::string& text);

}  // namespace plat
