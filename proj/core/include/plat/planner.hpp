#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "plat/model.hpp"
#include "plat/vocab.hpp"

namespace plat {

class Rng;

// Thread-local forward-pass counters; inference traces and the efficiency
// accounting read these.
struct PassStats {
    long planner = 0;  // plan_next backbone passes
    long encoder = 0;  // encode_initial passes
    long probe = 0;    // first-token probes
    long answer = 0;   // answer-decode passes (one per generated token)
    long step_decode = 0;  // full intermediate decodes (eager mode only)
    long last_input_len = 0;
};
PassStats& pass_stats();
void reset_pass_stats();

// Raw planner output for one (step, slot); values is a [1, d_s] row.
struct LatentState {
    Tensor values;
    int step_index = 0;  // 1-based
    int slot_index = 0;  // 1-based, <= n_latent
};

struct LatentTrajectory {
    std::vector<std::vector<LatentState>> steps;  // each inner list has n_latent entries
    bool terminated = true;  // false when capacity truncated the roll

    std::vector<const LatentState*> flat() const;
};

// EMA-smoothed decoder input for one step: n_latent slots of [1, d_s].
struct AggregatedState {
    std::vector<Tensor> slots;
    int step_index = 0;
};

// s_{1,1}: encoder projection of the question's hidden state at the trailing
// encoder token. The question must end with that token.
LatentState encode_initial(const ModelBundle& bundle, const Vocab& vocab,
                           const std::vector<int>& question_ids);

// One autoregressive planner step over [question, plan-delimiter, projected
// history]. Deterministic: no sampling anywhere on this path.
Tensor plan_next(const ModelBundle& bundle, const Vocab& vocab,
                 const std::vector<int>& question_ids,
                 const std::vector<const LatentState*>& history);

// a_k = alpha*raw + (1-alpha)*prev; prev must be absent exactly when k == 1,
// in which case raw passes through unchanged.
Tensor aggregate_ema(const Tensor& raw, const Tensor* prev, double alpha);
Tensor aggregate_slot(const Tensor& raw, const Tensor* prev, const PlannerConfig& cfg);

// Adds iid Gaussian noise to every slot (training only); sigma == 0 is the
// identity. Noise never touches the raw trajectory the planner feeds on.
AggregatedState inject_noise(const AggregatedState& state, double sigma, Rng& rng);

struct RollResult {
    LatentTrajectory trajectory;
    std::vector<AggregatedState> aggregated;
};

// Rolls T steps: slot (1,1) comes from the encoder, the remaining
// n_latent*T - 1 states from plan_next, then per-step aggregation. Capacity
// overflow truncates and clears the terminated flag.
RollResult roll_trajectory(const ModelBundle& bundle, const Vocab& vocab,
                           const std::vector<int>& question_ids, int t_steps);

// Appends one more step's states onto an existing roll (used by the lazy
// inference loop). Returns false if capacity stopped the extension.
bool extend_one_step(const ModelBundle& bundle, const Vocab& vocab,
                     const std::vector<int>& question_ids, LatentTrajectory& traj,
                     std::vector<AggregatedState>& aggregated);

// Debug dump: one JSON line per latent state.
void dump_trajectory_jsonl(const LatentTrajectory& traj, const std::string& path);

}  // namespace plat
