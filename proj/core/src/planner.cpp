#include "plat/planner.hpp"

#include <fstream>

#include <json.hpp>

#include "plat/errors.hpp"
#include "plat/rng.hpp"

namespace plat {

namespace {
thread_local PassStats g_stats;
}

PassStats& pass_stats() { return g_stats; }
void reset_pass_stats() { g_stats = PassStats{}; }

std::vector<const LatentState*> LatentTrajectory::flat() const {
    std::vector<const LatentState*> out;
    for (const auto& step : steps)
        for (const auto& s : step) out.push_back(&s);
    return out;
}

LatentState encode_initial(const ModelBundle& bundle, const Vocab& vocab,
                           const std::vector<int>& question_ids) {
    if (question_ids.empty() || question_ids.back() != vocab.specials().enc)
        throw ContractError("encode_initial: question must end with the encoder token");
    Tensor h = bundle.net.hidden_states(to_mixed(question_ids), /*use_planner_layers=*/true);
    ++g_stats.encoder;
    g_stats.last_input_len = static_cast<long>(question_ids.size());
    // Causal attention: the last position is the encoder-token position.
    Tensor last = slice_rows(h, h.dim(0) - 1, 1);
    return LatentState{project(last, bundle.proj.enc_w, bundle.proj.enc_b), 1, 1};
}

Tensor plan_next(const ModelBundle& bundle, const Vocab& vocab,
                 const std::vector<int>& question_ids,
                 const std::vector<const LatentState*>& history) {
    MixedSequence seq;
    if (bundle.pcfg.context_ablation) {
        seq.push_back(MixedItem::tok(vocab.specials().pad));
    } else {
        for (int t : question_ids) seq.push_back(MixedItem::tok(t));
    }
    seq.push_back(MixedItem::tok(vocab.specials().plan));
    for (const LatentState* s : history)
        seq.push_back(MixedItem::cont(project(s->values, bundle.proj.l2h_w, bundle.proj.l2h_b)));
    if (seq.size() > static_cast<size_t>(bundle.bcfg.max_seq_len))
        throw CapacityError("plan_next: sequence of " + std::to_string(seq.size()) +
                            " exceeds max_seq_len");

    Tensor h = bundle.net.hidden_states(seq, /*use_planner_layers=*/true);
    ++g_stats.planner;
    g_stats.last_input_len = static_cast<long>(seq.size());
    Tensor last = slice_rows(h, h.dim(0) - 1, 1);
    return project(last, bundle.proj.h2l_w, bundle.proj.h2l_b);
}

Tensor aggregate_ema(const Tensor& raw, const Tensor* prev, double alpha) {
    if (alpha < 0.0 || alpha > 1.0) throw ConfigError("aggregate_ema: alpha outside [0,1]");
    if (prev == nullptr) return raw;  // first step: coefficient forced to 1
    return add(scale(raw, alpha), scale(*prev, 1.0 - alpha));
}

Tensor aggregate_slot(const Tensor& raw, const Tensor* prev, const PlannerConfig& cfg) {
    switch (cfg.aggregation) {
        case Aggregation::ema: return aggregate_ema(raw, prev, cfg.alpha_ema);
        case Aggregation::none: return raw;
        case Aggregation::residual: return prev == nullptr ? raw : add(raw, *prev);
    }
    throw ConfigError("unknown aggregation mode");
}

AggregatedState inject_noise(const AggregatedState& state, double sigma, Rng& rng) {
    if (sigma < 0.0) throw ConfigError("inject_noise: sigma must be >= 0");
    if (sigma == 0.0) return state;
    AggregatedState out;
    out.step_index = state.step_index;
    out.slots.reserve(state.slots.size());
    for (const auto& slot : state.slots) {
        Tensor noise = Tensor::zeros(slot.shape());
        for (auto& v : noise.values()) v = rng.gaussian(0.0, sigma);
        out.slots.push_back(add(slot, noise));
    }
    return out;
}

namespace {

// Aggregates step k (1-based) from raw states and the previous aggregate.
AggregatedState aggregate_step(const std::vector<LatentState>& raw_step,
                               const AggregatedState* prev, const PlannerConfig& cfg) {
    AggregatedState agg;
    agg.step_index = raw_step.front().step_index;
    for (size_t i = 0; i < raw_step.size(); ++i) {
        const Tensor* prev_slot = prev ? &prev->slots[i] : nullptr;
        agg.slots.push_back(aggregate_slot(raw_step[i].values, prev_slot, cfg));
    }
    return agg;
}

}  // namespace

bool extend_one_step(const ModelBundle& bundle, const Vocab& vocab,
                     const std::vector<int>& question_ids, LatentTrajectory& traj,
                     std::vector<AggregatedState>& aggregated) {
    const int n_latent = bundle.pcfg.n_latent;
    const int k = static_cast<int>(traj.steps.size()) + 1;
    std::vector<LatentState> step;
    step.reserve(static_cast<size_t>(n_latent));  // history holds pointers into it
    auto history = traj.flat();
    // Planner input length: context + plan delimiter + one item per history state.
    const size_t ctx = bundle.pcfg.context_ablation ? 1 : question_ids.size();
    for (int i = 1; i <= n_latent; ++i) {
        if (k == 1 && i == 1) {
            step.push_back(encode_initial(bundle, vocab, question_ids));
        } else {
            if (ctx + 1 + history.size() > static_cast<size_t>(bundle.bcfg.max_seq_len)) {
                traj.terminated = false;
                return false;
            }
            step.push_back(LatentState{plan_next(bundle, vocab, question_ids, history), k, i});
        }
        history.push_back(&step.back());
    }
    const AggregatedState* prev = aggregated.empty() ? nullptr : &aggregated.back();
    aggregated.push_back(aggregate_step(step, prev, bundle.pcfg));
    traj.steps.push_back(std::move(step));
    return true;
}

RollResult roll_trajectory(const ModelBundle& bundle, const Vocab& vocab,
                           const std::vector<int>& question_ids, int t_steps) {
    if (t_steps < 1 || t_steps > bundle.pcfg.max_plan_steps)
        throw ContractError("roll_trajectory: t_steps outside [1, max_plan_steps]");
    RollResult out;
    for (int k = 0; k < t_steps; ++k) {
        if (!extend_one_step(bundle, vocab, question_ids, out.trajectory, out.aggregated)) break;
    }
    return out;
}

void dump_trajectory_jsonl(const LatentTrajectory& traj, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    for (const auto& step : traj.steps) {
        for (const auto& s : step) {
            nlohmann::json j;
            j["step"] = s.step_index;
            j["slot"] = s.slot_index;
            j["values"] = s.values.values();
            f << j.dump() << "\n";
        }
    }
}

}  // namespace plat
