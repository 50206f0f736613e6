#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "plat/data.hpp"
#include "plat/model.hpp"
#include "plat/rng.hpp"
#include "plat/verbalizer.hpp"

namespace plat {

// ---- optimizer ---------------------------------------------------------------

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip_norm = 1.0;  // global grad-norm clip; 0 disables
};

class Adam {
public:
    Adam() = default;
    Adam(std::map<std::string, Tensor> params, AdamConfig cfg);

    void zero_grad();
    // Clips, applies one update, and returns the pre-clip global grad norm.
    double step();

    int64_t step_count() const { return t_; }
    const std::map<std::string, Tensor>& params() const { return params_; }
    AdamConfig& config() { return cfg_; }

    struct Moments {
        std::vector<double> m, v;
    };
    const std::map<std::string, Moments>& state() const { return state_; }
    void restore(const std::map<std::string, Moments>& state, int64_t t);

private:
    std::map<std::string, Tensor> params_;
    std::map<std::string, Moments> state_;
    AdamConfig cfg_;
    int64_t t_ = 0;
};

// ---- configs -----------------------------------------------------------------

enum class SftPhase { cot, plat };
enum class LrSchedule { constant, cosine };

struct SftConfig {
    SftPhase phase = SftPhase::cot;
    int epochs = 10;
    double lr = 1e-3;
    int batch_size = 16;
    double sigma_noise = 0.1;  // plat phase only
    uint64_t seed = 1;
    double clip_norm = 1.0;
    LrSchedule lr_schedule = LrSchedule::cosine;
    double lr_floor_frac = 0.1;  // cosine decays to lr * this
    // Steps are counted globally (the optimizer's step counter), so a resumed
    // run continues the same curve. 0 means "this run's epochs".
    int total_epochs_for_schedule = 0;

    void validate() const;
};

struct RlConfig {
    int group_size = 8;
    double lr = 1e-4;
    double kl_beta = 0.01;
    double clip_eps = 0.0;
    double temperature = 0.9;
    int batch_size = 8;    // question groups per update
    int steps = 50;        // optimizer updates
    uint64_t seed = 1;
    double clip_norm = 1.0;
    int max_tokens = 24;

    void validate() const;
};

// ---- logging -----------------------------------------------------------------

struct TrainLogRow {
    std::string phase;
    int64_t step = 0;
    double loss = 0.0;         // SFT per-token loss / RL surrogate loss
    double reward_mean = 0.0;  // RL only
    double kl = 0.0;           // RL only
    double grad_norm = 0.0;
};

class CsvLogger {
public:
    CsvLogger() = default;
    explicit CsvLogger(const std::string& path);
    void append(const TrainLogRow& row);

private:
    std::string path_;
    bool wrote_header_ = false;
};

// ---- SFT ---------------------------------------------------------------------

// Next-token cross-entropy over a teacher-forced token sequence; targets
// before `loss_from` (question positions) are masked out. Returns (sum-NLL
// tensor, token count).
std::pair<Tensor, int> sequence_loss(const Backbone& net, const std::vector<int>& ids,
                                     size_t loss_from);

// Reconstruction loss for one sample: rolls the trajectory teacher-forced to
// the segment count, aggregates, optionally injects noise, and sums each
// segment's cross-entropy under its soft prefix.
std::pair<Tensor, int> plat_sample_loss(const ModelBundle& bundle, const Vocab& vocab,
                                        const ReasoningSample& sample, double sigma, Rng* noise_rng);

struct SftResult {
    std::vector<double> step_losses;   // per optimizer step (per-token NLL)
    std::vector<double> epoch_losses;  // mean per-token NLL per epoch
};

using StepHook = std::function<void(int64_t step, double loss)>;
// Called after each completed epoch (1-based within this run); the pipeline
// uses it to drop per-epoch checkpoints so an interrupted run can resume.
using EpochHook = std::function<void(int epochs_completed)>;

SftResult train_cot_sft(ModelBundle& bundle, const Vocab& vocab,
                        const std::vector<ReasoningSample>& train, const SftConfig& cfg,
                        Adam& opt, Rng& order_rng, CsvLogger* log = nullptr,
                        const StepHook& hook = nullptr, const EpochHook& epoch_hook = nullptr);

// noise_rng drives the Gaussian denoising draws and is checkpointed by the
// caller so a resumed run continues the same stream.
SftResult train_plat_sft(ModelBundle& bundle, const Vocab& vocab,
                         const std::vector<ReasoningSample>& train, const SftConfig& cfg,
                         Adam& opt, Rng& order_rng, Rng& noise_rng, CsvLogger* log = nullptr,
                         const StepHook& hook = nullptr, const EpochHook& epoch_hook = nullptr);

// ---- rewards -----------------------------------------------------------------

struct RewardBreakdown {
    struct Step {
        bool equation_present = false;
        bool equation_correct = false;
        double value = 0.0;  // 0, 0.2 or 0.4
    };
    std::vector<Step> steps;
    bool answer_format_valid = false;  // number extracted, no illegal control tokens
    bool answer_correct = false;
    double answer_value = 0.0;  // -0.2, 0, 0.2 or 1.2
    double total = 0.0;
};

// Rule-based scoring of one rollout: per-step equation presence/correctness,
// then answer format and correctness against the ground truth.
RewardBreakdown compute_reward(const Vocab& vocab, const std::vector<std::vector<int>>& step_tokens,
                               const std::vector<int>& answer_tokens, long long ground_truth);

// Group-normalized advantages (population std); all-equal rewards give zero.
std::vector<double> group_advantages(const std::vector<double>& rewards);

// ---- GRPO --------------------------------------------------------------------

// Per-(rollout, segment) inputs of the clipped-surrogate objective.
struct SurrogateTerm {
    Tensor logp;         // scalar, log-prob of the sampled tokens under theta
    double logp_old = 0; // same quantity under the sampling-time policy
    double advantage = 0;
};

// (1/G) sum_i min(r_i*A_i, clip(r_i, 1-eps, 1+eps)*A_i), summed over segments;
// exposed separately so the analytic policy-gradient check can target it.
Tensor grpo_surrogate(const std::vector<SurrogateTerm>& terms, double clip_eps, int group_size);

struct GrpoStepStats {
    double objective = 0.0;
    double reward_mean = 0.0;
    double kl = 0.0;
    double grad_norm = 0.0;
    int groups = 0;
    int skipped_groups = 0;  // zero reward spread
};

// One GRPO update: rolls each question's deterministic trajectory once,
// samples G verbalizations per step from the fixed states, scores them, and
// updates only the trainable (decoder-side) parameters.
GrpoStepStats grpo_step(ModelBundle& bundle, const ModelBundle& ref_bundle, const Vocab& vocab,
                        const std::vector<const ReasoningSample*>& batch, const RlConfig& cfg,
                        Adam& opt, Rng& rng);

struct RlResult {
    std::vector<GrpoStepStats> per_step;
};

RlResult train_rl(ModelBundle& bundle, const Vocab& vocab,
                  const std::vector<ReasoningSample>& train, const RlConfig& cfg, Adam& opt,
                  Rng& rng, CsvLogger* log = nullptr);

}  // namespace plat
