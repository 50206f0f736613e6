#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "plat/data.hpp"
#include "plat/model.hpp"
#include "plat/verbalizer.hpp"

namespace plat {

enum class ModelKind { plat, cot };

struct EvalOptions {
    ModelKind kind = ModelKind::plat;
    int max_steps = 6;
    int max_tokens = 24;
    double tau = 0.9;
    int n_samples = 32;
    std::vector<int> ks = {1, 4, 8, 16};
    uint64_t seed = 1;
};

// ---- generation helpers --------------------------------------------------------

// Explicit chain generation for the CoT baseline: autoregressive continuation
// of the question until eos (or budget). Returns generated ids only.
std::vector<int> cot_generate(const ModelBundle& bundle, const Vocab& vocab,
                              const std::vector<int>& question_ids, DecodeMode mode, double tau,
                              int max_tokens, Rng* rng = nullptr);

// Answer value of a generated chain: number after the final answer delimiter.
std::optional<long long> cot_answer_value(const Vocab& vocab, const std::vector<int>& generated);

// Splits a generated chain into step texts (equation segments between step
// delimiters, answer part excluded).
std::vector<std::string> cot_step_texts(const Vocab& vocab, const std::vector<int>& generated);

// Greedy answer for either model kind.
std::optional<long long> greedy_answer(const ModelBundle& bundle, const Vocab& vocab,
                                       const ReasoningSample& sample, const EvalOptions& opts,
                                       InferenceTrace* trace_out = nullptr);

// Sampled answer (one draw) for either model kind.
std::optional<long long> sampled_answer(const ModelBundle& bundle, const Vocab& vocab,
                                        const ReasoningSample& sample, const EvalOptions& opts,
                                        Rng& rng);

// ---- metrics -------------------------------------------------------------------

double greedy_accuracy(const ModelBundle& bundle, const Vocab& vocab,
                       const std::vector<ReasoningSample>& dataset, const EvalOptions& opts,
                       std::vector<InferenceTrace>* traces_out = nullptr);

// Unbiased estimator 1 - C(n-c, k)/C(n, k); exact integer arithmetic when the
// binomials fit 64 bits, long-double product form beyond.
double pass_at_k_estimate(int n, int c, int k);

struct PassAtKTable {
    std::vector<int> ks;
    std::vector<double> values;           // aggregate over questions
    std::vector<int> correct_per_question;
    int n_samples = 0;
};

PassAtKTable pass_at_k(const ModelBundle& bundle, const Vocab& vocab,
                       const std::vector<ReasoningSample>& dataset, const EvalOptions& opts);

struct EfficiencyCounts {
    double planner_mean = 0.0;  // plan_next + encoder passes
    double probe_mean = 0.0;
    double answer_mean = 0.0;
    long traces = 0;
};

// Means over greedy traces; throws if any trace violates the counting
// invariant planner = n_latent*T - 1 (+1 encoder), probes = T.
EfficiencyCounts efficiency_counts(const std::vector<InferenceTrace>& traces, int n_latent);
bool trace_counters_consistent(const InferenceTrace& trace, int n_latent);

// ---- entropy -------------------------------------------------------------------

double shannon_entropy(const std::vector<double>& probs);

struct EntropyProfile {
    std::vector<double> mean_h;  // per progress bin
    std::vector<long> count;
};

// First-token distribution entropy at each reasoning step, binned by
// normalized progress k/T. For the CoT baseline the measurement point is each
// step-initial position of the greedy generation.
EntropyProfile entropy_profile(const ModelBundle& bundle, const Vocab& vocab,
                               const std::vector<ReasoningSample>& dataset,
                               const EvalOptions& opts, int bins);

// ---- clustering + validity ------------------------------------------------------

// Canonical form of an equation step: commutative operands sorted, whitespace
// normalized. Unparseable text has no canonical form.
std::optional<std::string> canonical_step_key(const std::string& text);

// Groups semantically equivalent steps; unparseable steps stay singletons.
// Cluster order and representatives are independent of input order.
struct StepClusters {
    std::vector<std::vector<size_t>> groups;        // indices into the input
    std::vector<std::string> representatives;       // lexicographically smallest member
};
StepClusters cluster_steps(const std::vector<std::string>& steps);

// A step is valid iff its equation parses, is arithmetically true, and every
// operand is a question number, a prior valid result, or a small constant
// (0..12). gt_steps are accepted for interface parity with the judging
// criteria but the rule does not need them.
bool validate_step(const std::string& step_text, const std::string& question,
                   const std::vector<std::string>& prior_valid_steps,
                   const std::vector<std::string>& gt_steps);

// ---- branching -----------------------------------------------------------------

using StepSampler = std::function<std::vector<std::string>(const ReasoningSample&, Rng&)>;

StepSampler plat_step_sampler(const ModelBundle& bundle, const Vocab& vocab,
                              const EvalOptions& opts);
StepSampler cot_step_sampler(const ModelBundle& bundle, const Vocab& vocab,
                             const EvalOptions& opts);

struct BranchRecord {
    size_t question_id = 0;
    std::vector<int> branch_per_bin;
    std::vector<int> valid_per_bin;
    int total_branches = 0;  // distinct clusters over all sampled steps
    int total_valid = 0;
    bool has_steps = false;  // false when every sample answered immediately
};

struct BranchCurves {
    std::vector<double> branch_mean;
    std::vector<double> valid_mean;
};

std::vector<BranchRecord> branch_analysis(const StepSampler& sampler,
                                          const std::vector<ReasoningSample>& dataset,
                                          int n_samples, int bins, uint64_t seed);
BranchCurves aggregate_branches(const std::vector<BranchRecord>& records, int bins);

// ---- report files ----------------------------------------------------------------

struct EvalReport {
    std::string dataset_id;
    double greedy = 0.0;
    PassAtKTable pass_table;
    EfficiencyCounts counts;
    int n_questions = 0;
    double tau = 0.0;
    std::string traces_path;
};

void write_eval_json(const std::string& path, const EvalReport& report);
void write_branching_csv(const std::string& path, const BranchCurves& curves,
                         const std::string& method, bool append = false);
void write_entropy_csv(const std::string& path, const EntropyProfile& profile,
                       const std::string& method, bool append = false);
void write_scatter_csv(const std::string& path, const std::vector<BranchRecord>& records,
                       const std::string& method, bool append = false);

}  // namespace plat
