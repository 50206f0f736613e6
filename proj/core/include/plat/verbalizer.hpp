#pragma once

#include <optional>
#include <string>
#include <vector>

#include "plat/planner.hpp"

namespace plat {

enum class DecodeMode { greedy, sample };

struct DecodeRequest {
    const AggregatedState* state = nullptr;
    DecodeMode mode = DecodeMode::greedy;
    double tau = 0.9;     // sampling temperature; must be > 0 when sampling
    int max_tokens = 24;  // generation budget, >= 1
    // Generation stops when one of these is produced at position >= 2, or eos
    // anywhere; the stop token is included in the output.
    std::vector<int> stop_tokens;
};

// Autoregressive generation conditioned only on the aggregated state: prefix
// is [projected slots..., start-of-decoding token]. Counted against `counter`
// in PassStats (one pass per generated token) when given.
std::vector<int> decode_step(const ModelBundle& bundle, const Vocab& vocab,
                             const DecodeRequest& req, Rng* rng = nullptr,
                             long PassStats::*counter = nullptr);

// argmax of the first-token distribution; exactly one backbone pass.
int probe_first_token(const ModelBundle& bundle, const Vocab& vocab,
                      const AggregatedState& state);

// Full first-token distribution (softmax), used by the entropy profile.
std::vector<double> first_token_distribution(const ModelBundle& bundle,
                                             const AggregatedState& state);

struct StepRecord {
    int step_index = 0;
    int probe_token = -1;
    bool decoded = false;       // eager mode decodes every step
    std::vector<int> tokens;    // decoded tokens (answer or step text)
    std::string text;
};

enum class Termination { answer, step_cap };

struct InferenceTrace {
    std::string question;
    std::vector<StepRecord> steps;
    std::string answer_text;
    std::optional<long long> answer_value;
    Termination reason = Termination::step_cap;
    long planner_passes = 0;  // plan_next calls (excludes the encoder pass)
    long encoder_passes = 0;
    long probe_passes = 0;
    long answer_passes = 0;
    long step_decode_passes = 0;  // eager-only extra decodes
};

struct InferOptions {
    int max_steps = 6;  // reasoning-step cap (not an error when hit)
    DecodeMode answer_mode = DecodeMode::greedy;
    DecodeMode step_mode = DecodeMode::greedy;  // eager intermediate decodes
    double tau = 0.9;
    int max_tokens = 24;
    bool decode_every_step = false;
    bool sampled_probe = false;  // probe follows answer_mode instead of greedy
};

// Lazy loop: roll one step, aggregate, probe the first token; full decoding
// happens only when the probe is the answer delimiter.
InferenceTrace lazy_infer(const ModelBundle& bundle, const Vocab& vocab,
                          const std::vector<int>& question_ids, const InferOptions& opts,
                          Rng* rng = nullptr);

// Same trajectory as lazy_infer, but every intermediate state is fully decoded
// for inspection.
InferenceTrace decode_all_steps(const ModelBundle& bundle, const Vocab& vocab,
                                const std::vector<int>& question_ids, const InferOptions& opts,
                                Rng* rng = nullptr);

// Extracts the answer integer from a decoded answer segment: requires the
// leading answer delimiter and a digit run after it.
std::optional<long long> extract_answer_value(const Vocab& vocab, const std::vector<int>& tokens);

// JSON lines, one trace per line.
void write_traces_jsonl(const std::string& path, const std::vector<InferenceTrace>& traces);

}  // namespace plat
