#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "plat/vocab.hpp"

namespace plat {

// One multi-step arithmetic word problem. Each step is an equation string
// "a op b = c" whose left operand is either a question number or the previous
// step's result; the final result is the answer.
struct ReasoningSample {
    std::string question;  // ends in words/punctuation; numbers appear verbatim
    std::vector<std::string> steps;
    long long answer = 0;
    int n_steps = 0;
    int operand_min = 0;
    int operand_max = 0;
    long long value_cap = 0;
};

struct GeneratorConfig {
    uint64_t seed = 1;
    int n = 100;
    int step_min = 1;
    int step_max = 3;
    int operand_min = 2;
    int operand_max = 12;
    long long value_cap = 60;  // every intermediate result stays in [0, cap]
};

struct CorpusSplits {
    std::vector<ReasoningSample> train, val, test, hard_ood;
};

// ---- equations ---------------------------------------------------------------

struct Equation {
    long long lhs = 0;
    long long rhs = 0;
    long long result = 0;
    char op = '+';
};

// Strict "a op b = c" with non-negative integers; scans for the first matching
// 5-field window so equations embedded in longer text are found.
std::optional<Equation> parse_equation(const std::string& text);
bool equation_true(const Equation& eq);
std::vector<long long> extract_numbers(const std::string& text);

// ---- generation --------------------------------------------------------------

// Deterministic under cfg.seed; question texts are unique within a corpus and
// step counts are balanced round-robin over [step_min, step_max].
std::vector<ReasoningSample> generate_corpus(const GeneratorConfig& cfg);

struct SplitFractions {
    double train = 0.8;
    double val = 0.1;
    double test = 0.1;
};

// Partitions the corpus (disjoint by question text) and generates a hard
// out-of-distribution split whose operand range and step count lie strictly
// outside the corpus generator's ranges.
CorpusSplits make_splits(const std::vector<ReasoningSample>& corpus, const SplitFractions& f,
                         uint64_t seed);

// ---- rendering ---------------------------------------------------------------

enum class RenderMode { cot, plat };

struct PlatRendering {
    std::vector<int> question;               // tokenized question, ends with t_enc
    std::vector<std::vector<int>> segments;  // steps then answer; delimiters included
};

// Question token ids with the trailing encoder token.
std::vector<int> question_token_ids(const Vocab& v, const ReasoningSample& s);

// cot: question + (t_step step)* + t_ans answer eos, one flat id list.
std::vector<int> render_cot_sequence(const Vocab& v, const ReasoningSample& s, int max_len = 0);

// plat: per-step target segments; steps end with t_step, the answer segment is
// t_ans answer eos.
PlatRendering render_plat_segments(const Vocab& v, const ReasoningSample& s, int max_len = 0);

// ---- corpus file -------------------------------------------------------------

// JSON lines: {"question": str, "steps": [str], "answer": int, "meta": {...}}
void write_corpus_jsonl(const std::string& path, const std::vector<ReasoningSample>& samples);
std::vector<ReasoningSample> read_corpus_jsonl(const std::string& path);

}  // namespace plat
