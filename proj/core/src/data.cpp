#include "plat/data.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "plat/errors.hpp"
#include "plat/rng.hpp"

namespace plat {

namespace {

bool parse_nonneg(const std::string& s, long long& out) {
    if (s.empty() || s.size() > 12) return false;
    long long v = 0;
    for (char c : s) {
        if (c < '0' || c > '9') return false;
        v = v * 10 + (c - '0');
    }
    out = v;
    return true;
}

std::vector<std::string> split_ws(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string f;
    while (in >> f) out.push_back(f);
    return out;
}

}  // namespace

std::optional<Equation> parse_equation(const std::string& text) {
    const auto f = split_ws(text);
    for (size_t i = 0; i + 5 <= f.size(); ++i) {
        Equation eq;
        if (!parse_nonneg(f[i], eq.lhs)) continue;
        const std::string& op = f[i + 1];
        if (op.size() != 1 || std::string("+-*/").find(op[0]) == std::string::npos) continue;
        eq.op = op[0];
        if (!parse_nonneg(f[i + 2], eq.rhs)) continue;
        if (f[i + 3] != "=") continue;
        if (!parse_nonneg(f[i + 4], eq.result)) continue;
        return eq;
    }
    return std::nullopt;
}

bool equation_true(const Equation& eq) {
    switch (eq.op) {
        case '+': return eq.lhs + eq.rhs == eq.result;
        case '-': return eq.lhs - eq.rhs == eq.result;
        case '*': return eq.lhs * eq.rhs == eq.result;
        case '/': return eq.rhs != 0 && eq.lhs % eq.rhs == 0 && eq.lhs / eq.rhs == eq.result;
        default: return false;
    }
}

std::vector<long long> extract_numbers(const std::string& text) {
    std::vector<long long> out;
    long long cur = 0;
    bool in_num = false;
    for (char c : text) {
        if (c >= '0' && c <= '9') {
            cur = cur * 10 + (c - '0');
            in_num = true;
        } else if (in_num) {
            out.push_back(cur);
            cur = 0;
            in_num = false;
        }
    }
    if (in_num) out.push_back(cur);
    return out;
}

// ---- generation --------------------------------------------------------------

namespace {

// Ten question templates: an opening, a per-step connector, and a closing
// phrase. Operation wording is canonical (one phrase per op) so the surface
// variety lives in the template, not in the operand binding.
struct QuestionTemplate {
    const char* opening;
    const char* connector;
    const char* ending;
};
const QuestionTemplate kTemplates[] = {
    {"start with %", "then", "what do you get ?"},
    {"begin with %", "next", "what is the result ?"},
    {"take the number %", "then", "find the final value ."},
    {"your number is %", "now", "tell me the total ."},
    {"start with %", "after that", "what is the result ?"},
    {"begin with %", "now", "what do you get ?"},
    {"take the number %", "next", "tell me the total ."},
    {"your number is %", "then", "what is the result ?"},
    {"start with %", "now", "find the final value ."},
    {"begin with %", "after that", "tell me the total ."},
};
const char* kAdd = "add %";
const char* kSub = "subtract %";
const char* kMul = "multiply it by %";
const char* kDiv = "divide it by %";

std::string fill(const char* tpl, long long x) {
    std::string out;
    for (const char* p = tpl; *p; ++p) {
        if (*p == '%')
            out += std::to_string(x);
        else
            out += *p;
    }
    return out;
}

struct ChainStep {
    char op;
    long long operand;
    long long result;
};

// Draws one feasible (op, operand) continuation for the running value, keeping
// results integral and inside [0, cap].
std::optional<ChainStep> draw_step(long long v, const GeneratorConfig& cfg, Rng& rng) {
    const long long lo = cfg.operand_min, hi = cfg.operand_max;
    struct Choice {
        char op;
        std::vector<long long> xs;
    };
    std::vector<Choice> feasible;

    std::vector<long long> xs;
    for (long long x = lo; x <= hi; ++x)
        if (v + x <= cfg.value_cap) xs.push_back(x);
    if (!xs.empty()) feasible.push_back({'+', xs});

    xs.clear();
    for (long long x = lo; x <= hi; ++x)
        if (v - x >= 0) xs.push_back(x);
    if (!xs.empty()) feasible.push_back({'-', xs});

    xs.clear();
    for (long long x = lo; x <= hi; ++x)
        if (v * x <= cfg.value_cap) xs.push_back(x);
    if (!xs.empty()) feasible.push_back({'*', xs});

    xs.clear();
    for (long long x = lo; x <= hi; ++x)
        if (x != 0 && v % x == 0) xs.push_back(x);
    if (!xs.empty()) feasible.push_back({'/', xs});

    if (feasible.empty()) return std::nullopt;
    const auto& choice = feasible[rng.below(feasible.size())];
    const long long x = choice.xs[rng.below(choice.xs.size())];
    long long r = 0;
    switch (choice.op) {
        case '+': r = v + x; break;
        case '-': r = v - x; break;
        case '*': r = v * x; break;
        case '/': r = v / x; break;
    }
    return ChainStep{choice.op, x, r};
}

std::optional<ReasoningSample> try_generate(const GeneratorConfig& cfg, int n_steps,
                                            uint64_t sample_seed) {
    Rng rng(sample_seed);
    ReasoningSample s;
    s.n_steps = n_steps;
    s.operand_min = cfg.operand_min;
    s.operand_max = cfg.operand_max;
    s.value_cap = cfg.value_cap;

    const auto& tmpl = kTemplates[rng.below(sizeof(kTemplates) / sizeof(kTemplates[0]))];
    const long long a =
        cfg.operand_min +
        static_cast<long long>(rng.below(static_cast<uint64_t>(cfg.operand_max - cfg.operand_min + 1)));
    std::string q = fill(tmpl.opening, a);
    long long v = a;
    for (int k = 0; k < n_steps; ++k) {
        auto st = draw_step(v, cfg, rng);
        if (!st) return std::nullopt;
        const char* phrase = nullptr;
        switch (st->op) {
            case '+': phrase = kAdd; break;
            case '-': phrase = kSub; break;
            case '*': phrase = kMul; break;
            case '/': phrase = kDiv; break;
        }
        q += " . ";
        q += tmpl.connector;
        q += " ";
        q += fill(phrase, st->operand);
        std::ostringstream eq;
        eq << v << " " << st->op << " " << st->operand << " = " << st->result;
        s.steps.push_back(eq.str());
        v = st->result;
    }
    q += " . ";
    q += tmpl.ending;
    s.question = q;
    s.answer = v;
    return s;
}

}  // namespace

std::vector<ReasoningSample> generate_corpus(const GeneratorConfig& cfg) {
    if (cfg.n < 1 || cfg.step_min < 1 || cfg.step_max < cfg.step_min || cfg.operand_min < 1 ||
        cfg.operand_max < cfg.operand_min || cfg.value_cap < cfg.operand_max)
        throw ConfigError("generator: infeasible range");

    std::vector<ReasoningSample> out;
    out.reserve(static_cast<size_t>(cfg.n));
    std::set<std::string> seen;
    const int n_counts = cfg.step_max - cfg.step_min + 1;
    for (int idx = 0; idx < cfg.n; ++idx) {
        const int n_steps = cfg.step_min + idx % n_counts;
        bool placed = false;
        for (uint64_t attempt = 0; attempt < 1000; ++attempt) {
            const uint64_t ss =
                derive_seed(cfg.seed, "sample", static_cast<uint64_t>(idx) * 1000 + attempt);
            auto s = try_generate(cfg, n_steps, ss);
            if (!s) continue;
            if (!seen.insert(s->question).second) continue;
            out.push_back(std::move(*s));
            placed = true;
            break;
        }
        if (!placed) throw ConfigError("generator: sample space too small for unique corpus");
    }
    return out;
}

CorpusSplits make_splits(const std::vector<ReasoningSample>& corpus, const SplitFractions& f,
                         uint64_t seed) {
    if (f.train < 0 || f.val < 0 || f.test < 0 || f.train + f.val + f.test > 1.0 + 1e-9)
        throw ConfigError("splits: fractions must be non-negative and sum to <= 1");
    std::vector<size_t> order(corpus.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(derive_seed(seed, "splits"));
    rng.shuffle(order);

    const auto n = corpus.size();
    const size_t n_train = static_cast<size_t>(f.train * static_cast<double>(n) + 0.5);
    const size_t n_val = static_cast<size_t>(f.val * static_cast<double>(n) + 0.5);
    const size_t n_test =
        std::min(n - std::min(n, n_train + n_val), static_cast<size_t>(f.test * static_cast<double>(n) + 0.5));

    CorpusSplits splits;
    for (size_t i = 0; i < n; ++i) {
        const auto& s = corpus[order[i]];
        if (i < n_train)
            splits.train.push_back(s);
        else if (i < n_train + n_val)
            splits.val.push_back(s);
        else if (i < n_train + n_val + n_test)
            splits.test.push_back(s);
    }

    // Hard split: operands strictly above, one extra step, looser cap.
    if (!corpus.empty()) {
        const auto& ref = corpus.front();
        GeneratorConfig hard;
        hard.seed = derive_seed(seed, "hard-ood");
        hard.n = std::max<int>(1, static_cast<int>(splits.test.size()));
        int max_steps = 0;
        for (const auto& s : corpus) max_steps = std::max(max_steps, s.n_steps);
        hard.step_min = max_steps + 1;
        hard.step_max = max_steps + 1;
        hard.operand_min = ref.operand_max + 1;
        hard.operand_max = ref.operand_max * 2;
        hard.value_cap = std::max<long long>(ref.value_cap * 4, hard.operand_max * 2);
        splits.hard_ood = generate_corpus(hard);
    }
    return splits;
}

// ---- rendering ---------------------------------------------------------------

std::vector<int> question_token_ids(const Vocab& v, const ReasoningSample& s) {
    auto ids = v.tokenize(s.question);
    ids.push_back(v.specials().enc);
    return ids;
}

namespace {
void check_len(size_t len, int max_len, const char* what) {
    if (max_len > 0 && len > static_cast<size_t>(max_len))
        throw CapacityError(std::string(what) + " exceeds max sequence length");
}
}  // namespace

std::vector<int> render_cot_sequence(const Vocab& v, const ReasoningSample& s, int max_len) {
    auto ids = question_token_ids(v, s);
    for (const auto& step : s.steps) {
        ids.push_back(v.specials().step);
        auto t = v.tokenize(step);
        ids.insert(ids.end(), t.begin(), t.end());
    }
    ids.push_back(v.specials().ans);
    auto a = v.tokenize(std::to_string(s.answer));
    ids.insert(ids.end(), a.begin(), a.end());
    ids.push_back(v.specials().eos);
    check_len(ids.size(), max_len, "cot rendering");
    return ids;
}

PlatRendering render_plat_segments(const Vocab& v, const ReasoningSample& s, int max_len) {
    PlatRendering r;
    r.question = question_token_ids(v, s);
    check_len(r.question.size(), max_len, "question");
    for (const auto& step : s.steps) {
        auto seg = v.tokenize(step);
        seg.push_back(v.specials().step);
        check_len(seg.size(), max_len, "step segment");
        r.segments.push_back(std::move(seg));
    }
    std::vector<int> ans{v.specials().ans};
    auto a = v.tokenize(std::to_string(s.answer));
    ans.insert(ans.end(), a.begin(), a.end());
    ans.push_back(v.specials().eos);
    check_len(ans.size(), max_len, "answer segment");
    r.segments.push_back(std::move(ans));
    return r;
}

// ---- corpus file -------------------------------------------------------------

void write_corpus_jsonl(const std::string& path, const std::vector<ReasoningSample>& samples) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    for (const auto& s : samples) {
        nlohmann::json j;
        j["question"] = s.question;
        j["steps"] = s.steps;
        j["answer"] = s.answer;
        j["meta"] = {{"n_steps", s.n_steps},
                     {"operand_min", s.operand_min},
                     {"operand_max", s.operand_max},
                     {"value_cap", s.value_cap}};
        out << j.dump() << "\n";
    }
}

std::vector<ReasoningSample> read_corpus_jsonl(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open corpus '" + path + "'");
    std::vector<ReasoningSample> out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw IoError("corpus '" + path + "' line " + std::to_string(lineno) + ": bad JSON");
        ReasoningSample s;
        s.question = j.at("question").get<std::string>();
        s.steps = j.at("steps").get<std::vector<std::string>>();
        s.answer = j.at("answer").get<long long>();
        const auto& m = j.at("meta");
        s.n_steps = m.at("n_steps").get<int>();
        s.operand_min = m.at("operand_min").get<int>();
        s.operand_max = m.at("operand_max").get<int>();
        s.value_cap = m.at("value_cap").get<long long>();
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace plat
