#include "plat/evalsuite.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "plat/errors.hpp"
#include "plat/rng.hpp"

namespace plat {

// ---- generation helpers --------------------------------------------------------

std::vector<int> cot_generate(const ModelBundle& bundle, const Vocab& vocab,
                              const std::vector<int>& question_ids, DecodeMode mode, double tau,
                              int max_tokens, Rng* rng) {
    if (mode == DecodeMode::sample && rng == nullptr)
        throw ContractError("cot_generate: sampling needs an rng");
    NoGradGuard ng;
    MixedSequence seq = to_mixed(question_ids);
    std::vector<int> out;
    const auto& net = bundle.decoder();
    for (int i = 0; i < max_tokens; ++i) {
        if (seq.size() >= static_cast<size_t>(bundle.bcfg.max_seq_len)) break;
        Tensor h = net.hidden_states(seq, /*use_planner_layers=*/false);
        Tensor row = net.logits(slice_rows(h, h.dim(0) - 1, 1));
        const auto& scores = row.values();
        int tok = 0;
        if (mode == DecodeMode::greedy) {
            for (int v = 1; v < static_cast<int>(scores.size()); ++v)
                if (scores[static_cast<size_t>(v)] > scores[static_cast<size_t>(tok)]) tok = v;
        } else {
            std::vector<double> p(scores.size());
            double mx = scores[0];
            for (double s : scores) mx = std::max(mx, s);
            double sum = 0.0;
            for (size_t v = 0; v < scores.size(); ++v) {
                p[v] = std::exp((scores[v] - mx) / tau);
                sum += p[v];
            }
            double u = rng->uniform() * sum, acc = 0.0;
            tok = static_cast<int>(p.size()) - 1;
            for (size_t v = 0; v < p.size(); ++v) {
                acc += p[v];
                if (u < acc) {
                    tok = static_cast<int>(v);
                    break;
                }
            }
        }
        out.push_back(tok);
        if (tok == vocab.specials().eos) break;
        seq.push_back(MixedItem::tok(tok));
    }
    return out;
}

std::optional<long long> cot_answer_value(const Vocab& vocab, const std::vector<int>& generated) {
    const auto& sp = vocab.specials();
    // Number after the last answer delimiter.
    std::optional<size_t> ans_pos;
    for (size_t i = 0; i < generated.size(); ++i)
        if (generated[i] == sp.ans) ans_pos = i;
    if (!ans_pos) return std::nullopt;
    long long value = 0;
    bool seen = false;
    for (size_t i = *ans_pos + 1; i < generated.size(); ++i) {
        if (vocab.is_digit(generated[i])) {
            value = value * 10 + (vocab.token(generated[i])[0] - '0');
            seen = true;
        } else if (seen) {
            break;
        }
    }
    if (!seen) return std::nullopt;
    return value;
}

std::vector<std::string> cot_step_texts(const Vocab& vocab, const std::vector<int>& generated) {
    const auto& sp = vocab.specials();
    std::vector<std::string> steps;
    std::vector<int> current;
    bool in_step = false;
    for (int t : generated) {
        if (t == sp.step || t == sp.ans || t == sp.eos) {
            if (in_step && !current.empty()) steps.push_back(vocab.detokenize(current));
            current.clear();
            in_step = t == sp.step;
            if (t == sp.ans || t == sp.eos) break;
            continue;
        }
        if (in_step) current.push_back(t);
    }
    return steps;
}

std::optional<long long> greedy_answer(const ModelBundle& bundle, const Vocab& vocab,
                                       const ReasoningSample& sample, const EvalOptions& opts,
                                       InferenceTrace* trace_out) {
    const auto question = question_token_ids(vocab, sample);
    if (opts.kind == ModelKind::cot) {
        auto generated = cot_generate(bundle, vocab, question, DecodeMode::greedy, opts.tau,
                                      bundle.bcfg.max_seq_len, nullptr);
        return cot_answer_value(vocab, generated);
    }
    InferOptions io;
    io.max_steps = opts.max_steps;
    io.max_tokens = opts.max_tokens;
    auto trace = lazy_infer(bundle, vocab, question, io);
    auto value = trace.answer_value;
    if (trace_out) *trace_out = std::move(trace);
    return value;
}

std::optional<long long> sampled_answer(const ModelBundle& bundle, const Vocab& vocab,
                                        const ReasoningSample& sample, const EvalOptions& opts,
                                        Rng& rng) {
    const auto question = question_token_ids(vocab, sample);
    if (opts.kind == ModelKind::cot) {
        auto generated = cot_generate(bundle, vocab, question, DecodeMode::sample, opts.tau,
                                      bundle.bcfg.max_seq_len, &rng);
        return cot_answer_value(vocab, generated);
    }
    // Greedy probing fixes the trajectory; diversity comes from the decoder.
    InferOptions io;
    io.max_steps = opts.max_steps;
    io.max_tokens = opts.max_tokens;
    io.answer_mode = DecodeMode::sample;
    io.tau = opts.tau;
    auto trace = lazy_infer(bundle, vocab, question, io, &rng);
    return trace.answer_value;
}

// ---- metrics -------------------------------------------------------------------

double greedy_accuracy(const ModelBundle& bundle, const Vocab& vocab,
                       const std::vector<ReasoningSample>& dataset, const EvalOptions& opts,
                       std::vector<InferenceTrace>* traces_out) {
    if (dataset.empty()) return 0.0;
    long correct = 0;
    for (const auto& sample : dataset) {
        InferenceTrace trace;
        auto value = greedy_answer(bundle, vocab, sample, opts,
                                   opts.kind == ModelKind::plat ? &trace : nullptr);
        if (value && *value == sample.answer) ++correct;
        if (traces_out && opts.kind == ModelKind::plat) traces_out->push_back(std::move(trace));
    }
    return static_cast<double>(correct) / static_cast<double>(dataset.size());
}

namespace {

// C(n, k) when it fits in uint64, otherwise nullopt.
std::optional<unsigned long long> binom_u64(int n, int k) {
    if (k < 0 || k > n) return 0ULL;
    k = std::min(k, n - k);
    unsigned long long result = 1;
    for (int i = 1; i <= k; ++i) {
        const unsigned long long num = static_cast<unsigned long long>(n - k + i);
        // result * num may overflow; the division by i is always exact at the
        // end of each iteration, so test with __int128.
        __uint128_t wide = static_cast<__uint128_t>(result) * num;
        wide /= static_cast<unsigned>(i);
        if (wide > ~0ULL) return std::nullopt;
        result = static_cast<unsigned long long>(wide);
    }
    return result;
}

}  // namespace

double pass_at_k_estimate(int n, int c, int k) {
    if (n < 1 || k < 1 || k > n) throw ConfigError("pass_at_k: need 1 <= k <= n");
    if (c < 0 || c > n) throw ContractError("pass_at_k: correct count outside [0, n]");
    if (c == 0) return 0.0;
    if (n - c < k) return 1.0;
    auto bad = binom_u64(n - c, k);
    auto total = binom_u64(n, k);
    if (bad && total)
        return 1.0 - static_cast<double>(*bad) / static_cast<double>(*total);
    long double ratio = 1.0L;
    for (int i = 0; i < k; ++i)
        ratio *= static_cast<long double>(n - c - i) / static_cast<long double>(n - i);
    return static_cast<double>(1.0L - ratio);
}

PassAtKTable pass_at_k(const ModelBundle& bundle, const Vocab& vocab,
                       const std::vector<ReasoningSample>& dataset, const EvalOptions& opts) {
    if (opts.n_samples < 1) throw ConfigError("pass_at_k: n_samples must be >= 1");
    for (int k : opts.ks)
        if (k > opts.n_samples) throw ConfigError("pass_at_k: k exceeds n_samples");

    PassAtKTable table;
    table.ks = opts.ks;
    table.n_samples = opts.n_samples;
    table.values.assign(opts.ks.size(), 0.0);
    for (size_t qi = 0; qi < dataset.size(); ++qi) {
        Rng rng(derive_seed(opts.seed, "pass-at-k", qi));
        int c = 0;
        for (int s = 0; s < opts.n_samples; ++s) {
            auto value = sampled_answer(bundle, vocab, dataset[qi], opts, rng);
            if (value && *value == dataset[qi].answer) ++c;
        }
        table.correct_per_question.push_back(c);
        for (size_t i = 0; i < opts.ks.size(); ++i)
            table.values[i] += pass_at_k_estimate(opts.n_samples, c, opts.ks[i]);
    }
    if (!dataset.empty())
        for (auto& v : table.values) v /= static_cast<double>(dataset.size());
    for (size_t i = 1; i < table.values.size(); ++i)
        if (table.values[i] + 1e-12 < table.values[i - 1])
            throw NumericError("pass_at_k: estimator lost monotonicity");
    return table;
}

bool trace_counters_consistent(const InferenceTrace& trace, int n_latent) {
    const long t = static_cast<long>(trace.steps.size());
    if (t == 0) return trace.planner_passes == 0 && trace.probe_passes == 0;
    return trace.encoder_passes == 1 && trace.planner_passes == n_latent * t - 1 &&
           trace.probe_passes == t;
}

EfficiencyCounts efficiency_counts(const std::vector<InferenceTrace>& traces, int n_latent) {
    EfficiencyCounts out;
    for (const auto& trace : traces) {
        if (trace.steps.empty()) continue;
        if (!trace_counters_consistent(trace, n_latent))
            throw ContractError("efficiency_counts: trace violates the counting invariant");
        out.planner_mean += static_cast<double>(trace.planner_passes + trace.encoder_passes);
        out.probe_mean += static_cast<double>(trace.probe_passes);
        out.answer_mean += static_cast<double>(trace.answer_passes);
        ++out.traces;
    }
    if (out.traces > 0) {
        out.planner_mean /= static_cast<double>(out.traces);
        out.probe_mean /= static_cast<double>(out.traces);
        out.answer_mean /= static_cast<double>(out.traces);
    }
    return out;
}

// ---- entropy -------------------------------------------------------------------

double shannon_entropy(const std::vector<double>& probs) {
    double h = 0.0;
    for (double p : probs)
        if (p > 0.0) h -= p * std::log(p);
    return h;
}

namespace {
int progress_bin(int step, int total, int bins) {
    const double progress = static_cast<double>(step) / static_cast<double>(total);
    int bin = static_cast<int>(std::ceil(progress * bins)) - 1;
    return std::clamp(bin, 0, bins - 1);
}
}  // namespace

EntropyProfile entropy_profile(const ModelBundle& bundle, const Vocab& vocab,
                               const std::vector<ReasoningSample>& dataset,
                               const EvalOptions& opts, int bins) {
    if (bins < 1) throw ConfigError("entropy_profile: bins must be >= 1");
    EntropyProfile profile;
    profile.mean_h.assign(static_cast<size_t>(bins), 0.0);
    profile.count.assign(static_cast<size_t>(bins), 0);

    const double h_max = std::log(static_cast<double>(bundle.bcfg.vocab_size));
    auto record = [&](int step, int total, double h) {
        if (h < -1e-12 || h > h_max + 1e-9)
            throw NumericError("entropy_profile: entropy outside [0, ln |V|]");
        const auto b = static_cast<size_t>(progress_bin(step, total, bins));
        profile.mean_h[b] += h;
        profile.count[b] += 1;
    };

    for (const auto& sample : dataset) {
        const auto question = question_token_ids(vocab, sample);
        if (opts.kind == ModelKind::plat) {
            NoGradGuard ng;
            LatentTrajectory traj;
            std::vector<AggregatedState> states;
            std::vector<double> entropies;
            for (int k = 1; k <= opts.max_steps; ++k) {
                if (!extend_one_step(bundle, vocab, question, traj, states)) break;
                entropies.push_back(shannon_entropy(
                    first_token_distribution(bundle, states.back())));
                if (probe_first_token(bundle, vocab, states.back()) == vocab.specials().ans) break;
            }
            const int total = static_cast<int>(entropies.size());
            for (int k = 1; k <= total; ++k)
                record(k, total, entropies[static_cast<size_t>(k - 1)]);
        } else {
            // Step-initial next-token entropies along the greedy chain.
            NoGradGuard ng;
            auto generated = cot_generate(bundle, vocab, question, DecodeMode::greedy, opts.tau,
                                          bundle.bcfg.max_seq_len, nullptr);
            std::vector<size_t> measure_points;  // indices into generated (step starts)
            for (size_t i = 0; i + 1 < generated.size(); ++i)
                if (generated[i] == vocab.specials().step) measure_points.push_back(i + 1);
            if (measure_points.empty()) continue;
            std::vector<int> ctx = question;
            size_t consumed = 0;
            std::vector<double> entropies;
            for (size_t mp : measure_points) {
                while (consumed < mp) ctx.push_back(generated[consumed++]);
                Tensor h = bundle.decoder().hidden_states(to_mixed(ctx), false);
                Tensor row = bundle.decoder().logits(slice_rows(h, h.dim(0) - 1, 1));
                entropies.push_back(shannon_entropy(softmax_lastdim(row).values()));
            }
            const int total = static_cast<int>(entropies.size());
            for (int k = 1; k <= total; ++k)
                record(k, total, entropies[static_cast<size_t>(k - 1)]);
        }
    }
    for (size_t b = 0; b < profile.mean_h.size(); ++b)
        if (profile.count[b] > 0) profile.mean_h[b] /= static_cast<double>(profile.count[b]);
    return profile;
}

// ---- clustering + validity -------------------------------------------------------

std::optional<std::string> canonical_step_key(const std::string& text) {
    const auto eq = parse_equation(text);
    if (!eq) return std::nullopt;
    long long a = eq->lhs, b = eq->rhs;
    if ((eq->op == '+' || eq->op == '*') && a > b) std::swap(a, b);
    std::ostringstream os;
    os << eq->op << "|" << a << "|" << b << "|" << eq->result;
    return os.str();
}

StepClusters cluster_steps(const std::vector<std::string>& steps) {
    // Map canonical key -> member indices. Unparseable steps get per-index
    // keys so they stay singletons.
    std::map<std::string, std::vector<size_t>> by_key;
    std::vector<std::string> singleton_keys;
    for (size_t i = 0; i < steps.size(); ++i) {
        auto key = canonical_step_key(steps[i]);
        if (key) {
            by_key["eq:" + *key].push_back(i);
        } else {
            by_key["raw:" + std::to_string(i)].push_back(i);
        }
    }
    // For order invariance, order clusters by (representative text, key).
    struct Entry {
        std::string rep;
        std::string key;
        std::vector<size_t> members;
    };
    std::vector<Entry> entries;
    for (auto& [key, members] : by_key) {
        std::string rep = steps[members.front()];
        for (size_t m : members) rep = std::min(rep, steps[m]);
        entries.push_back({rep, key, members});
    }
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        return std::tie(a.rep, a.key) < std::tie(b.rep, b.key);
    });
    StepClusters out;
    for (auto& e : entries) {
        out.groups.push_back(std::move(e.members));
        out.representatives.push_back(std::move(e.rep));
    }
    return out;
}

bool validate_step(const std::string& step_text, const std::string& question,
                   const std::vector<std::string>& prior_valid_steps,
                   [[maybe_unused]] const std::vector<std::string>& gt_steps) {
    const auto eq = parse_equation(step_text);
    if (!eq) return false;
    if (!equation_true(*eq)) return false;

    std::set<long long> available;
    for (long long v : extract_numbers(question)) available.insert(v);
    for (const auto& prior : prior_valid_steps) {
        if (auto peq = parse_equation(prior)) available.insert(peq->result);
    }
    auto usable = [&](long long v) {
        return available.count(v) != 0 || (v >= 0 && v <= 12);
    };
    return usable(eq->lhs) && usable(eq->rhs);
}

// ---- branching -----------------------------------------------------------------

StepSampler plat_step_sampler(const ModelBundle& bundle, const Vocab& vocab,
                              const EvalOptions& opts) {
    return [&bundle, &vocab, opts](const ReasoningSample& sample, Rng& rng) {
        InferOptions io;
        io.max_steps = opts.max_steps;
        io.max_tokens = opts.max_tokens;
        io.step_mode = opts.tau > 0.0 ? DecodeMode::sample : DecodeMode::greedy;
        io.answer_mode = io.step_mode;
        io.tau = opts.tau > 0.0 ? opts.tau : 0.9;
        auto trace = decode_all_steps(bundle, vocab, question_token_ids(vocab, sample), io, &rng);
        std::vector<std::string> steps;
        for (const auto& rec : trace.steps) {
            if (rec.probe_token == vocab.specials().ans) break;  // answer segment excluded
            if (rec.decoded) {
                std::vector<int> content;
                for (int t : rec.tokens)
                    if (!vocab.is_special(t)) content.push_back(t);
                steps.push_back(vocab.detokenize(content));
            }
        }
        return steps;
    };
}

StepSampler cot_step_sampler(const ModelBundle& bundle, const Vocab& vocab,
                             const EvalOptions& opts) {
    return [&bundle, &vocab, opts](const ReasoningSample& sample, Rng& rng) {
        const auto mode = opts.tau > 0.0 ? DecodeMode::sample : DecodeMode::greedy;
        auto generated = cot_generate(bundle, vocab, question_token_ids(vocab, sample), mode,
                                      opts.tau > 0.0 ? opts.tau : 0.9, bundle.bcfg.max_seq_len,
                                      &rng);
        return cot_step_texts(vocab, generated);
    };
}

std::vector<BranchRecord> branch_analysis(const StepSampler& sampler,
                                          const std::vector<ReasoningSample>& dataset,
                                          int n_samples, int bins, uint64_t seed) {
    if (n_samples < 1 || bins < 1) throw ConfigError("branch_analysis: bad n_samples/bins");
    std::vector<BranchRecord> records;
    for (size_t qi = 0; qi < dataset.size(); ++qi) {
        Rng rng(derive_seed(seed, "branch", qi));
        BranchRecord rec;
        rec.question_id = qi;
        rec.branch_per_bin.assign(static_cast<size_t>(bins), 0);
        rec.valid_per_bin.assign(static_cast<size_t>(bins), 0);

        std::vector<std::vector<std::string>> per_bin_steps(static_cast<size_t>(bins));
        std::vector<std::string> all_steps;
        for (int s = 0; s < n_samples; ++s) {
            const auto steps = sampler(dataset[qi], rng);
            const int total = static_cast<int>(steps.size());
            for (int j = 1; j <= total; ++j) {
                const auto b = static_cast<size_t>(progress_bin(j, total, bins));
                per_bin_steps[b].push_back(steps[static_cast<size_t>(j - 1)]);
                all_steps.push_back(steps[static_cast<size_t>(j - 1)]);
                rec.has_steps = true;
            }
        }

        // Branch count per bin; validity walks bins in order, feeding earlier
        // valid representatives forward as derivable results.
        std::vector<std::string> valid_so_far;
        std::set<std::string> valid_keys;
        for (int b = 0; b < bins; ++b) {
            const auto& pool = per_bin_steps[static_cast<size_t>(b)];
            if (pool.empty()) continue;
            const auto clusters = cluster_steps(pool);
            rec.branch_per_bin[static_cast<size_t>(b)] = static_cast<int>(clusters.groups.size());
            int valid = 0;
            std::vector<std::string> newly_valid;
            for (const auto& rep : clusters.representatives) {
                if (validate_step(rep, dataset[qi].question, valid_so_far, dataset[qi].steps)) {
                    ++valid;
                    newly_valid.push_back(rep);
                    if (auto key = canonical_step_key(rep)) valid_keys.insert(*key);
                }
            }
            rec.valid_per_bin[static_cast<size_t>(b)] = valid;
            valid_so_far.insert(valid_so_far.end(), newly_valid.begin(), newly_valid.end());
        }

        // Per-question totals: distinct clusters over every sampled step; a
        // cluster counts as valid when it validated somewhere in the
        // bin-ordered walk (the chain order bins impose).
        const auto overall = cluster_steps(all_steps);
        rec.total_branches = static_cast<int>(overall.groups.size());
        for (const auto& rep : overall.representatives) {
            auto key = canonical_step_key(rep);
            if (key && valid_keys.count(*key)) ++rec.total_valid;
        }
        records.push_back(std::move(rec));
    }
    return records;
}

BranchCurves aggregate_branches(const std::vector<BranchRecord>& records, int bins) {
    BranchCurves curves;
    curves.branch_mean.assign(static_cast<size_t>(bins), 0.0);
    curves.valid_mean.assign(static_cast<size_t>(bins), 0.0);
    std::vector<long> counts(static_cast<size_t>(bins), 0);
    for (const auto& rec : records) {
        for (int b = 0; b < bins; ++b) {
            if (rec.branch_per_bin[static_cast<size_t>(b)] == 0) continue;
            curves.branch_mean[static_cast<size_t>(b)] += rec.branch_per_bin[static_cast<size_t>(b)];
            curves.valid_mean[static_cast<size_t>(b)] += rec.valid_per_bin[static_cast<size_t>(b)];
            counts[static_cast<size_t>(b)] += 1;
        }
    }
    for (size_t b = 0; b < counts.size(); ++b) {
        if (counts[b] > 0) {
            curves.branch_mean[b] /= static_cast<double>(counts[b]);
            curves.valid_mean[b] /= static_cast<double>(counts[b]);
        }
    }
    return curves;
}

// ---- report files ----------------------------------------------------------------

void write_eval_json(const std::string& path, const EvalReport& report) {
    nlohmann::json j;
    j["dataset"] = report.dataset_id;
    j["n_questions"] = report.n_questions;
    j["greedy_accuracy"] = report.greedy;
    nlohmann::json pk = nlohmann::json::object();
    for (size_t i = 0; i < report.pass_table.ks.size(); ++i)
        pk[std::to_string(report.pass_table.ks[i])] = report.pass_table.values[i];
    j["pass_at_k"] = pk;
    j["pass_samples"] = report.pass_table.n_samples;
    j["tau"] = report.tau;
    j["counters"] = {{"planner_mean", report.counts.planner_mean},
                     {"probe_mean", report.counts.probe_mean},
                     {"answer_mean", report.counts.answer_mean},
                     {"traces", report.counts.traces}};
    if (!report.traces_path.empty()) j["traces"] = report.traces_path;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write '" + path + "'");
    f << j.dump(2) << "\n";
}

namespace {
std::ofstream open_csv(const std::string& path, bool append, const char* header) {
    const bool exists = append && std::ifstream(path).good();
    std::ofstream f(path, append ? std::ios::app : std::ios::trunc);
    if (!f) throw IoError("cannot write '" + path + "'");
    if (!exists) f << header << "\n";
    return f;
}
}  // namespace

void write_branching_csv(const std::string& path, const BranchCurves& curves,
                         const std::string& method, bool append) {
    auto f = open_csv(path, append, "bin,branch_mean,valid_mean,method");
    for (size_t b = 0; b < curves.branch_mean.size(); ++b)
        f << b << "," << curves.branch_mean[b] << "," << curves.valid_mean[b] << "," << method
          << "\n";
}

void write_entropy_csv(const std::string& path, const EntropyProfile& profile,
                       const std::string& method, bool append) {
    auto f = open_csv(path, append, "bin,h_mean,count,method");
    for (size_t b = 0; b < profile.mean_h.size(); ++b)
        f << b << "," << profile.mean_h[b] << "," << profile.count[b] << "," << method << "\n";
}

void write_scatter_csv(const std::string& path, const std::vector<BranchRecord>& records,
                       const std::string& method, bool append) {
    auto f = open_csv(path, append, "question_id,branch_count,valid_count,method");
    for (const auto& rec : records) {
        if (!rec.has_steps) continue;  // samples without intermediate steps excluded
        f << rec.question_id << "," << rec.total_branches << "," << rec.total_valid << ","
          << method << "\n";
    }
}

}  // namespace plat
