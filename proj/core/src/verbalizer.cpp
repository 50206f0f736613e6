#include "plat/verbalizer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "plat/errors.hpp"
#include "plat/rng.hpp"

namespace plat {

namespace {

// Soft prefix: projected slots then the start-of-decoding token.
MixedSequence decode_prefix(const ModelBundle& bundle, const Vocab& vocab,
                            const AggregatedState& state) {
    MixedSequence seq;
    for (const auto& slot : state.slots)
        seq.push_back(MixedItem::cont(project(slot, bundle.proj.dec_w, bundle.proj.dec_b)));
    seq.push_back(MixedItem::tok(vocab.specials().dec));
    return seq;
}

// Next-token scores at the last position of `seq` under the decoder network.
std::vector<double> next_token_scores(const ModelBundle& bundle, const MixedSequence& seq) {
    Tensor h = bundle.decoder().hidden_states(seq, /*use_planner_layers=*/false);
    Tensor row = bundle.decoder().logits(slice_rows(h, h.dim(0) - 1, 1));
    return row.values();
}

int argmax_token(const std::vector<double>& scores) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(scores.size()); ++i)
        if (scores[static_cast<size_t>(i)] > scores[static_cast<size_t>(best)]) best = i;
    return best;
}

int sample_token(const std::vector<double>& scores, double tau, Rng& rng) {
    std::vector<double> p(scores.size());
    double mx = scores[0];
    for (double s : scores) mx = std::max(mx, s);
    double sum = 0.0;
    for (size_t i = 0; i < scores.size(); ++i) {
        p[i] = std::exp((scores[i] - mx) / tau);
        sum += p[i];
    }
    const double u = rng.uniform() * sum;
    double acc = 0.0;
    for (size_t i = 0; i < p.size(); ++i) {
        acc += p[i];
        if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(p.size()) - 1;
}

}  // namespace

std::vector<int> decode_step(const ModelBundle& bundle, const Vocab& vocab,
                             const DecodeRequest& req, Rng* rng, long PassStats::*counter) {
    if (req.state == nullptr || req.state->slots.empty())
        throw ContractError("decode_step: missing aggregated state");
    if (req.max_tokens < 1) throw ContractError("decode_step: empty generation budget");
    if (req.mode == DecodeMode::sample) {
        if (req.tau <= 0.0) throw ContractError("decode_step: sampling needs tau > 0");
        if (rng == nullptr) throw ContractError("decode_step: sampling needs an rng");
    }

    NoGradGuard ng;
    MixedSequence seq = decode_prefix(bundle, vocab, *req.state);
    std::vector<int> out;
    for (int i = 0; i < req.max_tokens; ++i) {
        const auto scores = next_token_scores(bundle, seq);
        if (counter) pass_stats().*counter += 1;
        const int tok = req.mode == DecodeMode::greedy ? argmax_token(scores)
                                                       : sample_token(scores, req.tau, *rng);
        out.push_back(tok);
        if (tok == vocab.specials().eos) break;
        // Position-1 tokens never terminate: the answer segment legitimately
        // begins with the answer delimiter.
        if (out.size() >= 2 &&
            std::find(req.stop_tokens.begin(), req.stop_tokens.end(), tok) != req.stop_tokens.end())
            break;
        seq.push_back(MixedItem::tok(tok));
    }
    return out;
}

int probe_first_token(const ModelBundle& bundle, const Vocab& vocab,
                      const AggregatedState& state) {
    NoGradGuard ng;
    const auto scores = next_token_scores(bundle, decode_prefix(bundle, vocab, state));
    ++pass_stats().probe;
    return argmax_token(scores);
}

std::vector<double> first_token_distribution(const ModelBundle& bundle,
                                             const AggregatedState& state) {
    NoGradGuard ng;
    MixedSequence seq = decode_prefix(bundle, Vocab::standard(), state);
    const auto scores = next_token_scores(bundle, seq);
    std::vector<double> p(scores.size());
    double mx = scores[0];
    for (double s : scores) mx = std::max(mx, s);
    double sum = 0.0;
    for (size_t i = 0; i < scores.size(); ++i) {
        p[i] = std::exp(scores[i] - mx);
        sum += p[i];
    }
    for (auto& v : p) v /= sum;
    return p;
}

std::optional<long long> extract_answer_value(const Vocab& vocab, const std::vector<int>& tokens) {
    if (tokens.empty() || tokens.front() != vocab.specials().ans) return std::nullopt;
    long long value = 0;
    bool seen_digit = false;
    for (size_t i = 1; i < tokens.size(); ++i) {
        if (vocab.is_digit(tokens[i])) {
            value = value * 10 + (vocab.token(tokens[i])[0] - '0');
            seen_digit = true;
        } else if (seen_digit) {
            break;  // first digit run only
        }
    }
    if (!seen_digit) return std::nullopt;
    return value;
}

namespace {

InferenceTrace run_inference(const ModelBundle& bundle, const Vocab& vocab,
                             const std::vector<int>& question_ids, const InferOptions& opts,
                             Rng* rng, bool eager) {
    if (opts.max_steps < 1 || opts.max_steps > bundle.pcfg.max_plan_steps)
        throw ContractError("infer: max_steps outside [1, max_plan_steps]");
    NoGradGuard ng;
    const PassStats before = pass_stats();

    InferenceTrace trace;
    trace.question = vocab.detokenize(question_ids);

    const auto& sp = vocab.specials();
    const std::vector<int> stops{sp.step, sp.ans, sp.eos};

    LatentTrajectory traj;
    std::vector<AggregatedState> aggregated;
    for (int k = 1; k <= opts.max_steps; ++k) {
        if (!extend_one_step(bundle, vocab, question_ids, traj, aggregated)) break;
        const AggregatedState& state = aggregated.back();

        int probe;
        if (opts.sampled_probe && opts.answer_mode == DecodeMode::sample) {
            DecodeRequest one{&state, DecodeMode::sample, opts.tau, 1, stops};
            probe = decode_step(bundle, vocab, one, rng, &PassStats::probe).at(0);
        } else {
            probe = probe_first_token(bundle, vocab, state);
        }

        StepRecord rec;
        rec.step_index = k;
        rec.probe_token = probe;

        if (probe == sp.ans) {
            DecodeRequest req{&state, opts.answer_mode, opts.tau, opts.max_tokens, stops};
            rec.tokens = decode_step(bundle, vocab, req, rng, &PassStats::answer);
            rec.decoded = true;
            rec.text = vocab.detokenize(rec.tokens);
            trace.answer_text = rec.text;
            trace.answer_value = extract_answer_value(vocab, rec.tokens);
            trace.reason = Termination::answer;
            trace.steps.push_back(std::move(rec));
            break;
        }

        // Intermediate stage: the probe token is discarded; eager mode decodes
        // the full step text from the same state.
        if (eager) {
            DecodeRequest req{&state, opts.step_mode, opts.tau, opts.max_tokens, stops};
            rec.tokens = decode_step(bundle, vocab, req, rng, &PassStats::step_decode);
            rec.decoded = true;
            rec.text = vocab.detokenize(rec.tokens);
        }
        trace.steps.push_back(std::move(rec));
    }

    const PassStats after = pass_stats();
    trace.planner_passes = after.planner - before.planner;
    trace.encoder_passes = after.encoder - before.encoder;
    trace.probe_passes = after.probe - before.probe;
    trace.answer_passes = after.answer - before.answer;
    trace.step_decode_passes = after.step_decode - before.step_decode;
    return trace;
}

}  // namespace

InferenceTrace lazy_infer(const ModelBundle& bundle, const Vocab& vocab,
                          const std::vector<int>& question_ids, const InferOptions& opts,
                          Rng* rng) {
    return run_inference(bundle, vocab, question_ids, opts, rng, /*eager=*/false);
}

InferenceTrace decode_all_steps(const ModelBundle& bundle, const Vocab& vocab,
                                const std::vector<int>& question_ids, const InferOptions& opts,
                                Rng* rng) {
    return run_inference(bundle, vocab, question_ids, opts, rng, /*eager=*/true);
}

void write_traces_jsonl(const std::string& path, const std::vector<InferenceTrace>& traces) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    for (const auto& t : traces) {
        nlohmann::json j;
        j["question"] = t.question;
        j["answer_text"] = t.answer_text;
        if (t.answer_value)
            j["answer_value"] = *t.answer_value;
        else
            j["answer_value"] = nullptr;
        j["termination"] = t.reason == Termination::answer ? "answer" : "step_cap";
        j["counters"] = {{"planner", t.planner_passes},
                         {"encoder", t.encoder_passes},
                         {"probe", t.probe_passes},
                         {"answer", t.answer_passes},
                         {"step_decode", t.step_decode_passes}};
        nlohmann::json steps = nlohmann::json::array();
        for (const auto& s : t.steps) {
            nlohmann::json js;
            js["step"] = s.step_index;
            js["probe"] = s.probe_token;
            if (s.decoded) js["text"] = s.text;
            steps.push_back(js);
        }
        j["steps"] = steps;
        f << j.dump() << "\n";
    }
}

}  // namespace plat
