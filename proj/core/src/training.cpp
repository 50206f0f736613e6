#include "plat/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "plat/errors.hpp"

namespace plat {

// ---- Adam --------------------------------------------------------------------

Adam::Adam(std::map<std::string, Tensor> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
    for (const auto& [name, t] : params_) {
        state_[name].m.assign(t.numel(), 0.0);
        state_[name].v.assign(t.numel(), 0.0);
    }
}

void Adam::zero_grad() {
    for (auto& [name, t] : params_) t.zero_grad();
}

double Adam::step() {
    double sq = 0.0;
    for (auto& [name, t] : params_) {
        for (double g : t.grad()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    double scale = 1.0;
    if (cfg_.clip_norm > 0.0 && norm > cfg_.clip_norm) scale = cfg_.clip_norm / norm;

    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (auto& [name, t] : params_) {
        auto& st = state_[name];
        auto& vals = t.values();
        auto& grads = t.grad();
        for (size_t i = 0; i < vals.size(); ++i) {
            const double g = grads[i] * scale;
            st.m[i] = cfg_.beta1 * st.m[i] + (1.0 - cfg_.beta1) * g;
            st.v[i] = cfg_.beta2 * st.v[i] + (1.0 - cfg_.beta2) * g * g;
            const double mhat = st.m[i] / bc1;
            const double vhat = st.v[i] / bc2;
            vals[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
    return norm;
}

void Adam::restore(const std::map<std::string, Moments>& state, int64_t t) {
    for (const auto& [name, mom] : state) {
        auto it = state_.find(name);
        if (it == state_.end()) throw ContractError("Adam::restore: unknown parameter " + name);
        if (mom.m.size() != it->second.m.size())
            throw ContractError("Adam::restore: size mismatch for " + name);
        it->second = mom;
    }
    t_ = t;
}

// ---- configs -----------------------------------------------------------------

void SftConfig::validate() const {
    if (epochs < 1) throw ConfigError("sft: epochs must be >= 1");
    if (lr <= 0.0) throw ConfigError("sft: lr must be > 0");
    if (batch_size < 1) throw ConfigError("sft: batch_size must be >= 1");
    if (sigma_noise < 0.0) throw ConfigError("sft: sigma_noise must be >= 0");
}

void RlConfig::validate() const {
    if (group_size < 2) throw ConfigError("rl: group_size must be >= 2");
    if (lr <= 0.0) throw ConfigError("rl: lr must be > 0");
    if (kl_beta < 0.0) throw ConfigError("rl: kl_beta must be >= 0");
    if (clip_eps < 0.0) throw ConfigError("rl: clip_eps must be >= 0");
    if (temperature <= 0.0) throw ConfigError("rl: temperature must be > 0");
    if (batch_size < 1 || steps < 1) throw ConfigError("rl: batch_size and steps must be >= 1");
}

// ---- logging -----------------------------------------------------------------

CsvLogger::CsvLogger(const std::string& path) : path_(path) {}

void CsvLogger::append(const TrainLogRow& row) {
    if (path_.empty()) return;
    std::ofstream f(path_, wrote_header_ ? std::ios::app : std::ios::trunc);
    if (!f) throw IoError("cannot open training log '" + path_ + "'");
    if (!wrote_header_) {
        f << "phase,step,loss,reward_mean,kl,grad_norm\n";
        wrote_header_ = true;
    }
    f << row.phase << "," << row.step << "," << row.loss << "," << row.reward_mean << ","
      << row.kl << "," << row.grad_norm << "\n";
}

// ---- SFT losses --------------------------------------------------------------

std::pair<Tensor, int> sequence_loss(const Backbone& net, const std::vector<int>& ids,
                                     size_t loss_from) {
    if (ids.size() < 2) throw ContractError("sequence_loss: need at least two tokens");
    std::vector<int> input(ids.begin(), ids.end() - 1);
    Tensor h = net.hidden_states(to_mixed(input), /*use_planner_layers=*/false);
    Tensor scores = net.logits(h);
    std::vector<int> targets(input.size());
    int count = 0;
    for (size_t i = 0; i < input.size(); ++i) {
        const size_t target_pos = i + 1;
        if (target_pos < loss_from) {
            targets[i] = -1;
        } else {
            targets[i] = ids[target_pos];
            ++count;
        }
    }
    return {cross_entropy_logits(scores, targets), count};
}

namespace {

// Teacher-forced segment loss under the soft prefix of one aggregated state.
std::pair<Tensor, int> segment_loss(const ModelBundle& bundle, const Vocab& vocab,
                                    const AggregatedState& state, const std::vector<int>& segment) {
    MixedSequence seq;
    for (const auto& slot : state.slots)
        seq.push_back(MixedItem::cont(project(slot, bundle.proj.dec_w, bundle.proj.dec_b)));
    seq.push_back(MixedItem::tok(vocab.specials().dec));
    const int prefix = static_cast<int>(seq.size());
    for (size_t j = 0; j + 1 < segment.size(); ++j) seq.push_back(MixedItem::tok(segment[j]));

    Tensor h = bundle.decoder().hidden_states(seq, /*use_planner_layers=*/false);
    Tensor rows = slice_rows(h, prefix - 1, static_cast<int>(segment.size()));
    Tensor scores = bundle.decoder().logits(rows);
    return {cross_entropy_logits(scores, segment), static_cast<int>(segment.size())};
}

}  // namespace

std::pair<Tensor, int> plat_sample_loss(const ModelBundle& bundle, const Vocab& vocab,
                                        const ReasoningSample& sample, double sigma,
                                        Rng* noise_rng) {
    auto rendering = render_plat_segments(vocab, sample, bundle.bcfg.max_seq_len);
    const int t_steps = static_cast<int>(rendering.segments.size());
    if (t_steps > bundle.pcfg.max_plan_steps)
        throw CapacityError("plat_sample_loss: sample needs more steps than max_plan_steps");

    RollResult roll = roll_trajectory(bundle, vocab, rendering.question, t_steps);
    if (!roll.trajectory.terminated)
        throw CapacityError("plat_sample_loss: trajectory truncated by max_seq_len");

    Tensor total;
    int tokens = 0;
    for (int k = 0; k < t_steps; ++k) {
        AggregatedState state = roll.aggregated[static_cast<size_t>(k)];
        if (sigma > 0.0 && noise_rng != nullptr) state = inject_noise(state, sigma, *noise_rng);
        auto [loss, count] = segment_loss(bundle, vocab, state, rendering.segments[static_cast<size_t>(k)]);
        total = total.defined() ? add(total, loss) : loss;
        tokens += count;
    }
    return {total, tokens};
}

// ---- SFT loops ---------------------------------------------------------------

namespace {

using SampleLossFn =
    std::function<std::pair<Tensor, int>(const ReasoningSample&)>;

SftResult run_sft(const std::vector<ReasoningSample>& train, const SftConfig& cfg, Adam& opt,
                  Rng& order_rng, const SampleLossFn& sample_loss, const char* phase,
                  CsvLogger* log, const StepHook& hook, const EpochHook& epoch_hook) {
    cfg.validate();
    if (train.empty()) throw ContractError("sft: empty training set");

    const auto steps_per_epoch = static_cast<int64_t>(
        (train.size() + static_cast<size_t>(cfg.batch_size) - 1) /
        static_cast<size_t>(cfg.batch_size));
    const int schedule_epochs =
        cfg.total_epochs_for_schedule > 0 ? cfg.total_epochs_for_schedule : cfg.epochs;
    const auto total_steps = std::max<int64_t>(1, steps_per_epoch * schedule_epochs);
    const double lr0 = cfg.lr;
    const double lr_floor = cfg.lr * cfg.lr_floor_frac;
    auto scheduled_lr = [&](int64_t step) {
        if (cfg.lr_schedule == LrSchedule::constant) return lr0;
        const double progress =
            std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps));
        return lr_floor + 0.5 * (lr0 - lr_floor) * (1.0 + std::cos(3.14159265358979323846 * progress));
    };

    SftResult result;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<size_t> order(train.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        order_rng.shuffle(order);

        double epoch_loss_sum = 0.0;
        int epoch_batches = 0;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
            const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
            Tensor total;
            int tokens = 0;
            for (size_t i = start; i < end; ++i) {
                auto [loss, count] = sample_loss(train[order[i]]);
                total = total.defined() ? add(total, loss) : loss;
                tokens += count;
            }
            Tensor mean_loss = scale(total, 1.0 / static_cast<double>(tokens));
            const double loss_value = mean_loss.item();
            if (!std::isfinite(loss_value))
                throw NumericError(std::string(phase) + " sft: loss diverged");

            opt.config().lr = scheduled_lr(opt.step_count());
            opt.zero_grad();
            backward(mean_loss);
            const double gnorm = opt.step();

            result.step_losses.push_back(loss_value);
            epoch_loss_sum += loss_value;
            ++epoch_batches;
            if (log) log->append({phase, opt.step_count(), loss_value, 0.0, 0.0, gnorm});
            if (hook) hook(opt.step_count(), loss_value);
        }
        result.epoch_losses.push_back(epoch_loss_sum / std::max(1, epoch_batches));
        if (epoch_hook) epoch_hook(epoch + 1);
    }
    return result;
}

}  // namespace

SftResult train_cot_sft(ModelBundle& bundle, const Vocab& vocab,
                        const std::vector<ReasoningSample>& train, const SftConfig& cfg,
                        Adam& opt, Rng& order_rng, CsvLogger* log, const StepHook& hook,
                        const EpochHook& epoch_hook) {
    auto loss_fn = [&](const ReasoningSample& s) {
        const auto ids = render_cot_sequence(vocab, s, bundle.bcfg.max_seq_len);
        const size_t question_len = question_token_ids(vocab, s).size();
        return sequence_loss(bundle.decoder(), ids, question_len);
    };
    return run_sft(train, cfg, opt, order_rng, loss_fn, "cot", log, hook, epoch_hook);
}

SftResult train_plat_sft(ModelBundle& bundle, const Vocab& vocab,
                         const std::vector<ReasoningSample>& train, const SftConfig& cfg,
                         Adam& opt, Rng& order_rng, Rng& noise_rng, CsvLogger* log,
                         const StepHook& hook, const EpochHook& epoch_hook) {
    auto loss_fn = [&](const ReasoningSample& s) {
        return plat_sample_loss(bundle, vocab, s, cfg.sigma_noise, &noise_rng);
    };
    return run_sft(train, cfg, opt, order_rng, loss_fn, "plat", log, hook, epoch_hook);
}

// ---- rewards -----------------------------------------------------------------

namespace {

// Control tokens that invalidate an answer segment wherever they appear; the
// leading answer delimiter and a trailing terminator are legitimate.
bool answer_has_illegal_tokens(const Vocab& vocab, const std::vector<int>& tokens) {
    const auto& sp = vocab.specials();
    for (size_t i = 0; i < tokens.size(); ++i) {
        const int t = tokens[i];
        if (t == sp.enc || t == sp.plan || t == sp.dec || t == sp.pad) return true;
        if (t == sp.ans && i != 0) return true;
        if ((t == sp.step || t == sp.eos) && i + 1 != tokens.size()) return true;
    }
    return false;
}

}  // namespace

RewardBreakdown compute_reward(const Vocab& vocab, const std::vector<std::vector<int>>& step_tokens,
                               const std::vector<int>& answer_tokens, long long ground_truth) {
    constexpr double r_valid_eq = 0.2;
    constexpr double r_correct_eq = 0.2;
    constexpr double r_valid_ans = 0.2;
    constexpr double r_correct_ans = 1.0;
    constexpr double r_penalty = 0.2;

    RewardBreakdown out;
    for (const auto& tokens : step_tokens) {
        RewardBreakdown::Step st;
        // Strip control tokens, then look for an extractable equation.
        std::vector<int> content;
        for (int t : tokens)
            if (!vocab.is_special(t)) content.push_back(t);
        const auto eq = parse_equation(vocab.detokenize(content));
        if (eq) {
            st.equation_present = true;
            st.value += r_valid_eq;
            if (equation_true(*eq)) {
                st.equation_correct = true;
                st.value += r_correct_eq;
            }
        }
        out.total += st.value;
        out.steps.push_back(st);
    }

    const auto extracted = extract_answer_value(vocab, answer_tokens);
    const bool clean = !answer_has_illegal_tokens(vocab, answer_tokens);
    out.answer_format_valid = extracted.has_value() && clean;
    out.answer_correct = extracted.has_value() && *extracted == ground_truth;
    if (out.answer_format_valid && out.answer_correct) {
        out.answer_value = r_valid_ans + r_correct_ans;  // 1.2
    } else if (out.answer_format_valid) {
        out.answer_value = r_valid_ans - r_penalty;  // extracted but wrong: 0.0
    } else if (out.answer_correct) {
        out.answer_value = r_valid_ans;  // right number, broken format: 0.2
    } else if (extracted.has_value()) {
        out.answer_value = -r_penalty;  // extracted, wrong, broken format: -0.2
    } else {
        out.answer_value = 0.0;  // nothing extractable
    }
    out.total += out.answer_value;
    return out;
}

std::vector<double> group_advantages(const std::vector<double>& rewards) {
    const size_t g = rewards.size();
    if (g == 0) return {};
    double mean = 0.0;
    for (double r : rewards) mean += r;
    mean /= static_cast<double>(g);
    double var = 0.0;
    for (double r : rewards) var += (r - mean) * (r - mean);
    var /= static_cast<double>(g);
    const double sd = std::sqrt(var);
    std::vector<double> adv(g, 0.0);
    if (sd < 1e-12) return adv;  // zero spread: the whole group is skipped
    for (size_t i = 0; i < g; ++i) adv[i] = (rewards[i] - mean) / sd;
    return adv;
}

// ---- GRPO --------------------------------------------------------------------

Tensor grpo_surrogate(const std::vector<SurrogateTerm>& terms, double clip_eps, int group_size) {
    if (terms.empty()) throw ContractError("grpo_surrogate: no terms");
    Tensor total;
    for (const auto& term : terms) {
        Tensor ratio = exp_elem(add(term.logp, Tensor::scalar(-term.logp_old)));
        Tensor unclipped = scale(ratio, term.advantage);
        Tensor clipped = scale(clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps), term.advantage);
        Tensor surr = minimum(unclipped, clipped);
        total = total.defined() ? add(total, surr) : surr;
    }
    return scale(total, 1.0 / static_cast<double>(group_size));
}

namespace {

struct SampledSegment {
    std::vector<int> tokens;
    double logp_old = 0.0;
};

// Log-prob of `tokens` under the current decoder given the state's soft
// prefix; also returns the logits rows for the KL term.
std::pair<Tensor, Tensor> segment_logprob(const ModelBundle& bundle, const Vocab& vocab,
                                          const AggregatedState& state,
                                          const std::vector<int>& tokens) {
    MixedSequence seq;
    for (const auto& slot : state.slots)
        seq.push_back(MixedItem::cont(project(slot, bundle.proj.dec_w, bundle.proj.dec_b)));
    seq.push_back(MixedItem::tok(vocab.specials().dec));
    const int prefix = static_cast<int>(seq.size());
    for (size_t j = 0; j + 1 < tokens.size(); ++j) seq.push_back(MixedItem::tok(tokens[j]));
    Tensor h = bundle.decoder().hidden_states(seq, /*use_planner_layers=*/false);
    Tensor rows = slice_rows(h, prefix - 1, static_cast<int>(tokens.size()));
    Tensor scores = bundle.decoder().logits(rows);
    Tensor logp = scale(cross_entropy_logits(scores, tokens), -1.0);
    return {logp, scores};
}

}  // namespace

GrpoStepStats grpo_step(ModelBundle& bundle, const ModelBundle& ref_bundle, const Vocab& vocab,
                        const std::vector<const ReasoningSample*>& batch, const RlConfig& cfg,
                        Adam& opt, Rng& rng) {
    cfg.validate();
    if (!bundle.split()) throw ContractError("grpo_step: decoder must be split from the planner");
    const auto& sp = vocab.specials();
    const std::vector<int> stops{sp.step, sp.ans, sp.eos};

    GrpoStepStats stats;
    std::vector<SurrogateTerm> terms;
    Tensor kl_sum;
    int kl_tokens = 0;
    double reward_sum = 0.0;
    int reward_count = 0;

    for (const ReasoningSample* sample : batch) {
        const auto question = question_token_ids(vocab, *sample);

        // Deterministic trajectory, rolled once per question. Step count comes
        // from greedy probing under the current policy, capped by the planner.
        NoGradGuard ng_roll;
        LatentTrajectory traj;
        std::vector<AggregatedState> states;
        int t_steps = 0;
        for (int k = 1; k <= bundle.pcfg.max_plan_steps; ++k) {
            if (!extend_one_step(bundle, vocab, question, traj, states)) break;
            t_steps = k;
            if (probe_first_token(bundle, vocab, states.back()) == sp.ans) break;
        }
        if (t_steps == 0) continue;

        // G rollouts from the same fixed states.
        std::vector<std::vector<SampledSegment>> rollouts(static_cast<size_t>(cfg.group_size));
        std::vector<double> rewards(static_cast<size_t>(cfg.group_size), 0.0);
        for (int i = 0; i < cfg.group_size; ++i) {
            auto& segs = rollouts[static_cast<size_t>(i)];
            std::vector<std::vector<int>> step_tokens;
            for (int k = 0; k < t_steps; ++k) {
                DecodeRequest req{&states[static_cast<size_t>(k)], DecodeMode::sample,
                                  cfg.temperature, cfg.max_tokens, stops};
                SampledSegment seg;
                seg.tokens = decode_step(bundle, vocab, req, &rng);
                {
                    NoGradGuard ng;
                    auto [logp, rows] = segment_logprob(bundle, vocab,
                                                        states[static_cast<size_t>(k)], seg.tokens);
                    seg.logp_old = logp.item();
                }
                if (k + 1 < t_steps) step_tokens.push_back(seg.tokens);
                segs.push_back(std::move(seg));
            }
            const auto breakdown =
                compute_reward(vocab, step_tokens, segs.back().tokens, sample->answer);
            rewards[static_cast<size_t>(i)] = breakdown.total;
            reward_sum += breakdown.total;
            ++reward_count;
        }

        const auto advantages = group_advantages(rewards);
        bool all_zero = true;
        for (double a : advantages) all_zero = all_zero && a == 0.0;
        if (all_zero) {
            ++stats.skipped_groups;
            continue;
        }
        ++stats.groups;

        for (int i = 0; i < cfg.group_size; ++i) {
            for (int k = 0; k < t_steps; ++k) {
                const auto& seg = rollouts[static_cast<size_t>(i)][static_cast<size_t>(k)];
                auto [logp, rows] =
                    segment_logprob(bundle, vocab, states[static_cast<size_t>(k)], seg.tokens);
                terms.push_back({logp, seg.logp_old, advantages[static_cast<size_t>(i)]});
                if (cfg.kl_beta > 0.0) {
                    Tensor ref_rows;
                    {
                        NoGradGuard ng;
                        auto [ref_logp, rr] = segment_logprob(ref_bundle, vocab,
                                                              states[static_cast<size_t>(k)],
                                                              seg.tokens);
                        ref_rows = Tensor::from_values(rr.shape(), rr.values());
                    }
                    Tensor kl = kl_from_logits(rows, ref_rows);
                    kl_sum = kl_sum.defined() ? add(kl_sum, kl) : kl;
                    kl_tokens += static_cast<int>(seg.tokens.size());
                }
            }
        }
    }

    stats.reward_mean = reward_count > 0 ? reward_sum / reward_count : 0.0;
    if (terms.empty()) return stats;  // every group skipped: no update

    Tensor objective = grpo_surrogate(terms, cfg.clip_eps, cfg.group_size);
    Tensor loss = scale(objective, -1.0 / std::max(1, stats.groups));
    if (kl_sum.defined() && kl_tokens > 0) {
        stats.kl = kl_sum.item() / kl_tokens;
        loss = add(loss, scale(kl_sum, cfg.kl_beta / kl_tokens));
    }
    stats.objective = objective.item() / std::max(1, stats.groups);

    opt.zero_grad();
    backward(loss);
    stats.grad_norm = opt.step();
    return stats;
}

RlResult train_rl(ModelBundle& bundle, const Vocab& vocab,
                  const std::vector<ReasoningSample>& train, const RlConfig& cfg, Adam& opt,
                  Rng& rng, CsvLogger* log) {
    cfg.validate();
    if (train.empty()) throw ContractError("rl: empty training set");
    if (!bundle.split()) split_decoder(bundle);
    const ModelBundle ref = clone_bundle(bundle);

    RlResult result;
    std::vector<size_t> order(train.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    size_t cursor = order.size();

    for (int step = 0; step < cfg.steps; ++step) {
        std::vector<const ReasoningSample*> batch;
        for (int b = 0; b < cfg.batch_size; ++b) {
            if (cursor >= order.size()) {
                rng.shuffle(order);
                cursor = 0;
            }
            batch.push_back(&train[order[cursor++]]);
        }
        auto stats = grpo_step(bundle, ref, vocab, batch, cfg, opt, rng);
        if (log)
            log->append({"rl", step + 1, -stats.objective, stats.reward_mean, stats.kl,
                         stats.grad_norm});
        result.per_step.push_back(stats);
    }
    return result;
}

}  // namespace plat
