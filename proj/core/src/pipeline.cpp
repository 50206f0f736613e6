#include "plat/pipeline.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "plat/errors.hpp"
#include "plat/plot.hpp"
#include "plat/rng.hpp"
#include "plat/version.hpp"

namespace fs = std::filesystem;

namespace plat {

std::string build_id() { return std::string(kBuildId); }

namespace {

std::string timestamp() {
    const auto now = std::chrono::system_clock::now();
    const auto t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y%m%d-%H%M%S", &tm);
    return buf;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write '" + path + "'");
    f << text;
}

std::string data_file(const std::string& data_dir, const char* name) {
    const auto p = fs::path(data_dir) / name;
    if (!fs::exists(p))
        throw DependencyError("missing '" + p.string() + "'; run gen-data first");
    return p.string();
}

Checkpoint make_train_checkpoint(const ModelBundle& bundle, const std::string& phase,
                                 const RunConfig& cfg, const Adam& opt,
                                 const std::vector<const Rng*>& rngs, int64_t epochs_done) {
    Checkpoint ckpt = snapshot_bundle(bundle, phase, cfg.to_text());
    ckpt.opt_state = opt.state();
    ckpt.opt_step = opt.step_count();
    for (const Rng* r : rngs) {
        const auto words = r->state_words();
        ckpt.rng_state.insert(ckpt.rng_state.end(), words.begin(), words.end());
    }
    ckpt.counters["epochs_done"] = epochs_done;
    if (bundle.split()) ckpt.partition = rl_partition(bundle);
    return ckpt;
}

}  // namespace

std::string prepare_run_dir(const RunConfig& cfg, const std::string& stage,
                            const std::string& explicit_out) {
    std::string dir;
    if (!explicit_out.empty()) {
        dir = explicit_out;
    } else {
        std::string root = cfg.out_dir;
        if (const char* env = std::getenv("PLAT_RUN_ROOT"); env && *env) root = env;
        dir = (fs::path(root) / (timestamp() + "-" + stage)).string();
    }
    fs::create_directories(dir);
    write_text((fs::path(dir) / "config.resolved.cfg").string(), cfg.to_text());
    std::ostringstream info;
    info << "stage = " << stage << "\n"
         << "seed = " << cfg.seed << "\n"
         << "build = " << build_id() << "\n";
    write_text((fs::path(dir) / "run_info.txt").string(), info.str());
    return dir;
}

GenDataArtifacts run_gen_data(const RunConfig& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    const auto corpus = generate_corpus(cfg.generator());
    const auto splits = make_splits(corpus, cfg.fractions(), cfg.seed);
    GenDataArtifacts art;
    art.corpus = (fs::path(out_dir) / "corpus.jsonl").string();
    art.train = (fs::path(out_dir) / "train.jsonl").string();
    art.val = (fs::path(out_dir) / "val.jsonl").string();
    art.test = (fs::path(out_dir) / "test.jsonl").string();
    art.hard_ood = (fs::path(out_dir) / "hard_ood.jsonl").string();
    write_corpus_jsonl(art.corpus, corpus);
    write_corpus_jsonl(art.train, splits.train);
    write_corpus_jsonl(art.val, splits.val);
    write_corpus_jsonl(art.test, splits.test);
    write_corpus_jsonl(art.hard_ood, splits.hard_ood);
    return art;
}

namespace {

struct ResumeState {
    bool active = false;
    Checkpoint ckpt;
};

ResumeState maybe_resume(const std::string& resume, const std::string& expected_phase) {
    ResumeState st;
    if (resume.empty()) return st;
    st.active = true;
    st.ckpt = load_checkpoint(resume);
    if (st.ckpt.phase != expected_phase)
        throw DependencyError("resume checkpoint has phase '" + st.ckpt.phase + "', expected '" +
                              expected_phase + "'");
    return st;
}

}  // namespace

TrainArtifacts run_train_cot(const RunConfig& cfg, const std::string& data_dir,
                             const std::string& out_dir, const std::string& resume) {
    fs::create_directories(out_dir);
    const auto& vocab = Vocab::standard();
    const auto train = read_corpus_jsonl(data_file(data_dir, "train.jsonl"));
    const SftConfig scfg = cfg.sft(SftPhase::cot);

    ModelBundle bundle = make_bundle(cfg.backbone(vocab.size()), cfg.planner(), cfg.seed,
                                     cfg.independent_decoder);
    Adam opt(named_parameters(bundle), {scfg.lr, 0.9, 0.999, 1e-8, scfg.clip_norm});
    Rng order_rng(derive_seed(cfg.seed, "cot-order"));
    int64_t epochs_done = 0;

    auto rs = maybe_resume(resume, "cot-sft");
    if (rs.active) {
        load_params_into_bundle(bundle, rs.ckpt.params);
        opt.restore(rs.ckpt.opt_state, rs.ckpt.opt_step);
        order_rng.restore(rs.ckpt.rng_state);
        epochs_done = rs.ckpt.counters.at("epochs_done");
    }

    TrainArtifacts art;
    art.log_csv = (fs::path(out_dir) / "train_log.csv").string();
    CsvLogger log(art.log_csv);
    const auto epoch_dir = fs::path(out_dir) / "epoch_ckpts";
    if (epochs_done < scfg.epochs) {
        SftConfig run_cfg = scfg;
        run_cfg.epochs = scfg.epochs - static_cast<int>(epochs_done);
        run_cfg.total_epochs_for_schedule = scfg.epochs;
        fs::create_directories(epoch_dir);
        auto per_epoch = [&](int completed) {
            const int64_t total_done = epochs_done + completed;
            char name[32];
            std::snprintf(name, sizeof(name), "epoch_%04lld.ckpt",
                          static_cast<long long>(total_done));
            save_checkpoint((epoch_dir / name).string(),
                            make_train_checkpoint(bundle, "cot-sft", cfg, opt, {&order_rng},
                                                  total_done));
        };
        auto result =
            train_cot_sft(bundle, vocab, train, run_cfg, opt, order_rng, &log, nullptr, per_epoch);
        art.step_losses = std::move(result.step_losses);
        art.epoch_losses = std::move(result.epoch_losses);
    }

    art.checkpoint = (fs::path(out_dir) / "cot.ckpt").string();
    save_checkpoint(art.checkpoint,
                    make_train_checkpoint(bundle, "cot-sft", cfg, opt, {&order_rng}, scfg.epochs));
    return art;
}

TrainArtifacts run_train_plat(const RunConfig& cfg, const std::string& data_dir,
                              const std::string& init_checkpoint, const std::string& out_dir,
                              const std::string& resume) {
    fs::create_directories(out_dir);
    const auto& vocab = Vocab::standard();
    const auto train = read_corpus_jsonl(data_file(data_dir, "train.jsonl"));
    const SftConfig scfg = cfg.sft(SftPhase::plat);

    ModelBundle bundle = make_bundle(cfg.backbone(vocab.size()), cfg.planner(), cfg.seed, false);
    Adam opt(named_parameters(bundle), {scfg.lr, 0.9, 0.999, 1e-8, scfg.clip_norm});
    Rng order_rng(derive_seed(cfg.seed, "plat-order"));
    Rng noise_rng(derive_seed(cfg.seed, "plat-noise"));
    int64_t epochs_done = 0;

    auto rs = maybe_resume(resume, "plat-sft");
    if (rs.active) {
        if (cfg.independent_decoder) split_decoder(bundle);
        load_params_into_bundle(bundle, rs.ckpt.params);
        // The optimizer was built before the split-aware load; rebuild over the
        // actual parameter set, then restore.
        opt = Adam(named_parameters(bundle), {scfg.lr, 0.9, 0.999, 1e-8, scfg.clip_norm});
        opt.restore(rs.ckpt.opt_state, rs.ckpt.opt_step);
        if (rs.ckpt.rng_state.size() != 12)
            throw IoError("plat checkpoint rng state has unexpected size");
        order_rng.restore({rs.ckpt.rng_state.begin(), rs.ckpt.rng_state.begin() + 6});
        noise_rng.restore({rs.ckpt.rng_state.begin() + 6, rs.ckpt.rng_state.end()});
        epochs_done = rs.ckpt.counters.at("epochs_done");
    } else {
        if (init_checkpoint.empty())
            throw DependencyError("train-plat needs a cot-sft checkpoint (--init)");
        Checkpoint init = load_checkpoint(init_checkpoint);
        if (init.phase != "cot-sft")
            throw DependencyError("train-plat must initialize from a cot-sft checkpoint, got '" +
                                  init.phase + "'");
        load_params_into_bundle(bundle, init.params);
        if (cfg.independent_decoder) {
            split_decoder(bundle);
            opt = Adam(named_parameters(bundle), {scfg.lr, 0.9, 0.999, 1e-8, scfg.clip_norm});
        }
    }

    TrainArtifacts art;
    art.log_csv = (fs::path(out_dir) / "train_log.csv").string();
    CsvLogger log(art.log_csv);
    const auto epoch_dir = fs::path(out_dir) / "epoch_ckpts";
    if (epochs_done < scfg.epochs) {
        SftConfig run_cfg = scfg;
        run_cfg.epochs = scfg.epochs - static_cast<int>(epochs_done);
        run_cfg.total_epochs_for_schedule = scfg.epochs;
        fs::create_directories(epoch_dir);
        auto per_epoch = [&](int completed) {
            const int64_t total_done = epochs_done + completed;
            char name[32];
            std::snprintf(name, sizeof(name), "epoch_%04lld.ckpt",
                          static_cast<long long>(total_done));
            save_checkpoint((epoch_dir / name).string(),
                            make_train_checkpoint(bundle, "plat-sft", cfg, opt,
                                                  {&order_rng, &noise_rng}, total_done));
        };
        auto result = train_plat_sft(bundle, vocab, train, run_cfg, opt, order_rng, noise_rng,
                                     &log, nullptr, per_epoch);
        art.step_losses = std::move(result.step_losses);
        art.epoch_losses = std::move(result.epoch_losses);
    }

    art.checkpoint = (fs::path(out_dir) / "plat.ckpt").string();
    save_checkpoint(art.checkpoint,
                    make_train_checkpoint(bundle, "plat-sft", cfg, opt, {&order_rng, &noise_rng},
                                          scfg.epochs));
    return art;
}

RlArtifacts run_train_rl(const RunConfig& cfg, const std::string& data_dir,
                         const std::string& init_checkpoint, const std::string& out_dir) {
    fs::create_directories(out_dir);
    const auto& vocab = Vocab::standard();
    const auto train = read_corpus_jsonl(data_file(data_dir, "train.jsonl"));
    if (init_checkpoint.empty())
        throw DependencyError("train-rl needs a plat-sft checkpoint (--init)");
    Checkpoint init = load_checkpoint(init_checkpoint);
    if (init.phase != "plat-sft")
        throw DependencyError("train-rl must initialize from a plat-sft checkpoint, got '" +
                              init.phase + "'");

    RunConfig model_cfg = parse_config_text(init.config_text);
    ModelBundle bundle = bundle_from_params(model_cfg.backbone(vocab.size()), model_cfg.planner(),
                                            init.params);
    if (!bundle.split()) split_decoder(bundle);

    const RlConfig rcfg = cfg.rl();
    const auto partition = rl_partition(bundle);
    auto all = named_parameters(bundle);
    std::map<std::string, Tensor> trainable;
    for (const auto& name : partition.trainable) trainable[name] = all.at(name);
    Adam opt(trainable, {rcfg.lr, 0.9, 0.999, 1e-8, rcfg.clip_norm});
    Rng rng(rcfg.seed);

    RlArtifacts art;
    art.log_csv = (fs::path(out_dir) / "train_log.csv").string();
    CsvLogger log(art.log_csv);
    auto result = train_rl(bundle, vocab, train, rcfg, opt, rng, &log);
    art.per_step = std::move(result.per_step);

    art.checkpoint = (fs::path(out_dir) / "rl.ckpt").string();
    Checkpoint ckpt = make_train_checkpoint(bundle, "rl", cfg, opt, {&rng}, 0);
    ckpt.counters["rl_steps_done"] = rcfg.steps;
    ckpt.config_text = model_cfg.to_text();  // model geometry stays authoritative
    save_checkpoint(art.checkpoint, ckpt);
    return art;
}

LoadedModel load_model(const std::string& checkpoint_path) {
    Checkpoint ckpt = load_checkpoint(checkpoint_path);
    LoadedModel lm;
    lm.phase = ckpt.phase;
    lm.kind = ckpt.phase == "cot-sft" ? ModelKind::cot : ModelKind::plat;
    lm.config = parse_config_text(ckpt.config_text);
    const auto& vocab = Vocab::standard();
    lm.bundle = bundle_from_params(lm.config.backbone(vocab.size()), lm.config.planner(),
                                   ckpt.params);
    return lm;
}

EvalReport run_eval(const RunConfig& cfg, const std::string& checkpoint_path,
                    const std::string& data_path, const std::string& out_dir) {
    fs::create_directories(out_dir);
    const auto& vocab = Vocab::standard();
    LoadedModel lm = load_model(checkpoint_path);
    const auto dataset = read_corpus_jsonl(data_path);

    EvalOptions opts = cfg.eval(lm.kind);
    opts.max_steps = lm.config.max_plan_steps;

    EvalReport report;
    report.dataset_id = fs::path(data_path).filename().string();
    report.n_questions = static_cast<int>(dataset.size());
    report.tau = opts.tau;

    std::vector<InferenceTrace> traces;
    report.greedy = greedy_accuracy(lm.bundle, vocab, dataset, opts,
                                    lm.kind == ModelKind::plat ? &traces : nullptr);
    report.pass_table = pass_at_k(lm.bundle, vocab, dataset, opts);
    if (lm.kind == ModelKind::plat) {
        report.counts = efficiency_counts(traces, lm.bundle.pcfg.n_latent);
        report.traces_path = (fs::path(out_dir) / "traces.jsonl").string();
        write_traces_jsonl(report.traces_path, traces);
    }
    write_eval_json((fs::path(out_dir) / "eval.json").string(), report);
    return report;
}

InferArtifacts run_infer(const RunConfig& cfg, const std::string& checkpoint_path,
                         const std::string& question_text, const std::string& data_path,
                         bool eager, const std::string& out_dir) {
    fs::create_directories(out_dir);
    const auto& vocab = Vocab::standard();
    LoadedModel lm = load_model(checkpoint_path);

    std::vector<std::vector<int>> questions;
    std::vector<std::string> texts;
    if (!question_text.empty()) {
        auto ids = vocab.tokenize(question_text);
        ids.push_back(vocab.specials().enc);
        questions.push_back(std::move(ids));
        texts.push_back(question_text);
    } else if (!data_path.empty()) {
        for (const auto& s : read_corpus_jsonl(data_path)) {
            questions.push_back(question_token_ids(vocab, s));
            texts.push_back(s.question);
        }
    } else {
        throw ConfigError("infer: provide --question or --data");
    }

    InferArtifacts art;
    for (size_t i = 0; i < questions.size(); ++i) {
        if (lm.kind == ModelKind::cot) {
            auto generated = cot_generate(lm.bundle, vocab, questions[i], DecodeMode::greedy,
                                          cfg.eval_tau, lm.bundle.bcfg.max_seq_len, nullptr);
            InferenceTrace trace;
            trace.question = texts[i];
            trace.answer_text = vocab.detokenize(generated);
            trace.answer_value = cot_answer_value(vocab, generated);
            trace.reason = trace.answer_value ? Termination::answer : Termination::step_cap;
            int idx = 1;
            for (const auto& st : cot_step_texts(vocab, generated)) {
                StepRecord rec;
                rec.step_index = idx++;
                rec.decoded = true;
                rec.text = st;
                trace.steps.push_back(rec);
            }
            art.traces.push_back(std::move(trace));
        } else {
            InferOptions io;
            io.max_steps = lm.config.max_plan_steps;
            io.max_tokens = cfg.eval_max_tokens;
            io.decode_every_step = eager;
            auto trace = eager ? decode_all_steps(lm.bundle, vocab, questions[i], io)
                               : lazy_infer(lm.bundle, vocab, questions[i], io);
            art.traces.push_back(std::move(trace));
        }
    }
    art.traces_path = (fs::path(out_dir) / "traces.jsonl").string();
    write_traces_jsonl(art.traces_path, art.traces);
    return art;
}

BranchArtifacts run_branch(const RunConfig& cfg, const std::string& checkpoint_path,
                           const std::string& data_path, const std::string& out_dir,
                           bool append) {
    fs::create_directories(out_dir);
    const auto& vocab = Vocab::standard();
    LoadedModel lm = load_model(checkpoint_path);
    const auto dataset = read_corpus_jsonl(data_path);

    EvalOptions opts = cfg.eval(lm.kind);
    opts.max_steps = lm.config.max_plan_steps;
    const auto sampler = lm.kind == ModelKind::plat ? plat_step_sampler(lm.bundle, vocab, opts)
                                                    : cot_step_sampler(lm.bundle, vocab, opts);
    const auto records = branch_analysis(sampler, dataset, cfg.branch_samples, cfg.eval_bins,
                                         derive_seed(cfg.seed, "branch"));
    const auto curves = aggregate_branches(records, cfg.eval_bins);

    const std::string method = lm.kind == ModelKind::plat ? "plat" : "cot";
    BranchArtifacts art;
    art.branching_csv = (fs::path(out_dir) / "branching.csv").string();
    art.scatter_csv = (fs::path(out_dir) / "scatter.csv").string();
    write_branching_csv(art.branching_csv, curves, method, append);
    write_scatter_csv(art.scatter_csv, records, method, append);
    return art;
}

std::string run_entropy(const RunConfig& cfg, const std::string& checkpoint_path,
                        const std::string& data_path, const std::string& out_dir, bool append) {
    fs::create_directories(out_dir);
    const auto& vocab = Vocab::standard();
    LoadedModel lm = load_model(checkpoint_path);
    const auto dataset = read_corpus_jsonl(data_path);
    EvalOptions opts = cfg.eval(lm.kind);
    opts.max_steps = lm.config.max_plan_steps;
    const auto profile = entropy_profile(lm.bundle, vocab, dataset, opts, cfg.eval_bins);
    const std::string path = (fs::path(out_dir) / "entropy.csv").string();
    write_entropy_csv(path, profile, lm.kind == ModelKind::plat ? "plat" : "cot", append);
    return path;
}

// ---- plotting -------------------------------------------------------------------

namespace {

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

CsvTable read_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open '" + path + "'");
    CsvTable table;
    std::string line;
    bool first = true;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (first) {
            table.header = fields;
            first = false;
        } else {
            table.rows.push_back(fields);
        }
    }
    return table;
}

size_t column(const CsvTable& t, const std::string& name) {
    for (size_t i = 0; i < t.header.size(); ++i)
        if (t.header[i] == name) return i;
    throw IoError("csv missing column '" + name + "'");
}

std::vector<Series> series_by_method(const CsvTable& t, const std::string& x_col,
                                     const std::string& y_col) {
    const size_t xi = column(t, x_col), yi = column(t, y_col), mi = column(t, "method");
    std::map<std::string, Series> by_method;
    for (const auto& row : t.rows) {
        auto& s = by_method[row[mi]];
        s.label = row[mi];
        s.xs.push_back(std::stod(row[xi]));
        s.ys.push_back(std::stod(row[yi]));
    }
    std::vector<Series> out;
    for (auto& [name, s] : by_method) out.push_back(std::move(s));
    return out;
}

}  // namespace

std::vector<std::string> run_plot(const std::string& in_dir, const std::string& out_dir) {
    fs::create_directories(out_dir);
    std::vector<std::string> written;
    auto emit = [&](const std::string& name, const std::string& title, const std::string& xl,
                    const std::string& yl, const std::vector<Series>& series, bool scatter) {
        const std::string path = (fs::path(out_dir) / name).string();
        write_svg_chart(path, title, xl, yl, series, scatter);
        written.push_back(path);
    };

    const auto branching = fs::path(in_dir) / "branching.csv";
    if (fs::exists(branching)) {
        auto t = read_csv(branching.string());
        emit("branching_branch.svg", "Branch count over reasoning progress", "progress bin",
             "mean branch count", series_by_method(t, "bin", "branch_mean"), false);
        emit("branching_valid.svg", "Valid branch count over reasoning progress", "progress bin",
             "mean valid count", series_by_method(t, "bin", "valid_mean"), false);
    }
    const auto entropy = fs::path(in_dir) / "entropy.csv";
    if (fs::exists(entropy)) {
        auto t = read_csv(entropy.string());
        emit("entropy.svg", "First-token entropy over reasoning progress", "progress bin",
             "mean entropy (nats)", series_by_method(t, "bin", "h_mean"), false);
    }
    const auto scatter = fs::path(in_dir) / "scatter.csv";
    if (fs::exists(scatter)) {
        auto t = read_csv(scatter.string());
        emit("scatter.svg", "Branching vs valid steps per question", "branch count",
             "valid count", series_by_method(t, "branch_count", "valid_count"), true);
    }
    const auto eval_json = fs::path(in_dir) / "eval.json";
    if (fs::exists(eval_json)) {
        std::ifstream f(eval_json);
        nlohmann::json j;
        f >> j;
        Series s;
        s.label = j.value("dataset", std::string("eval"));
        for (const auto& [k, v] : j.at("pass_at_k").items()) {
            s.xs.push_back(std::stod(k));
            s.ys.push_back(v.get<double>());
        }
        // keys arrive lexicographically; sort by k
        std::vector<size_t> idx(s.xs.size());
        for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return s.xs[a] < s.xs[b]; });
        Series sorted;
        sorted.label = s.label;
        for (size_t i : idx) {
            sorted.xs.push_back(s.xs[i]);
            sorted.ys.push_back(s.ys[i]);
        }
        emit("pass_at_k.svg", "Pass@k", "k", "pass@k", {sorted}, false);
    }
    if (written.empty()) throw DependencyError("plot: no analysis files found in '" + in_dir + "'");
    return written;
}

// ---- gradient suite ----------------------------------------------------------------

namespace {

bool report_check(const std::string& name, const GradCheckReport& rep, bool verbose) {
    if (verbose)
        std::cout << "[grad-check] " << name << ": " << rep.to_string() << "\n";
    return rep.pass;
}

}  // namespace

bool run_grad_check_suite(bool verbose) {
    constexpr double kStep = 1e-6;
    constexpr double kTol = 1e-4;
    bool ok = true;
    Rng rng(20240911);
    auto leaf = [&](std::vector<int> shape, double stddev = 1.0) {
        return Tensor::randn(std::move(shape), stddev, rng, true);
    };
    auto check = [&](const std::string& name, const std::function<Tensor()>& f,
                     const std::vector<Tensor>& inputs) {
        ok = report_check(name, grad_check(f, inputs, kStep, kTol), verbose) && ok;
    };

    {
        auto a = leaf({3, 4}), b = leaf({4, 2});
        check("matmul", [&] { return mean_all(matmul(a, b)); }, {a, b});
    }
    {
        auto a = leaf({3, 4}), b = leaf({3, 4});
        check("add", [&] { return mean_all(add(a, b)); }, {a, b});
        check("mul", [&] { return mean_all(mul(a, b)); }, {a, b});
        check("minimum", [&] { return mean_all(minimum(a, b)); }, {a, b});
    }
    {
        auto a = leaf({3, 4});
        auto bias = leaf({4});
        check("add-bias-lastdim", [&] { return mean_all(add(a, bias)); }, {a, bias});
        check("scale", [&] { return mean_all(scale(a, 0.37)); }, {a});
        check("gelu", [&] { return mean_all(gelu(a)); }, {a});
        check("transpose-2d", [&] { return mean_all(transpose2d(a)); }, {a});
        check("mean", [&] { return mean_all(a); }, {a});
        check("sum", [&] { return sum_all(a); }, {a});
        check("clamp", [&] { return mean_all(clamp(a, -0.5, 0.5)); }, {a});
        check("slice", [&] { return mean_all(slice_rows(a, 1, 2)); }, {a});
    }
    {
        auto a = leaf({3, 4}, 0.5);
        check("exp", [&] { return mean_all(exp_elem(a)); }, {a});
    }
    {
        auto a = leaf({3, 5}), w = leaf({3, 5});
        check("softmax-lastdim", [&] { return mean_all(mul(softmax_lastdim(a), w)); }, {a, w});
        check("kl-logits", [&] { return kl_from_logits(a, w); }, {a, w});
    }
    {
        auto a = leaf({4, 4}), w = leaf({4, 4});
        check("causal-softmax", [&] { return mean_all(mul(causal_softmax(a), w)); }, {a, w});
    }
    {
        auto x = leaf({3, 6});
        auto g = leaf({6}), b = leaf({6});
        check("layernorm-lastdim", [&] { return mean_all(layernorm_lastdim(x, g, b)); },
              {x, g, b});
    }
    {
        auto table = leaf({7, 4});
        std::vector<int> ids{2, 2, 6, 0};
        check("embedding-lookup", [&] { return mean_all(embedding_lookup(table, ids)); }, {table});
    }
    {
        auto a = leaf({2, 3}), b = leaf({3, 3});
        check("concat-seq", [&] { return mean_all(concat_rows({a, b})); }, {a, b});
    }
    {
        auto logits = leaf({4, 6});
        std::vector<int> targets{1, -1, 5, 0};
        check("cross-entropy-logits", [&] { return cross_entropy_logits(logits, targets); },
              {logits});
    }

    const auto& vocab = Vocab::standard();

    // Composed one-layer transformer loss at tiny dims.
    {
        BackboneConfig bcfg;
        bcfg.d_m = 16;
        bcfg.n_layers = 1;
        bcfg.n_planner_layers = 0;
        bcfg.n_heads = 2;
        bcfg.max_seq_len = 32;
        bcfg.vocab_size = vocab.size();
        Rng init_rng(7);
        Backbone net(bcfg, init_rng);
        std::vector<int> ids = vocab.tokenize("start with 3 . then add 4 . what do you get ?");
        ids.push_back(vocab.specials().enc);
        ids.push_back(vocab.specials().ans);
        std::vector<Tensor> inputs;
        for (const auto& [name, t] : net.params()) inputs.push_back(t);
        check("one-layer-transformer-loss",
              [&] { return sequence_loss(net, ids, 3).first; }, inputs);
    }

    // Full reconstruction loss at tiny dims (d_m=16, d_s=8, two latent slots).
    {
        BackboneConfig bcfg;
        bcfg.d_m = 16;
        bcfg.n_layers = 1;
        bcfg.n_planner_layers = 1;
        bcfg.n_heads = 2;
        bcfg.max_seq_len = 48;
        bcfg.vocab_size = vocab.size();
        PlannerConfig pcfg;
        pcfg.d_s = 8;
        pcfg.n_latent = 2;
        pcfg.alpha_ema = 0.5;
        pcfg.sigma_noise = 0.1;
        pcfg.max_plan_steps = 4;
        ModelBundle bundle = make_bundle(bcfg, pcfg, 99);
        GeneratorConfig gcfg;
        gcfg.seed = 5;
        gcfg.n = 1;
        gcfg.step_min = gcfg.step_max = 2;
        const auto sample = generate_corpus(gcfg).front();
        std::vector<Tensor> inputs;
        for (const auto& [name, t] : named_parameters(bundle)) inputs.push_back(t);
        check("full-reconstruction-loss",
              [&] {
                  // Frozen noise stream keeps f a pure function of the params.
                  Rng noise(123);
                  return plat_sample_loss(bundle, vocab, sample, pcfg.sigma_noise, &noise).first;
              },
              inputs);
    }

    if (verbose) std::cout << "[grad-check] overall: " << (ok ? "PASS" : "FAIL") << "\n";
    return ok;
}

}  // namespace plat
