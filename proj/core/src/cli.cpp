#include "plat/cli.hpp"

#include <iostream>

#include <CLI11.hpp>

#include "plat/errors.hpp"
#include "plat/pipeline.hpp"
#include "plat/version.hpp"

namespace plat {

namespace {

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out;
};

void add_common(CLI::App* cmd, CommonArgs& common) {
    cmd->add_option("--config", common.config_path, "configuration file");
    cmd->add_option("--set", common.overrides, "override, e.g. planner.n_latent=2")
        ->take_all();
    cmd->add_option("--out", common.out, "output directory (default: timestamped run dir)");
}

RunConfig resolve(const CommonArgs& common) {
    return load_config(common.config_path, common.overrides);
}

}  // namespace

int cli_main(const std::vector<std::string>& args) {
    CLI::App app{"latent-planning transformer workbench"};
    app.set_version_flag("--version", std::string("plat ") + kVersion + " (" + build_id() + ")");
    app.require_subcommand(1);

    CommonArgs common;
    std::string data_dir, data_file, init_ckpt, resume_ckpt, ckpt, question, in_dir;
    bool eager = false, append = false;
    std::optional<uint64_t> seed_flag;
    std::optional<int> n_flag;

    auto* gen = app.add_subcommand("gen-data", "generate the synthetic corpus and splits");
    add_common(gen, common);
    gen->add_option("--seed", seed_flag, "global seed (run.seed)");
    gen->add_option("--n", n_flag, "corpus size (data.n)");

    auto* tcot = app.add_subcommand("train-cot", "explicit chain-of-thought baseline SFT");
    add_common(tcot, common);
    tcot->add_option("--data", data_dir, "directory produced by gen-data")->required();
    tcot->add_option("--resume", resume_ckpt, "checkpoint to continue from");
    tcot->add_option("--seed", seed_flag, "global seed (run.seed)");

    auto* tplat = app.add_subcommand("train-plat", "latent-planning reconstruction SFT");
    add_common(tplat, common);
    tplat->add_option("--data", data_dir, "directory produced by gen-data")->required();
    tplat->add_option("--init", init_ckpt, "cot-sft checkpoint to initialize from");
    tplat->add_option("--resume", resume_ckpt, "checkpoint to continue from");
    tplat->add_option("--seed", seed_flag, "global seed (run.seed)");

    auto* trl = app.add_subcommand("train-rl", "decoder-only GRPO refinement");
    add_common(trl, common);
    trl->add_option("--data", data_dir, "directory produced by gen-data")->required();
    trl->add_option("--init", init_ckpt, "plat-sft checkpoint to refine");
    trl->add_option("--seed", seed_flag, "global seed (run.seed)");

    auto* inf = app.add_subcommand("infer", "answer one question or a dataset");
    add_common(inf, common);
    inf->add_option("--ckpt", ckpt, "checkpoint")->required();
    inf->add_option("--question", question, "question text");
    inf->add_option("--data", data_file, "corpus jsonl");
    inf->add_flag("--eager", eager, "decode every intermediate step");

    auto* ev = app.add_subcommand("eval", "greedy accuracy, pass@k, forward-pass accounting");
    add_common(ev, common);
    ev->add_option("--ckpt", ckpt, "checkpoint")->required();
    ev->add_option("--data", data_file, "corpus jsonl")->required();

    auto* br = app.add_subcommand("branch", "branching/validity analysis");
    add_common(br, common);
    br->add_option("--ckpt", ckpt, "checkpoint")->required();
    br->add_option("--data", data_file, "corpus jsonl")->required();
    br->add_flag("--append", append, "append to existing csv (method comparison)");

    auto* en = app.add_subcommand("entropy", "first-token entropy profile");
    add_common(en, common);
    en->add_option("--ckpt", ckpt, "checkpoint")->required();
    en->add_option("--data", data_file, "corpus jsonl")->required();
    en->add_flag("--append", append, "append to existing csv (method comparison)");

    auto* pl = app.add_subcommand("plot", "render analysis csvs to svg charts");
    add_common(pl, common);
    pl->add_option("--in", in_dir, "directory holding the csv/json reports")->required();

    auto* gc = app.add_subcommand("grad-check", "finite-difference gradient verification");
    add_common(gc, common);

    std::vector<std::string> argv_copy = args;
    std::reverse(argv_copy.begin(), argv_copy.end());
    try {
        app.parse(argv_copy);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (seed_flag) common.overrides.push_back("run.seed=" + std::to_string(*seed_flag));
        if (n_flag) common.overrides.push_back("data.n=" + std::to_string(*n_flag));
        RunConfig cfg = resolve(common);

        if (gen->parsed()) {
            const auto dir = prepare_run_dir(cfg, "gen-data", common.out);
            const auto art = run_gen_data(cfg, dir);
            std::cout << "corpus: " << art.corpus << "\n"
                      << "splits: " << art.train << " " << art.val << " " << art.test << " "
                      << art.hard_ood << "\n";
        } else if (tcot->parsed()) {
            const auto dir = prepare_run_dir(cfg, "train-cot", common.out);
            const auto art = run_train_cot(cfg, data_dir, dir, resume_ckpt);
            std::cout << "checkpoint: " << art.checkpoint << "\n";
            if (!art.epoch_losses.empty())
                std::cout << "final epoch loss: " << art.epoch_losses.back() << "\n";
        } else if (tplat->parsed()) {
            const auto dir = prepare_run_dir(cfg, "train-plat", common.out);
            const auto art = run_train_plat(cfg, data_dir, init_ckpt, dir, resume_ckpt);
            std::cout << "checkpoint: " << art.checkpoint << "\n";
            if (!art.epoch_losses.empty())
                std::cout << "final epoch loss: " << art.epoch_losses.back() << "\n";
        } else if (trl->parsed()) {
            const auto dir = prepare_run_dir(cfg, "train-rl", common.out);
            const auto art = run_train_rl(cfg, data_dir, init_ckpt, dir);
            std::cout << "checkpoint: " << art.checkpoint << "\n";
            if (!art.per_step.empty())
                std::cout << "reward mean (last step): " << art.per_step.back().reward_mean
                          << "\n";
        } else if (inf->parsed()) {
            const auto dir = prepare_run_dir(cfg, "infer", common.out);
            const auto art = run_infer(cfg, ckpt, question, data_file, eager, dir);
            for (const auto& t : art.traces) {
                std::cout << "Q: " << t.question << "\n";
                std::cout << "A: " << t.answer_text;
                if (t.answer_value) std::cout << "  (value " << *t.answer_value << ")";
                std::cout << "\n";
            }
            std::cout << "traces: " << art.traces_path << "\n";
        } else if (ev->parsed()) {
            const auto dir = prepare_run_dir(cfg, "eval", common.out);
            const auto report = run_eval(cfg, ckpt, data_file, dir);
            std::cout << "dataset: " << report.dataset_id << "\n"
                      << "greedy accuracy: " << report.greedy << "\n";
            for (size_t i = 0; i < report.pass_table.ks.size(); ++i)
                std::cout << "pass@" << report.pass_table.ks[i] << ": "
                          << report.pass_table.values[i] << "\n";
            if (report.counts.traces > 0)
                std::cout << "forward passes: planner " << report.counts.planner_mean
                          << " + probes " << report.counts.probe_mean << " + answer "
                          << report.counts.answer_mean << "\n";
        } else if (br->parsed()) {
            const auto dir = prepare_run_dir(cfg, "branch", common.out);
            const auto art = run_branch(cfg, ckpt, data_file, dir, append);
            std::cout << "branching: " << art.branching_csv << "\n"
                      << "scatter: " << art.scatter_csv << "\n";
        } else if (en->parsed()) {
            const auto dir = prepare_run_dir(cfg, "entropy", common.out);
            std::cout << "entropy: " << run_entropy(cfg, ckpt, data_file, dir, append) << "\n";
        } else if (pl->parsed()) {
            const auto dir = prepare_run_dir(cfg, "plot", common.out.empty() ? in_dir : common.out);
            for (const auto& p : run_plot(in_dir, dir)) std::cout << "chart: " << p << "\n";
        } else if (gc->parsed()) {
            if (!run_grad_check_suite(true)) return 1;
        }
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const DependencyError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace plat
