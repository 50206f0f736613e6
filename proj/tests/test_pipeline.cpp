#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "plat/cli.hpp"
#include "plat/pipeline.hpp"

using namespace plat;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

// Tiny but trainable configuration for smoke runs.
RunConfig smoke_config(uint64_t seed = 11) {
    RunConfig cfg;
    cfg.seed = seed;
    cfg.d_m = 32;
    cfg.n_layers = 1;
    cfg.n_planner_layers = 1;
    cfg.n_heads = 2;
    cfg.max_seq_len = 96;
    cfg.d_s = 16;
    cfg.n_latent = 1;
    cfg.max_plan_steps = 4;
    cfg.data_n = 24;
    cfg.step_min = 1;
    cfg.step_max = 2;
    cfg.cot_epochs = 2;
    cfg.cot_batch_size = 8;
    cfg.plat_epochs = 2;
    cfg.plat_batch_size = 8;
    cfg.rl_steps = 2;
    cfg.rl_batch_size = 2;
    cfg.rl_group_size = 4;
    cfg.eval_n_samples = 4;
    cfg.eval_ks = {1, 2, 4};
    cfg.branch_samples = 3;
    return cfg;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string sub(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("gen-data twice with the same seed writes byte-identical files") {
    TempDir tmp("plat_test_gendata");
    RunConfig cfg = smoke_config(7);
    auto a = run_gen_data(cfg, tmp.sub("a"));
    auto b = run_gen_data(cfg, tmp.sub("b"));
    CHECK(slurp(a.corpus) == slurp(b.corpus));
    CHECK(slurp(a.train) == slurp(b.train));
    CHECK(slurp(a.hard_ood) == slurp(b.hard_ood));
}

TEST_CASE("end-to-end smoke: gen-data, train-cot, train-plat, train-rl, eval") {
    TempDir tmp("plat_test_e2e");
    RunConfig cfg = smoke_config(3);
    const auto data_dir = tmp.sub("data");
    fs::create_directories(data_dir);
    run_gen_data(cfg, data_dir);

    const auto cot_dir = tmp.sub("cot");
    fs::create_directories(cot_dir);
    auto cot = run_train_cot(cfg, data_dir, cot_dir);
    CHECK(fs::exists(cot.checkpoint));
    CHECK(fs::exists(cot.log_csv));
    CHECK_FALSE(cot.step_losses.empty());

    const auto plat_dir = tmp.sub("plat");
    fs::create_directories(plat_dir);
    auto plat = run_train_plat(cfg, data_dir, cot.checkpoint, plat_dir);
    CHECK(fs::exists(plat.checkpoint));

    const auto rl_dir = tmp.sub("rl");
    fs::create_directories(rl_dir);
    auto rl = run_train_rl(cfg, data_dir, plat.checkpoint, rl_dir);
    CHECK(fs::exists(rl.checkpoint));
    CHECK(static_cast<int>(rl.per_step.size()) == cfg.rl_steps);

    const auto eval_dir = tmp.sub("eval");
    fs::create_directories(eval_dir);
    auto report = run_eval(cfg, plat.checkpoint, data_dir + "/test.jsonl", eval_dir);
    CHECK(fs::exists(eval_dir + "/eval.json"));
    CHECK(fs::exists(report.traces_path));
    CHECK(report.greedy >= 0.0);
    CHECK(report.greedy <= 1.0);

    // cot checkpoints evaluate through the explicit-chain path
    auto cot_report = run_eval(cfg, cot.checkpoint, data_dir + "/test.jsonl", eval_dir);
    CHECK(cot_report.counts.traces == 0);
}

TEST_CASE("train-plat without an init checkpoint is a dependency error") {
    TempDir tmp("plat_test_dep");
    RunConfig cfg = smoke_config();
    const auto data_dir = tmp.sub("data");
    fs::create_directories(data_dir);
    run_gen_data(cfg, data_dir);
    CHECK_THROWS_AS(run_train_plat(cfg, data_dir, "", tmp.sub("x")), DependencyError);

    // wrong phase: rl from a cot checkpoint
    auto cot = run_train_cot(cfg, data_dir, tmp.sub("cot"));
    CHECK_THROWS_WITH_AS(run_train_rl(cfg, data_dir, cot.checkpoint, tmp.sub("y")),
                         doctest::Contains("plat-sft"), DependencyError);
}

TEST_CASE("training stages do not mutate their inputs") {
    TempDir tmp("plat_test_inputs");
    RunConfig cfg = smoke_config(5);
    const auto data_dir = tmp.sub("data");
    fs::create_directories(data_dir);
    auto data = run_gen_data(cfg, data_dir);
    const std::string corpus_before = slurp(data.train);

    auto cot = run_train_cot(cfg, data_dir, tmp.sub("cot"));
    const std::string cot_before = slurp(cot.checkpoint);
    run_train_plat(cfg, data_dir, cot.checkpoint, tmp.sub("plat"));
    CHECK(slurp(data.train) == corpus_before);
    CHECK(slurp(cot.checkpoint) == cot_before);
}

TEST_CASE("resumed SFT continues the loss curve exactly") {
    TempDir tmp("plat_test_resume");
    RunConfig cfg = smoke_config(9);
    const auto data_dir = tmp.sub("data");
    fs::create_directories(data_dir);
    run_gen_data(cfg, data_dir);

    // straight three-epoch run; per-epoch checkpoints land in epoch_ckpts/
    RunConfig cfg3 = cfg;
    cfg3.plat_epochs = 3;
    cfg3.cot_epochs = 1;
    auto cot = run_train_cot(cfg3, data_dir, tmp.sub("cot"));
    auto straight = run_train_plat(cfg3, data_dir, cot.checkpoint, tmp.sub("straight"));

    // interrupt after epoch 2: resume from the straight run's intermediate
    // checkpoint under the same configuration
    const auto mid_ckpt = tmp.sub("straight") + "/epoch_ckpts/epoch_0002.ckpt";
    REQUIRE(fs::exists(mid_ckpt));
    auto resumed = run_train_plat(cfg3, data_dir, "", tmp.sub("part2"), mid_ckpt);

    REQUIRE(!resumed.step_losses.empty());
    const size_t steps_per_epoch = straight.step_losses.size() / 3;
    REQUIRE(resumed.step_losses.size() == steps_per_epoch);
    for (size_t i = 0; i < steps_per_epoch; ++i)
        CHECK(resumed.step_losses[i] == straight.step_losses[2 * steps_per_epoch + i]);
}

TEST_CASE("cli: dependency and usage errors surface as exit codes") {
    TempDir tmp("plat_test_cli");
    // train-rl without a plat checkpoint -> dependency error (3)
    RunConfig cfg = smoke_config();
    const auto data_dir = tmp.sub("data");
    fs::create_directories(data_dir);
    run_gen_data(cfg, data_dir);
    CHECK(cli_main({"train-rl", "--data", data_dir, "--out", tmp.sub("rl")}) == 3);
    // bad override -> usage/config error (2)
    CHECK(cli_main({"gen-data", "--set", "planner.bogus=1", "--out", tmp.sub("g")}) == 2);
    // unknown subcommand -> parse error (2)
    CHECK(cli_main({"no-such-command"}) == 2);
}

TEST_CASE("cli: gen-data then infer on a trained tiny checkpoint") {
    TempDir tmp("plat_test_cli2");
    RunConfig cfg = smoke_config(13);
    const auto data_dir = tmp.sub("data");
    fs::create_directories(data_dir);

    CHECK(cli_main({"gen-data", "--seed", "13", "--n", "24", "--set", "data.step_max=2",
                    "--out", data_dir}) == 0);
    CHECK(fs::exists(data_dir + "/train.jsonl"));
    CHECK(fs::exists(data_dir + "/config.resolved.cfg"));
    CHECK(fs::exists(data_dir + "/run_info.txt"));

    auto cot = run_train_cot(cfg, data_dir, tmp.sub("cot"));
    auto plat = run_train_plat(cfg, data_dir, cot.checkpoint, tmp.sub("plat"));
    CHECK(cli_main({"infer", "--ckpt", plat.checkpoint, "--question",
                    "start with 3 . then add 4 . what do you get ?", "--out",
                    tmp.sub("infer")}) == 0);
    CHECK(fs::exists(tmp.sub("infer") + "/traces.jsonl"));
}

TEST_CASE("branch, entropy, and plot artifacts") {
    TempDir tmp("plat_test_plots");
    RunConfig cfg = smoke_config(17);
    const auto data_dir = tmp.sub("data");
    fs::create_directories(data_dir);
    run_gen_data(cfg, data_dir);
    auto cot = run_train_cot(cfg, data_dir, tmp.sub("cot"));
    auto plat = run_train_plat(cfg, data_dir, cot.checkpoint, tmp.sub("plat"));

    const auto analysis = tmp.sub("analysis");
    fs::create_directories(analysis);
    auto art = run_branch(cfg, plat.checkpoint, data_dir + "/test.jsonl", analysis);
    run_branch(cfg, cot.checkpoint, data_dir + "/test.jsonl", analysis, /*append=*/true);
    CHECK(fs::exists(art.branching_csv));
    CHECK(fs::exists(art.scatter_csv));
    // two methods present in the combined file
    const auto csv = slurp(art.branching_csv);
    CHECK(csv.find("plat") != std::string::npos);
    CHECK(csv.find("cot") != std::string::npos);

    run_entropy(cfg, plat.checkpoint, data_dir + "/test.jsonl", analysis);
    CHECK(fs::exists(analysis + "/entropy.csv"));

    run_eval(cfg, plat.checkpoint, data_dir + "/test.jsonl", analysis);
    auto charts = run_plot(analysis, analysis);
    CHECK(charts.size() >= 3);
    for (const auto& c : charts) {
        CHECK(fs::exists(c));
        CHECK(slurp(c).find("<svg") != std::string::npos);
    }
}
