#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "plat/checkpoint.hpp"
#include "plat/config.hpp"
#include "plat/rng.hpp"

using namespace plat;

namespace {
std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}
}  // namespace

TEST_CASE("empty config gives all defaults") {
    RunConfig defaults;
    RunConfig loaded = parse_config_text("");
    CHECK(loaded.to_text() == defaults.to_text());
    CHECK(loaded.d_m == 128);
    CHECK(loaded.n_latent == 1);
}

TEST_CASE("file values override defaults, cli overrides win over file") {
    RunConfig cfg = parse_config_text("[planner]\nn_latent = 1\nalpha_ema = 0.5\n");
    CHECK(cfg.n_latent == 1);
    cfg.apply_override("planner.n_latent=2");
    CHECK(cfg.n_latent == 2);
    CHECK(cfg.alpha_ema == 0.5);
}

TEST_CASE("unknown keys and type errors are rejected with locations") {
    CHECK_THROWS_WITH_AS(parse_config_text("[planner]\nn_latnet = 2\n"),
                         doctest::Contains("planner.n_latnet"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("[nosuch]\nx = 1\n"),
                         doctest::Contains("nosuch.x"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("[planner]\nn_latent = two\n"),
                         doctest::Contains("<text>:2"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("n_latent = 2\n"), ConfigError);  // no section
    RunConfig cfg;
    CHECK_THROWS_AS(cfg.apply_override("planner.bogus=1"), ConfigError);
    CHECK_THROWS_AS(cfg.apply_override("planner.n_latent"), ConfigError);
}

TEST_CASE("comments, blanks, and int lists parse") {
    RunConfig cfg = parse_config_text(
        "# a comment\n\n[eval]\nks = 1, 2, 8   ; trailing comment\n\n[run]\nseed = 42\n");
    CHECK(cfg.eval_ks == std::vector<int>{1, 2, 8});
    CHECK(cfg.seed == 42);
}

TEST_CASE("resolved config echo round-trips to an identical config") {
    RunConfig cfg;
    cfg.apply_override("planner.n_latent=2");
    cfg.apply_override("planner.alpha_ema=0.5");
    cfg.apply_override("backbone.d_m=64");
    cfg.apply_override("run.seed=123456789");
    cfg.apply_override("rl.lr=5e-6");
    const std::string echoed = cfg.to_text();
    RunConfig back = parse_config_text(echoed);
    CHECK(back.to_text() == echoed);
    CHECK(back.n_latent == 2);
    CHECK(back.rl_lr == 5e-6);
}

TEST_CASE("derived module configs") {
    RunConfig cfg;
    cfg.apply_override("planner.aggregation=residual");
    CHECK(cfg.planner().aggregation == Aggregation::residual);
    cfg.apply_override("planner.aggregation=bogus");
    CHECK_THROWS_AS(cfg.planner(), ConfigError);
    cfg.apply_override("planner.aggregation=ema");

    auto sft = cfg.sft(SftPhase::plat);
    CHECK(sft.sigma_noise == cfg.sigma_noise);
    auto cot = cfg.sft(SftPhase::cot);
    CHECK(cot.sigma_noise == 0.0);

    // eval sampling seed differs from the corpus seed (stream separation)
    CHECK(cfg.generator().seed != cfg.eval(ModelKind::plat).seed);
}

TEST_CASE("checkpoint round-trip is bitwise") {
    BackboneConfig bcfg;
    bcfg.d_m = 16;
    bcfg.n_layers = 1;
    bcfg.n_planner_layers = 1;
    bcfg.n_heads = 2;
    bcfg.max_seq_len = 32;
    bcfg.vocab_size = Vocab::standard().size();
    PlannerConfig pcfg;
    pcfg.d_s = 8;
    ModelBundle bundle = make_bundle(bcfg, pcfg, 5);

    RunConfig cfg;
    Checkpoint ckpt = snapshot_bundle(bundle, "plat-sft", cfg.to_text());
    Rng rng(9);
    rng.uniform();
    ckpt.rng_state = rng.state_words();
    ckpt.counters["epochs_done"] = 3;
    ckpt.partition.frozen = {"net.tok_emb"};
    ckpt.partition.trainable = {"proj.dec_w"};

    const std::string p1 = "ckpt_tmp_a.bin", p2 = "ckpt_tmp_b.bin";
    save_checkpoint(p1, ckpt);
    Checkpoint loaded = load_checkpoint(p1);
    save_checkpoint(p2, loaded);
    CHECK(slurp(p1) == slurp(p2));

    CHECK(loaded.phase == "plat-sft");
    CHECK(loaded.counters.at("epochs_done") == 3);
    CHECK(loaded.partition.frozen == ckpt.partition.frozen);
    CHECK(loaded.rng_state == ckpt.rng_state);
    for (const auto& [name, t] : ckpt.params)
        CHECK(loaded.params.at(name).values() == t.values());

    // restored rng continues the same stream
    Rng restored(1);
    restored.restore(loaded.rng_state);
    Rng expect(9);
    expect.uniform();
    CHECK(restored.next_u64() == expect.next_u64());

    std::remove(p1.c_str());
    std::remove(p2.c_str());
}

TEST_CASE("truncated or corrupt checkpoints are rejected before any load") {
    BackboneConfig bcfg;
    bcfg.d_m = 16;
    bcfg.n_layers = 1;
    bcfg.n_planner_layers = 0;
    bcfg.n_heads = 2;
    bcfg.max_seq_len = 32;
    bcfg.vocab_size = Vocab::standard().size();
    ModelBundle bundle = make_bundle(bcfg, PlannerConfig{.d_s = 8}, 5);
    const std::string path = "ckpt_tmp_c.bin";
    save_checkpoint(path, snapshot_bundle(bundle, "cot-sft", ""));

    auto bytes = slurp(path);
    {
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    }
    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("checksum"), IoError);

    {
        auto corrupted = bytes;
        corrupted[corrupted.size() / 3] ^= 0x40;
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        f.write(corrupted.data(), static_cast<std::streamsize>(corrupted.size()));
    }
    CHECK_THROWS_AS(load_checkpoint(path), IoError);

    CHECK_THROWS_AS(load_checkpoint("does_not_exist.bin"), IoError);
    std::remove(path.c_str());
}

TEST_CASE("rng determinism and stream derivation") {
    Rng a(7), b(7);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    CHECK(derive_seed(1, "x") != derive_seed(1, "y"));
    CHECK(derive_seed(1, "x", 0) != derive_seed(1, "x", 1));
    CHECK(derive_seed(1, "x") == derive_seed(1, "x"));

    // gaussian statistics sanity
    Rng g(11);
    double mean = 0, sq = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double x = g.gaussian(0.0, 1.0);
        mean += x;
        sq += x * x;
    }
    mean /= n;
    CHECK(std::abs(mean) < 0.01);
    CHECK(std::abs(sq / n - 1.0) < 0.02);
}
