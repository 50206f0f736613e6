#pragma once

#include <optional>
#include <string>
#include <vector>

#include "plat/checkpoint.hpp"
#include "plat/config.hpp"
#include "plat/evalsuite.hpp"
#include "plat/training.hpp"

namespace plat {

// Stage drivers shared by the command-line tool and the test suites. Each
// writes its artifacts under an output directory and returns what later
// stages need. No stage mutates the inputs of an earlier one.

// Creates (or reuses) the output directory and drops the resolved config,
// seed, and build id into it. `explicit_out` wins over the configured root;
// the PLAT_RUN_ROOT environment variable overrides the configured root.
std::string prepare_run_dir(const RunConfig& cfg, const std::string& stage,
                            const std::string& explicit_out);

std::string build_id();

struct GenDataArtifacts {
    std::string corpus, train, val, test, hard_ood;
};
GenDataArtifacts run_gen_data(const RunConfig& cfg, const std::string& out_dir);

struct TrainArtifacts {
    std::string checkpoint;
    std::string log_csv;
    std::vector<double> step_losses;
    std::vector<double> epoch_losses;
};

TrainArtifacts run_train_cot(const RunConfig& cfg, const std::string& data_dir,
                             const std::string& out_dir, const std::string& resume = "");

TrainArtifacts run_train_plat(const RunConfig& cfg, const std::string& data_dir,
                              const std::string& init_checkpoint, const std::string& out_dir,
                              const std::string& resume = "");

struct RlArtifacts {
    std::string checkpoint;
    std::string log_csv;
    std::vector<GrpoStepStats> per_step;
};
RlArtifacts run_train_rl(const RunConfig& cfg, const std::string& data_dir,
                         const std::string& init_checkpoint, const std::string& out_dir);

// Loads a checkpoint into a usable bundle; kind is derived from the phase tag.
struct LoadedModel {
    ModelBundle bundle;
    ModelKind kind = ModelKind::plat;
    std::string phase;
    RunConfig config;  // parsed from the checkpoint's embedded text
};
LoadedModel load_model(const std::string& checkpoint_path);

EvalReport run_eval(const RunConfig& cfg, const std::string& checkpoint_path,
                    const std::string& data_path, const std::string& out_dir);

struct InferArtifacts {
    std::string traces_path;
    std::vector<InferenceTrace> traces;
};
InferArtifacts run_infer(const RunConfig& cfg, const std::string& checkpoint_path,
                         const std::string& question_text, const std::string& data_path,
                         bool eager, const std::string& out_dir);

struct BranchArtifacts {
    std::string branching_csv, scatter_csv;
};
BranchArtifacts run_branch(const RunConfig& cfg, const std::string& checkpoint_path,
                           const std::string& data_path, const std::string& out_dir,
                           bool append = false);

std::string run_entropy(const RunConfig& cfg, const std::string& checkpoint_path,
                        const std::string& data_path, const std::string& out_dir,
                        bool append = false);

std::vector<std::string> run_plot(const std::string& in_dir, const std::string& out_dir);

// Finite-difference verification of every op kind plus the composed one-layer
// transformer loss and the full reconstruction loss at tiny dims. Prints one
// line per check; returns true when everything passes.
bool run_grad_check_suite(bool verbose = true);

}  // namespace plat
