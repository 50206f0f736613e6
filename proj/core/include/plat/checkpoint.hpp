#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "plat/model.hpp"
#include "plat/training.hpp"

namespace plat {

// Versioned binary checkpoint: magic, format version, phase tag, resolved
// config text, named parameter table (shapes + raw 64-bit payloads), optimizer
// moments, frozen/trainable partition, rng state, scalar counters, and a
// trailing checksum. Save/load round-trips bitwise.
struct Checkpoint {
    std::string phase;  // "cot-sft", "plat-sft", "rl"
    std::string config_text;
    std::map<std::string, Tensor> params;
    std::map<std::string, Adam::Moments> opt_state;
    int64_t opt_step = 0;
    ParamPartition partition;
    std::vector<uint64_t> rng_state;
    std::map<std::string, int64_t> counters;  // e.g. epochs_done
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Copies current bundle parameter values into a checkpoint (values only).
Checkpoint snapshot_bundle(const ModelBundle& bundle, const std::string& phase,
                           const std::string& config_text);

// Rebuilds a bundle from checkpointed parameters; configs come from the
// caller (parsed from the checkpoint's config text). Splits the decoder when
// "dec.*" parameters are present.
ModelBundle bundle_from_params(const BackboneConfig& bcfg, const PlannerConfig& pcfg,
                               const std::map<std::string, Tensor>& params);

// Overwrites bundle parameter values in place (shapes must match).
void load_params_into_bundle(ModelBundle& bundle, const std::map<std::string, Tensor>& params);

}  // namespace plat
