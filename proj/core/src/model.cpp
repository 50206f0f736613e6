#include "plat/model.hpp"

#include <cmath>

#include "plat/errors.hpp"
#include "plat/rng.hpp"

namespace plat {

void PlannerConfig::validate() const {
    if (d_s < 1) throw ConfigError("planner: d_s must be positive");
    if (n_latent < 1) throw ConfigError("planner: n_latent must be >= 1");
    if (alpha_ema < 0.0 || alpha_ema > 1.0) throw ConfigError("planner: alpha_ema outside [0,1]");
    if (sigma_noise < 0.0) throw ConfigError("planner: sigma_noise must be >= 0");
    if (max_plan_steps < 1) throw ConfigError("planner: max_plan_steps must be >= 1");
}

Tensor project(const Tensor& x, const Tensor& w, const Tensor& b) {
    return add(matmul(x, w), b);
}

ModelBundle make_bundle(const BackboneConfig& bcfg, const PlannerConfig& pcfg, uint64_t seed,
                        bool independent_decoder) {
    bcfg.validate();
    pcfg.validate();
    ModelBundle bundle;
    bundle.bcfg = bcfg;
    bundle.pcfg = pcfg;
    Rng rng(derive_seed(seed, "model-init"));
    bundle.net = Backbone(bcfg, rng);

    const double from_m = 1.0 / std::sqrt(static_cast<double>(bcfg.d_m));
    const double from_s = 1.0 / std::sqrt(static_cast<double>(pcfg.d_s));
    auto& pr = bundle.proj;
    pr.enc_w = Tensor::randn({bcfg.d_m, pcfg.d_s}, from_m, rng, true);
    pr.enc_b = Tensor::zeros({pcfg.d_s}, true);
    pr.h2l_w = Tensor::randn({bcfg.d_m, pcfg.d_s}, from_m, rng, true);
    pr.h2l_b = Tensor::zeros({pcfg.d_s}, true);
    pr.l2h_w = Tensor::randn({pcfg.d_s, bcfg.d_m}, from_s, rng, true);
    pr.l2h_b = Tensor::zeros({bcfg.d_m}, true);
    pr.dec_w = Tensor::randn({pcfg.d_s, bcfg.d_m}, from_s, rng, true);
    pr.dec_b = Tensor::zeros({bcfg.d_m}, true);

    if (independent_decoder) split_decoder(bundle);
    return bundle;
}

void split_decoder(ModelBundle& bundle) {
    if (bundle.split()) throw ContractError("decoder already split");
    Backbone copy = bundle.net.clone();
    // The decoder never runs the extension blocks; drop their copies.
    for (auto it = copy.params().begin(); it != copy.params().end();) {
        if (it->first.rfind("pblk", 0) == 0)
            it = copy.params().erase(it);
        else
            ++it;
    }
    bundle.decoder_net = std::move(copy);
}

ModelBundle clone_bundle(const ModelBundle& bundle) {
    ModelBundle out;
    out.bcfg = bundle.bcfg;
    out.pcfg = bundle.pcfg;
    out.net = bundle.net.clone();
    if (bundle.decoder_net) out.decoder_net = bundle.decoder_net->clone();
    auto copy = [](const Tensor& t) { return Tensor::from_values(t.shape(), t.values(), true); };
    out.proj.enc_w = copy(bundle.proj.enc_w);
    out.proj.enc_b = copy(bundle.proj.enc_b);
    out.proj.h2l_w = copy(bundle.proj.h2l_w);
    out.proj.h2l_b = copy(bundle.proj.h2l_b);
    out.proj.l2h_w = copy(bundle.proj.l2h_w);
    out.proj.l2h_b = copy(bundle.proj.l2h_b);
    out.proj.dec_w = copy(bundle.proj.dec_w);
    out.proj.dec_b = copy(bundle.proj.dec_b);
    return out;
}

std::map<std::string, Tensor> named_parameters(const ModelBundle& bundle) {
    std::map<std::string, Tensor> out;
    for (const auto& [name, t] : bundle.net.params()) out["net." + name] = t;
    if (bundle.decoder_net)
        for (const auto& [name, t] : bundle.decoder_net->params()) out["dec." + name] = t;
    out["proj.enc_w"] = bundle.proj.enc_w;
    out["proj.enc_b"] = bundle.proj.enc_b;
    out["proj.h2l_w"] = bundle.proj.h2l_w;
    out["proj.h2l_b"] = bundle.proj.h2l_b;
    out["proj.l2h_w"] = bundle.proj.l2h_w;
    out["proj.l2h_b"] = bundle.proj.l2h_b;
    out["proj.dec_w"] = bundle.proj.dec_w;
    out["proj.dec_b"] = bundle.proj.dec_b;
    return out;
}

ParamPartition rl_partition(const ModelBundle& bundle) {
    if (!bundle.split()) throw ContractError("rl_partition requires a split decoder");
    ParamPartition part;
    for (const auto& [name, t] : named_parameters(bundle)) {
        (void)t;
        const bool trainable = name.rfind("dec.", 0) == 0 || name.rfind("proj.dec", 0) == 0;
        (trainable ? part.trainable : part.frozen).push_back(name);
    }
    return part;
}

std::map<std::string, std::vector<double>> snapshot_params(
    const ModelBundle& bundle, const std::vector<std::string>& names) {
    auto all = named_parameters(bundle);
    std::map<std::string, std::vector<double>> out;
    for (const auto& n : names) out[n] = all.at(n).values();
    return out;
}

bool verify_frozen(const ModelBundle& bundle,
                   const std::map<std::string, std::vector<double>>& before) {
    auto all = named_parameters(bundle);
    for (const auto& [name, vals] : before) {
        const auto& now = all.at(name).values();
        if (now.size() != vals.size()) return false;
        for (size_t i = 0; i < vals.size(); ++i)
            if (now[i] != vals[i]) return false;
    }
    return true;
}

}  // namespace plat
