#include "plat/config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <variant>

#include "plat/errors.hpp"

namespace plat {

namespace {

using FieldRef = std::variant<int*, double*, long long*, uint64_t*, bool*, std::string*,
                              std::vector<int>*>;

struct Schema {
    // Ordered (section, key) -> field binding.
    std::vector<std::pair<std::string, FieldRef>> entries;

    void add(const std::string& path, FieldRef ref) { entries.emplace_back(path, ref); }

    FieldRef* find(const std::string& path) {
        for (auto& [p, ref] : entries)
            if (p == path) return &ref;
        return nullptr;
    }
};

Schema bind(RunConfig& c) {
    Schema s;
    s.add("run.seed", &c.seed);
    s.add("run.out_dir", &c.out_dir);
    s.add("backbone.d_m", &c.d_m);
    s.add("backbone.n_layers", &c.n_layers);
    s.add("backbone.n_planner_layers", &c.n_planner_layers);
    s.add("backbone.n_heads", &c.n_heads);
    s.add("backbone.max_seq_len", &c.max_seq_len);
    s.add("backbone.init_std", &c.init_std);
    s.add("planner.d_s", &c.d_s);
    s.add("planner.n_latent", &c.n_latent);
    s.add("planner.alpha_ema", &c.alpha_ema);
    s.add("planner.sigma_noise", &c.sigma_noise);
    s.add("planner.max_plan_steps", &c.max_plan_steps);
    s.add("planner.aggregation", &c.aggregation);
    s.add("planner.context_ablation", &c.context_ablation);
    s.add("planner.independent_decoder", &c.independent_decoder);
    s.add("data.n", &c.data_n);
    s.add("data.step_min", &c.step_min);
    s.add("data.step_max", &c.step_max);
    s.add("data.operand_min", &c.operand_min);
    s.add("data.operand_max", &c.operand_max);
    s.add("data.value_cap", &c.value_cap);
    s.add("data.frac_train", &c.frac_train);
    s.add("data.frac_val", &c.frac_val);
    s.add("data.frac_test", &c.frac_test);
    s.add("sft_cot.epochs", &c.cot_epochs);
    s.add("sft_cot.lr", &c.cot_lr);
    s.add("sft_cot.batch_size", &c.cot_batch_size);
    s.add("sft_cot.clip_norm", &c.cot_clip_norm);
    s.add("sft_cot.lr_schedule", &c.cot_lr_schedule);
    s.add("sft_plat.epochs", &c.plat_epochs);
    s.add("sft_plat.lr", &c.plat_lr);
    s.add("sft_plat.batch_size", &c.plat_batch_size);
    s.add("sft_plat.clip_norm", &c.plat_clip_norm);
    s.add("sft_plat.lr_schedule", &c.plat_lr_schedule);
    s.add("rl.group_size", &c.rl_group_size);
    s.add("rl.lr", &c.rl_lr);
    s.add("rl.kl_beta", &c.rl_kl_beta);
    s.add("rl.clip_eps", &c.rl_clip_eps);
    s.add("rl.temperature", &c.rl_temperature);
    s.add("rl.batch_size", &c.rl_batch_size);
    s.add("rl.steps", &c.rl_steps);
    s.add("rl.clip_norm", &c.rl_clip_norm);
    s.add("eval.n_samples", &c.eval_n_samples);
    s.add("eval.ks", &c.eval_ks);
    s.add("eval.tau", &c.eval_tau);
    s.add("eval.bins", &c.eval_bins);
    s.add("eval.branch_samples", &c.branch_samples);
    s.add("eval.max_tokens", &c.eval_max_tokens);
    return s;
}

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

void assign(FieldRef& ref, const std::string& path, const std::string& raw,
            const std::string& where) {
    const std::string value = trim(raw);
    auto fail = [&](const char* type) {
        throw ConfigError(where + ": key '" + path + "' expects " + type + ", got '" + value +
                          "'");
    };
    std::visit(
        [&](auto* p) {
            using T = std::remove_pointer_t<decltype(p)>;
            if constexpr (std::is_same_v<T, std::string>) {
                *p = value;
            } else if constexpr (std::is_same_v<T, bool>) {
                if (value == "true" || value == "1")
                    *p = true;
                else if (value == "false" || value == "0")
                    *p = false;
                else
                    fail("a boolean");
            } else if constexpr (std::is_same_v<T, std::vector<int>>) {
                std::vector<int> out;
                std::stringstream ss(value);
                std::string item;
                while (std::getline(ss, item, ',')) {
                    item = trim(item);
                    if (item.empty()) continue;
                    try {
                        size_t pos = 0;
                        out.push_back(std::stoi(item, &pos));
                        if (pos != item.size()) fail("a comma-separated int list");
                    } catch (const std::exception&) {
                        fail("a comma-separated int list");
                    }
                }
                if (out.empty()) fail("a comma-separated int list");
                *p = out;
            } else {
                try {
                    size_t pos = 0;
                    if constexpr (std::is_same_v<T, int>) {
                        *p = std::stoi(value, &pos);
                    } else if constexpr (std::is_same_v<T, long long>) {
                        *p = std::stoll(value, &pos);
                    } else if constexpr (std::is_same_v<T, uint64_t>) {
                        *p = std::stoull(value, &pos);
                    } else {
                        *p = std::stod(value, &pos);
                    }
                    if (pos != value.size()) fail("a number");
                } catch (const std::exception&) {
                    fail("a number");
                }
            }
        },
        ref);
}

std::string render(const FieldRef& ref) {
    return std::visit(
        [&](auto* p) -> std::string {
            using T = std::remove_pointer_t<decltype(p)>;
            if constexpr (std::is_same_v<T, std::string>) {
                return *p;
            } else if constexpr (std::is_same_v<T, bool>) {
                return *p ? "true" : "false";
            } else if constexpr (std::is_same_v<T, std::vector<int>>) {
                std::string out;
                for (size_t i = 0; i < p->size(); ++i)
                    out += (i ? "," : "") + std::to_string((*p)[i]);
                return out;
            } else if constexpr (std::is_same_v<T, double>) {
                std::ostringstream os;
                os.precision(17);
                os << *p;
                return os.str();
            } else {
                return std::to_string(*p);
            }
        },
        ref);
}

}  // namespace

void RunConfig::apply_text(const std::string& text, const std::string& origin) {
    Schema schema = bind(*this);
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string where = origin + ":" + std::to_string(lineno);
        const auto hash = line.find_first_of("#;");
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(where + ": malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        if (section.empty()) throw ConfigError(where + ": key '" + key + "' outside any section");
        const std::string path = section + "." + key;
        FieldRef* ref = schema.find(path);
        if (!ref) throw ConfigError(where + ": unknown key '" + path + "'");
        assign(*ref, path, line.substr(eq + 1), where);
    }
}

void RunConfig::apply_override(const std::string& key_eq_value) {
    const auto eq = key_eq_value.find('=');
    if (eq == std::string::npos)
        throw ConfigError("override '" + key_eq_value + "' must be section.key=value");
    const std::string path = trim(key_eq_value.substr(0, eq));
    Schema schema = bind(*this);
    FieldRef* ref = schema.find(path);
    if (!ref) throw ConfigError("override: unknown key '" + path + "'");
    assign(*ref, path, key_eq_value.substr(eq + 1), "override");
}

std::string RunConfig::to_text() const {
    Schema schema = bind(*const_cast<RunConfig*>(this));
    std::ostringstream os;
    std::string section;
    for (const auto& [path, ref] : schema.entries) {
        const auto dot = path.find('.');
        const std::string sec = path.substr(0, dot);
        if (sec != section) {
            if (!section.empty()) os << "\n";
            os << "[" << sec << "]\n";
            section = sec;
        }
        os << path.substr(dot + 1) << " = " << render(ref) << "\n";
    }
    return os.str();
}

BackboneConfig RunConfig::backbone(int vocab_size) const {
    BackboneConfig b;
    b.d_m = d_m;
    b.n_layers = n_layers;
    b.n_planner_layers = n_planner_layers;
    b.n_heads = n_heads;
    b.max_seq_len = max_seq_len;
    b.vocab_size = vocab_size;
    b.init_std = init_std;
    return b;
}

PlannerConfig RunConfig::planner() const {
    PlannerConfig p;
    p.d_s = d_s;
    p.n_latent = n_latent;
    p.alpha_ema = alpha_ema;
    p.sigma_noise = sigma_noise;
    p.max_plan_steps = max_plan_steps;
    if (aggregation == "ema")
        p.aggregation = Aggregation::ema;
    else if (aggregation == "none")
        p.aggregation = Aggregation::none;
    else if (aggregation == "residual")
        p.aggregation = Aggregation::residual;
    else
        throw ConfigError("planner.aggregation must be ema, none or residual");
    p.context_ablation = context_ablation;
    return p;
}

GeneratorConfig RunConfig::generator() const {
    GeneratorConfig g;
    g.seed = derive_seed(seed, "corpus");
    g.n = data_n;
    g.step_min = step_min;
    g.step_max = step_max;
    g.operand_min = operand_min;
    g.operand_max = operand_max;
    g.value_cap = value_cap;
    return g;
}

SplitFractions RunConfig::fractions() const { return {frac_train, frac_val, frac_test}; }

SftConfig RunConfig::sft(SftPhase phase) const {
    SftConfig s;
    s.phase = phase;
    auto schedule = [](const std::string& name) {
        if (name == "cosine") return LrSchedule::cosine;
        if (name == "constant") return LrSchedule::constant;
        throw ConfigError("lr_schedule must be cosine or constant");
    };
    if (phase == SftPhase::cot) {
        s.epochs = cot_epochs;
        s.lr = cot_lr;
        s.batch_size = cot_batch_size;
        s.clip_norm = cot_clip_norm;
        s.lr_schedule = schedule(cot_lr_schedule);
        s.sigma_noise = 0.0;
    } else {
        s.epochs = plat_epochs;
        s.lr = plat_lr;
        s.batch_size = plat_batch_size;
        s.clip_norm = plat_clip_norm;
        s.lr_schedule = schedule(plat_lr_schedule);
        s.sigma_noise = sigma_noise;
    }
    s.seed = seed;
    return s;
}

RlConfig RunConfig::rl() const {
    RlConfig r;
    r.group_size = rl_group_size;
    r.lr = rl_lr;
    r.kl_beta = rl_kl_beta;
    r.clip_eps = rl_clip_eps;
    r.temperature = rl_temperature;
    r.batch_size = rl_batch_size;
    r.steps = rl_steps;
    r.seed = derive_seed(seed, "rl");
    r.clip_norm = rl_clip_norm;
    r.max_tokens = eval_max_tokens;
    return r;
}

EvalOptions RunConfig::eval(ModelKind kind) const {
    EvalOptions e;
    e.kind = kind;
    e.max_steps = max_plan_steps;
    e.max_tokens = eval_max_tokens;
    e.tau = eval_tau;
    e.n_samples = eval_n_samples;
    e.ks = eval_ks;
    e.seed = derive_seed(seed, "eval");
    return e;
}

RunConfig parse_config_text(const std::string& text) {
    RunConfig cfg;
    cfg.apply_text(text, "<text>");
    return cfg;
}

RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
    RunConfig cfg;
    if (!path.empty()) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open config '" + path + "'");
        std::ostringstream os;
        os << in.rdbuf();
        cfg.apply_text(os.str(), path);
    }
    for (const auto& kv : overrides) cfg.apply_override(kv);
    return cfg;
}

}  // namespace plat
