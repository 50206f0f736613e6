#include "plat/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "plat/errors.hpp"
#include "plat/rng.hpp"

namespace plat {

namespace {

constexpr char kMagic[8] = {'P', 'L', 'A', 'T', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

struct Writer {
    std::string buf;

    void raw(const void* p, size_t n) { buf.append(static_cast<const char*>(p), n); }
    void u32(uint32_t v) { raw(&v, sizeof(v)); }
    void u64(uint64_t v) { raw(&v, sizeof(v)); }
    void i64(int64_t v) { raw(&v, sizeof(v)); }
    void f64s(const std::vector<double>& v) { raw(v.data(), v.size() * sizeof(double)); }
    void str(const std::string& s) {
        u64(s.size());
        raw(s.data(), s.size());
    }
};

struct Reader {
    const std::string& buf;
    size_t pos = 0;

    void raw(void* p, size_t n) {
        if (pos + n > buf.size()) throw IoError("checkpoint truncated");
        std::memcpy(p, buf.data() + pos, n);
        pos += n;
    }
    uint32_t u32() {
        uint32_t v;
        raw(&v, sizeof(v));
        return v;
    }
    uint64_t u64() {
        uint64_t v;
        raw(&v, sizeof(v));
        return v;
    }
    int64_t i64() {
        int64_t v;
        raw(&v, sizeof(v));
        return v;
    }
    std::vector<double> f64s(size_t n) {
        std::vector<double> v(n);
        raw(v.data(), n * sizeof(double));
        return v;
    }
    std::string str() {
        const auto n = u64();
        if (pos + n > buf.size()) throw IoError("checkpoint truncated");
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

uint64_t fnv1a64(const std::string& data) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    Writer w;
    w.raw(kMagic, sizeof(kMagic));
    w.u32(kVersion);
    w.str(ckpt.phase);
    w.str(ckpt.config_text);

    w.u64(ckpt.params.size());
    for (const auto& [name, t] : ckpt.params) {
        w.str(name);
        w.u32(static_cast<uint32_t>(t.shape().size()));
        for (int d : t.shape()) w.i64(d);
        w.f64s(t.values());
    }

    w.u64(ckpt.opt_state.size());
    for (const auto& [name, mom] : ckpt.opt_state) {
        w.str(name);
        w.u64(mom.m.size());
        w.f64s(mom.m);
        w.f64s(mom.v);
    }
    w.i64(ckpt.opt_step);

    w.u64(ckpt.partition.frozen.size());
    for (const auto& n : ckpt.partition.frozen) w.str(n);
    w.u64(ckpt.partition.trainable.size());
    for (const auto& n : ckpt.partition.trainable) w.str(n);

    w.u64(ckpt.rng_state.size());
    for (uint64_t v : ckpt.rng_state) w.u64(v);

    w.u64(ckpt.counters.size());
    for (const auto& [name, v] : ckpt.counters) {
        w.str(name);
        w.i64(v);
    }

    const uint64_t checksum = fnv1a64(w.buf);
    w.u64(checksum);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open checkpoint '" + path + "' for writing");
    f.write(w.buf.data(), static_cast<std::streamsize>(w.buf.size()));
    if (!f) throw IoError("short write on checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint '" + path + "'");
    std::ostringstream os;
    os << f.rdbuf();
    const std::string buf = os.str();
    if (buf.size() < sizeof(kMagic) + sizeof(uint32_t) + sizeof(uint64_t))
        throw IoError("checkpoint '" + path + "' truncated");

    const std::string payload = buf.substr(0, buf.size() - sizeof(uint64_t));
    uint64_t stored;
    std::memcpy(&stored, buf.data() + buf.size() - sizeof(uint64_t), sizeof(stored));
    if (fnv1a64(payload) != stored)
        throw IoError("checkpoint '" + path + "' failed its checksum (corrupt or truncated)");

    Reader r{payload};
    char magic[8];
    r.raw(magic, sizeof(magic));
    if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw IoError("'" + path + "' is not a checkpoint file");
    const uint32_t version = r.u32();
    if (version != kVersion)
        throw IoError("checkpoint '" + path + "' has format version " + std::to_string(version) +
                      ", expected " + std::to_string(kVersion));

    Checkpoint ckpt;
    ckpt.phase = r.str();
    ckpt.config_text = r.str();

    const auto n_params = r.u64();
    for (uint64_t i = 0; i < n_params; ++i) {
        const std::string name = r.str();
        const uint32_t rank = r.u32();
        std::vector<int> shape;
        size_t numel = 1;
        for (uint32_t d = 0; d < rank; ++d) {
            shape.push_back(static_cast<int>(r.i64()));
            numel *= static_cast<size_t>(shape.back());
        }
        ckpt.params[name] = Tensor::from_values(shape, r.f64s(numel));
    }

    const auto n_opt = r.u64();
    for (uint64_t i = 0; i < n_opt; ++i) {
        const std::string name = r.str();
        const auto n = r.u64();
        Adam::Moments mom;
        mom.m = r.f64s(n);
        mom.v = r.f64s(n);
        ckpt.opt_state[name] = std::move(mom);
    }
    ckpt.opt_step = r.i64();

    const auto n_frozen = r.u64();
    for (uint64_t i = 0; i < n_frozen; ++i) ckpt.partition.frozen.push_back(r.str());
    const auto n_train = r.u64();
    for (uint64_t i = 0; i < n_train; ++i) ckpt.partition.trainable.push_back(r.str());

    const auto n_rng = r.u64();
    for (uint64_t i = 0; i < n_rng; ++i) ckpt.rng_state.push_back(r.u64());

    const auto n_counters = r.u64();
    for (uint64_t i = 0; i < n_counters; ++i) {
        const std::string name = r.str();
        ckpt.counters[name] = r.i64();
    }
    return ckpt;
}

Checkpoint snapshot_bundle(const ModelBundle& bundle, const std::string& phase,
                           const std::string& config_text) {
    Checkpoint ckpt;
    ckpt.phase = phase;
    ckpt.config_text = config_text;
    for (const auto& [name, t] : named_parameters(bundle))
        ckpt.params[name] = Tensor::from_values(t.shape(), t.values());
    return ckpt;
}

ModelBundle bundle_from_params(const BackboneConfig& bcfg, const PlannerConfig& pcfg,
                               const std::map<std::string, Tensor>& params) {
    ModelBundle bundle = make_bundle(bcfg, pcfg, /*seed=*/0);
    bool has_dec = false;
    for (const auto& [name, t] : params) has_dec = has_dec || name.rfind("dec.", 0) == 0;
    if (has_dec) split_decoder(bundle);
    load_params_into_bundle(bundle, params);
    return bundle;
}

void load_params_into_bundle(ModelBundle& bundle, const std::map<std::string, Tensor>& params) {
    auto live = named_parameters(bundle);
    if (live.size() != params.size())
        throw IoError("checkpoint parameter table does not match the model (" +
                      std::to_string(params.size()) + " vs " + std::to_string(live.size()) + ")");
    for (auto& [name, t] : live) {
        auto it = params.find(name);
        if (it == params.end()) throw IoError("checkpoint is missing parameter '" + name + "'");
        if (it->second.shape() != t.shape())
            throw IoError("checkpoint shape mismatch for '" + name + "'");
        t.values() = it->second.values();
    }
}

}  // namespace plat
