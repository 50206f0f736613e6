#include "plat/rng.hpp"

#include <cmath>

#include "plat/errors.hpp"

namespace plat {

uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

namespace {
inline uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
}  // namespace

Rng::Rng(uint64_t seed) {
    uint64_t sm = seed;
    for (auto& w : s_) w = splitmix64(sm);
}

uint64_t Rng::next_u64() {
    const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

uint64_t Rng::below(uint64_t n) {
    if (n == 0) throw ContractError("Rng::below requires n > 0");
    const uint64_t limit = ~uint64_t{0} - (~uint64_t{0} % n);
    uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
}

double Rng::gaussian(double mean, double stddev) {
    if (has_spare_) {
        has_spare_ = false;
        return mean + spare_ * stddev;
    }
    // Box-Muller; 1-u keeps log away from 0.
    const double u = 1.0 - uniform();
    const double v = uniform();
    const double r = std::sqrt(-2.0 * std::log(u));
    const double theta = 2.0 * 3.14159265358979323846 * v;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return mean + r * std::cos(theta) * stddev;
}

std::vector<uint64_t> Rng::state_words() const {
    std::vector<uint64_t> w(s_, s_ + 4);
    w.push_back(has_spare_ ? 1 : 0);
    uint64_t bits;
    static_assert(sizeof(bits) == sizeof(spare_));
    __builtin_memcpy(&bits, &spare_, sizeof(bits));
    w.push_back(bits);
    return w;
}

void Rng::restore(const std::vector<uint64_t>& words) {
    if (words.size() != 6) throw ContractError("Rng::restore expects 6 state words");
    for (int i = 0; i < 4; ++i) s_[i] = words[static_cast<size_t>(i)];
    has_spare_ = words[4] != 0;
    __builtin_memcpy(&spare_, &words[5], sizeof(spare_));
}

uint64_t derive_seed(uint64_t global_seed, std::string_view purpose, uint64_t index) {
    // FNV-1a over the label, mixed with the seed and index through splitmix64.
    uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : purpose) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    uint64_t state = global_seed;
    uint64_t a = splitmix64(state);
    state ^= h;
    uint64_t b = splitmix64(state);
    state ^= index + 0x9e3779b97f4a7c15ULL;
    uint64_t c = splitmix64(state);
    return a ^ rotl(b, 21) ^ rotl(c, 43);
}

}  // namespace plat
