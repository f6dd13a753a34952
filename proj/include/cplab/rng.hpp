#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

namespace cplab {

// xoshiro256** seeded via splitmix64. We use our own generator instead of
// <random> distributions because the standard does not pin their bit-level
// behavior across implementations, and run reproducibility is a contract.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) { reseed(seed); }

    void reseed(std::uint64_t seed) {
        std::uint64_t x = seed;
        for (auto& si : s_) {
            x += 0x9e3779b97f4a7c15ull;
            std::uint64_t z = x;
            z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
            z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
            si = z ^ (z >> 31);
        }
        have_gauss_ = false;
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n).
    std::uint64_t uniform_int(std::uint64_t n) {
        // Modulo bias is < 2^-32 for the n used here (vocab/block counts).
        return next_u64() % n;
    }

    // Standard normal via Box-Muller.
    double gaussian() {
        if (have_gauss_) {
            have_gauss_ = false;
            return gauss_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        gauss_ = r * std::sin(a);
        have_gauss_ = true;
        return r * std::cos(a);
    }

    // Sample an index from unnormalized non-negative weights.
    template <typename Vec>
    std::size_t categorical(const Vec& w) {
        double total = 0.0;
        for (std::size_t i = 0; i < static_cast<std::size_t>(w.size()); ++i) total += static_cast<double>(w[i]);
        double u = uniform() * total;
        for (std::size_t i = 0; i < static_cast<std::size_t>(w.size()); ++i) {
            u -= static_cast<double>(w[i]);
            if (u < 0.0) return i;
        }
        return static_cast<std::size_t>(w.size()) - 1;
    }

    // Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Serializable state for checkpoint/resume.
    std::array<std::uint64_t, 4> state() const { return {s_[0], s_[1], s_[2], s_[3]}; }
    void set_state(const std::array<std::uint64_t, 4>& st) {
        for (int i = 0; i < 4; ++i) s_[i] = st[static_cast<std::size_t>(i)];
        have_gauss_ = false;
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t s_[4]{};
    bool have_gauss_ = false;
    double gauss_ = 0.0;
};

}  // namespace cplab
