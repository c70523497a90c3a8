#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace volterra {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11). A draw is a
/// pure function of (key, counter), so any stream can be regenerated without
/// replaying earlier ones.
class Philox4x32 {
public:
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static Counter apply(Counter ctr, Key key) {
        for (int round = 0; round < 10; ++round) {
            if (round > 0) {
                key[0] += kWeyl0;
                key[1] += kWeyl1;
            }
            const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * ctr[0];
            const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * ctr[2];
            const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
            const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
            ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        }
        return ctr;
    }

private:
    static constexpr std::uint32_t kMul0 = 0xD2511F53u;
    static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
};

/// Standard normal stream identified by (seed, path index, time index).
/// Successive calls walk a block counter; the n-th draw depends on nothing
/// but the identifiers and n.
class NormalStream {
public:
    NormalStream(std::uint64_t seed, std::uint64_t path, std::uint64_t time)
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          path_(path),
          time_(static_cast<std::uint32_t>(time)) {}

    double operator()() {
        if (cached_) {
            cached_ = false;
            return spare_;
        }
        const auto r = Philox4x32::apply({time_, block_++, static_cast<std::uint32_t>(path_),
                                          static_cast<std::uint32_t>(path_ >> 32)},
                                         key_);
        // 53-bit uniforms on the open interval (0,1)
        const double u1 = to_unit(r[0], r[1]);
        const double u2 = to_unit(r[2], r[3]);
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        spare_ = radius * std::sin(angle);
        cached_ = true;
        return radius * std::cos(angle);
    }

private:
    static double to_unit(std::uint32_t hi, std::uint32_t lo) {
        const std::uint64_t bits = (static_cast<std::uint64_t>(hi) << 21) ^ (lo >> 11);
        return (static_cast<double>(bits & ((1ull << 53) - 1)) + 0.5) * 0x1.0p-53;
    }

    Philox4x32::Key key_;
    std::uint64_t path_;
    std::uint32_t time_;
    std::uint32_t block_ = 0;
    bool cached_ = false;
    double spare_ = 0.0;
};

/// Derive an independent 64-bit seed from a parent seed and a tag.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
    const auto r = Philox4x32::apply({static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(tag >> 32),
                                      0x5eed5eedu, 0xc0ffee00u},
                                     {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)});
    return (static_cast<std::uint64_t>(r[0]) << 32) | r[1];
}

}  // namespace volterra
