#pragma once

#include <cstdint>

namespace mvqmc {

// splitmix64 finalizer
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

enum class Stream : std::uint64_t {
    shift = 1,
    iid_initial = 2,
    iid_noise = 3,
    iid_aux = 4,
    bridge_test = 5,
};

// Stateless generator: value at (key, counter) is independent of evaluation
// order, so shifts and i.i.d. draws are reproducible under any threading.
class CounterRng {
public:
    CounterRng(std::uint64_t seed, Stream purpose, std::uint64_t level, std::uint64_t sample) noexcept {
        std::uint64_t k = mix64(seed + kGolden);
        k = mix64(k ^ (static_cast<std::uint64_t>(purpose) * 0xd6e8feb86659fd93ULL));
        k = mix64(k ^ (level * 0xa0761d6478bd642fULL + 0x5851f42d4c957f2dULL));
        key_ = mix64(k ^ (sample * 0xe7037ed1a0b428dbULL + 0x14057b7ef767814fULL));
    }

    std::uint64_t bits(std::uint64_t counter) const noexcept { return mix64(key_ + (counter + 1) * kGolden); }

    // in [0, 1 - 2^-53]
    double uniform(std::uint64_t counter) const noexcept {
        return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
    }

    std::uint64_t key() const noexcept { return key_; }

private:
    static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
    std::uint64_t key_ = 0;
};

} // namespace mvqmc
