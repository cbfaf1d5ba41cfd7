#pragma once

#include <cstdint>

namespace copularisk {

/// Seed mixer; also used to derive independent per-path / per-start seeds.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    std::uint64_t state_;
};

/// Maps 64 random bits to the open interval (0,1).
inline double to_open_unit(std::uint64_t bits) {
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream) {
    return SplitMix64(root ^ SplitMix64(stream + 0x632be59bd9b4e019ULL).next()).next();
}

}  // namespace copularisk
