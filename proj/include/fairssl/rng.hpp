#pragma once

#include <cstdint>
#include <random>

namespace fairssl {

enum class RngPurpose : std::uint64_t {
  kInit = 1,
  kSplit = 2,
  kShuffle = 3,
  kWeakView = 4,
  kStrongView = 5,
  kSignals = 6,
  kAlignment = 7,
};

/// Independent stream per (run seed, epoch, purpose).
inline std::mt19937_64 make_rng(std::uint64_t run_seed, std::uint64_t epoch, RngPurpose purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(run_seed), static_cast<std::uint32_t>(run_seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(purpose)};
  return std::mt19937_64(seq);
}

}  // namespace fairssl
