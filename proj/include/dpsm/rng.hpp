#pragma once

#include <cstdint>
#include <string_view>

namespace dpsm {

/// Deterministic counter-based random stream.
///
/// The generator state is a keyed hash of (master seed, purpose tag, agent
/// index, iteration index), so any component of a run can derive its own
/// stream locally and reproducibly: identical derivation paths always yield
/// identical sequences, and distinct paths yield statistically independent
/// ones.  No global RNG state exists anywhere in the library; this is what
/// makes runs byte-identical regardless of thread count.
class RngStream {
 public:
  RngStream(std::uint64_t master, std::string_view purpose,
            std::uint64_t agent, std::uint64_t iteration);

  /// Next raw 64-bit value.
  std::uint64_t next_u64();

  /// Uniform integer in [0, n), n >= 1.  Rejection-sampled: no modulo bias.
  std::uint64_t next_below(std::uint64_t n);

  /// Uniform double in [0, 1).
  double next_double();

  /// Standard normal deviate (Box-Muller; the pair partner is cached).
  double next_normal();

  /// The derived initial state (exposed for collision diagnostics).
  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

}  // namespace dpsm
