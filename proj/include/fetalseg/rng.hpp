#pragma once

#include <cstdint>
#include <initializer_list>
#include <string_view>

namespace fseg {

/// Keyed random stream.
///
/// Every stream is a pure function of its key: the root seed plus a list of
/// integer tags (case index, epoch, batch, slice, ...). Streams built from the
/// same key produce the same sequence regardless of which thread creates them
/// or in which order, which is what makes parallel generation and training
/// reproducible.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) noexcept;

  /// Derives an independent child stream. The parent is not advanced.
  [[nodiscard]] RandomStream derive(std::uint64_t tag) const noexcept;
  [[nodiscard]] RandomStream derive(std::initializer_list<std::uint64_t> tags) const noexcept;
  [[nodiscard]] RandomStream derive(std::string_view name) const noexcept;

  std::uint64_t next_u64() noexcept;

  /// Uniform in [0, 1).
  double uniform() noexcept;
  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) noexcept;
  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n) noexcept;
  bool bernoulli(double p) noexcept;
  /// Standard normal via Box-Muller; no cached spare, so each call consumes two draws.
  double normal() noexcept;
  double normal(double mean, double stddev) noexcept;

  [[nodiscard]] std::uint64_t key() const noexcept { return key_; }

 private:
  RandomStream(std::uint64_t key, std::uint64_t counter) noexcept : key_(key), counter_(counter) {}

  std::uint64_t key_;
  std::uint64_t counter_;
};

std::uint64_t mix64(std::uint64_t x) noexcept;

}  // namespace fseg
