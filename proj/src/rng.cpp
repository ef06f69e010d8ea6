#include "fetalseg/rng.hpp"

#include <cmath>
#include <numbers>

namespace fseg {

// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

RandomStream::RandomStream(std::uint64_t seed) noexcept : key_(mix64(seed ^ 0x5eedf00dULL)), counter_(0) {}

RandomStream RandomStream::derive(std::uint64_t tag) const noexcept {
  return RandomStream(mix64(key_ ^ mix64(tag + 0x632be59bd9b4e019ULL)), 0);
}

RandomStream RandomStream::derive(std::initializer_list<std::uint64_t> tags) const noexcept {
  RandomStream s = *this;
  for (auto t : tags) s = s.derive(t);
  return s;
}

RandomStream RandomStream::derive(std::string_view name) const noexcept {
  // FNV-1a over the name, then mixed like an integer tag.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return derive(h);
}

std::uint64_t RandomStream::next_u64() noexcept {
  return mix64(key_ + (counter_++) * 0xd1b54a32d192ed03ULL);
}

double RandomStream::uniform() noexcept {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RandomStream::uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

std::uint64_t RandomStream::below(std::uint64_t n) noexcept {
  // Lemire's multiply-shift; the bias for the small n used here is negligible.
  return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
}

bool RandomStream::bernoulli(double p) noexcept { return uniform() < p; }

double RandomStream::normal() noexcept {
  double u1 = uniform();
  const double u2 = uniform();
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double RandomStream::normal(double mean, double stddev) noexcept { return mean + stddev * normal(); }

}  // namespace fseg
