#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <string_view>

namespace provsyn {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; used to derive independent per-task seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) noexcept {
  return mix_seed(mix_seed(seed ^ mix_seed(a)) ^ mix_seed(b + 0x632be59bd9b4e019ULL));
}

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

template <class Int>
Int uniform_index(Rng& rng, Int n) {
  return std::uniform_int_distribution<Int>(0, n - 1)(rng);
}

std::string md5_hex(std::string_view data);
std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view contents);

/// Runs fn(i) for i in [0, n) on up to `workers` threads. Callers write into
/// per-index slots so results do not depend on scheduling.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace provsyn
