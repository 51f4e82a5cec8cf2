#include "attnlab/rng.hpp"

#include <cmath>
#include <numbers>

namespace attnlab {

namespace {

constexpr std::uint64_t GAMMA = 0x9e3779b97f4a7c15ULL;

// splitmix64 output finalizer: bijective, passes BigCrush as a counter mix.
std::uint64_t mix64(std::uint64_t z) {
  z += GAMMA;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : key_(mix64(mix64(seed ^ 0x8e2e1d9f3c5a7b41ULL) ^ mix64(stream_id))) {}

RngStream RngStream::substream(std::uint64_t tag) const {
  return RngStream(mix64(key_ ^ mix64(tag ^ 0x5bd1e995a4c8f329ULL)));
}

std::uint64_t RngStream::next_u64() { return mix64(key_ + (ctr_++) * GAMMA); }

double RngStream::next_uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::next_gaussian() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // Box-Muller; u1 shifted into (0, 1] so the log is finite.
  const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  const double u2 = next_uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double t = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(t);
  has_spare_ = true;
  return r * std::cos(t);
}

Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double sigma, RngStream& rng) {
  Matrix m(rows, cols);
  for (double& v : m.flat()) v = sigma * rng.next_gaussian();
  return m;
}

Vec gaussian_vec(std::size_t n, double sigma, RngStream& rng) {
  Vec v(n);
  for (double& x : v) x = sigma * rng.next_gaussian();
  return v;
}

}  // namespace attnlab
