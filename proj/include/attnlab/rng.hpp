#pragma once

#include <cstdint>

#include "attnlab/matrix.hpp"

namespace attnlab {

// Counter-based pseudorandom stream built on the splitmix64 finalizer.
//
// A stream is identified by a 64-bit key derived from (seed, stream_id); the
// i-th raw output is finalize(key + i * GAMMA). Consequences the rest of the
// library relies on:
//   - value semantics: copying a stream forks it, both copies replay
//     identically from the copy point;
//   - draws on one stream never perturb any other stream, so experiment
//     components (data, init, evaluation) can be given independent streams and
//     stay reproducible no matter how many draws each consumes;
//   - substream(tag) derives a child key from the parent key and tag only, not
//     from the counter, so the derivation itself is position-independent.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t next_u64();
  double next_uniform();   // [0, 1), 53-bit mantissa
  double next_gaussian();  // N(0, 1), Box-Muller with one cached spare
  RngStream substream(std::uint64_t tag) const;

 private:
  explicit RngStream(std::uint64_t key) : key_(key) {}

  std::uint64_t key_;
  std::uint64_t ctr_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// r x c matrix of independent N(0, sigma^2) entries, drawn row-major.
Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double sigma, RngStream& rng);
Vec gaussian_vec(std::size_t n, double sigma, RngStream& rng);

}  // namespace attnlab
