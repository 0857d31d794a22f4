#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace gcrl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using ArrayXd = Eigen::ArrayXd;

// Deterministic RNG with explicitly implemented distributions so that
// sampled streams are identical across compilers and standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) { mix(); }

  // Independent named substream of a master seed.
  static Rng stream(std::uint64_t seed, std::string_view name);

  std::uint64_t next_u64();

  // Uniform in [0, 1).
  double uniform();

  // Uniform integer in [0, n), n >= 1.
  int uniform_int(int n);

  // Standard normal via Box-Muller (one value per pair of uniforms).
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      std::swap(v[i], v[uniform_int(i + 1)]);
    }
  }

 private:
  void mix();
  std::uint64_t state_;
};

// FNV-1a, used for naming RNG substreams.
std::uint64_t fnv1a64(std::string_view s);

// SHA-1 of a byte string, lowercase hex.
std::string sha1_hex(std::string_view data);

// Git blob hash of a content string: sha1("blob <len>\0" + content).
std::string git_blob_sha1(std::string_view content);

// Round-trippable decimal formatting for doubles ("%.17g").
std::string format_double(double x);

}  // namespace gcrl
