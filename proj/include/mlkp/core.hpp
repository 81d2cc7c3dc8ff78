#ifndef MLKP_CORE_HPP
#define MLKP_CORE_HPP

#include <cstdint>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include <Eigen/Core>

// Contract violations (bad shapes, bad arguments) throw std::invalid_argument;
// file-format and I/O problems throw std::runtime_error.
#define MLKP_CHECK(cond, msg)              \
  do {                                     \
    if (!(cond)) {                         \
      std::ostringstream oss_;             \
      oss_ << msg;                         \
      throw std::invalid_argument(oss_.str()); \
    }                                      \
  } while (0)

#define MLKP_IO_CHECK(cond, msg)           \
  do {                                     \
    if (!(cond)) {                         \
      std::ostringstream oss_;             \
      oss_ << msg;                         \
      throw std::runtime_error(oss_.str()); \
    }                                      \
  } while (0)

namespace mlkp {

using Index = Eigen::Index;

template <typename Scalar>
using Vector = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using MatrixMap =
    Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

template <typename Scalar>
using ConstMatrixMap =
    Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// Deterministic random source. mt19937_64 output is fully specified by the
// standard; the distributions below are hand-rolled so that streams are
// reproducible across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // [0, 1)
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // inclusive bounds
  std::int64_t uniformInt(std::int64_t lo, std::int64_t hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(gen_() % span);
  }

  // Box-Muller; two engine draws per sample.
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  std::uint64_t raw() { return gen_(); }

 private:
  std::mt19937_64 gen_;
};

// splitmix64-style mixer for deriving independent streams from (seed, index).
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace mlkp

#endif  // MLKP_CORE_HPP
