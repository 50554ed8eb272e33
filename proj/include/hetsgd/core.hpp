#pragma once

// Dense vector arithmetic and deterministic randomness shared by every
// other component. All real arithmetic is double precision; the bound
// checks in theory.hpp rely on the headroom.

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace hetsgd {

using Real = double;

template <class Scalar>
using ParamVec = Eigen::Vector<Scalar, Eigen::Dynamic>;

// Flat parameter/gradient vector. Fixed dimension after creation; binary
// operations require equal dimensions.
using ParamVector = ParamVec<Real>;

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

template <class DX, class DY>
inline void require_same_dim(const Eigen::MatrixBase<DX>& x,
                             const Eigen::MatrixBase<DY>& y,
                             const char* where) {
  if (x.size() != y.size())
    throw std::invalid_argument(std::string(where) + ": dimension mismatch (" +
                                std::to_string(x.size()) + " vs " +
                                std::to_string(y.size()) + ")");
}

// a*x + y elementwise.
template <class DX, class DY>
inline ParamVec<typename DX::Scalar> axpy(typename DX::Scalar a,
                                          const Eigen::MatrixBase<DX>& x,
                                          const Eigen::MatrixBase<DY>& y) {
  require_same_dim(x, y, "axpy");
  return a * x + y;
}

// Elementwise product.
template <class DX, class DY>
inline ParamVec<typename DX::Scalar> hadamard(const Eigen::MatrixBase<DX>& x,
                                              const Eigen::MatrixBase<DY>& y) {
  require_same_dim(x, y, "hadamard");
  return x.cwiseProduct(y);
}

// Squared L2 norm.
template <class DX>
inline typename DX::Scalar l2_norm_sq(const Eigen::MatrixBase<DX>& x) {
  return x.squaredNorm();
}

namespace detail {

// splitmix64 finalizer. Integer-only, so identical on every platform.
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

}  // namespace detail

// Counter-based random stream. A value is a pure function of
// (seed, stream id, draw index), so every worker/iteration owns an
// addressable substream and replays bit-identically across runs.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream)
      : base_(detail::mix64(detail::mix64(seed + detail::kGolden) +
                            (stream + 1) * detail::kGolden)),
        counter_(0) {}

  std::uint64_t seed_base() const { return base_; }
  std::uint64_t draws() const { return counter_; }

  std::uint64_t next_u64() {
    return detail::mix64(base_ + (counter_++) * detail::kGolden);
  }

  // Uniform in [0, 1), 53 random bits.
  Real next_double() {
    return static_cast<Real>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform in [lo, hi); lo == hi returns lo.
  Real uniform(Real lo, Real hi) {
    require(lo <= hi, "uniform: lo > hi");
    return lo + (hi - lo) * next_double();
  }

  // Uniform integer in [0, n). Lemire multiply-shift, no rejection.
  std::uint64_t uniform_index(std::uint64_t n) {
    require(n > 0, "uniform_index: n must be positive");
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // Standard normal via Box-Muller; two uniform draws per value.
  Real normal() {
    Real u1 = next_double();
    Real u2 = next_double();
    // Shift u1 into (0, 1] so the log is finite.
    u1 = 1.0 - u1;
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  Real normal(Real mean, Real stddev) { return mean + stddev * normal(); }

 private:
  std::uint64_t base_;
  std::uint64_t counter_;
};

// Stream id layout used across the project. Worker streams are spaced so
// timing and sampling never alias.
namespace stream_id {
constexpr std::uint64_t kDataset = 0;
constexpr std::uint64_t kParamInit = 1;
constexpr std::uint64_t kEstimators = 2;
constexpr std::uint64_t kHoldout = 3;
inline std::uint64_t worker_timing(int worker) { return 16 + 2 * static_cast<std::uint64_t>(worker); }
inline std::uint64_t worker_sampling(int worker) { return 17 + 2 * static_cast<std::uint64_t>(worker); }
}  // namespace stream_id

// FNV-1a over the vector's byte image. Used to certify which parameter
// vector a gradient bundle was evaluated at.
inline std::uint64_t param_checksum(const ParamVector& x) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  const unsigned char* p = reinterpret_cast<const unsigned char*>(x.data());
  const std::size_t nbytes = static_cast<std::size_t>(x.size()) * sizeof(Real);
  for (std::size_t i = 0; i < nbytes; ++i) {
    h ^= p[i];
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace hetsgd
