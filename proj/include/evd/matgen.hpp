#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "evd/blas.hpp"
#include "evd/matrix.hpp"

namespace evd {

/// xoshiro256** seeded through splitmix64 (Blackman & Vigna). Both
/// algorithms are short and fully specified, so streams are reproducible
/// from any language.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) {
    std::uint64_t x = seed ^ (0x9E3779B97F4A7C15ull * (stream + 1));
    for (auto& s : state_) s = splitmix64(x);
  }

  static std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller; the second variate is cached.
  double normal() {
    if (cached_) {
      double z = *cached_;
      cached_.reset();
      return z;
    }
    const double u1 = static_cast<double>((next() >> 11) + 1) * 0x1p-53;  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    cached_ = r * std::sin(theta);
    return r * std::cos(theta);
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::array<std::uint64_t, 4> state_{};
  std::optional<double> cached_;
};

enum class SpectrumKind { Cluster0, Cluster1, Geometric, Arithmetic, Normal, Uniform };

inline constexpr std::array<std::pair<SpectrumKind, std::string_view>, 6> kSpectrumNames{{
    {SpectrumKind::Cluster0, "Cluster0"},
    {SpectrumKind::Cluster1, "Cluster1"},
    {SpectrumKind::Geometric, "Geometric"},
    {SpectrumKind::Arithmetic, "Arithmetic"},
    {SpectrumKind::Normal, "Normal"},
    {SpectrumKind::Uniform, "Uniform"},
}};

inline std::string_view to_string(SpectrumKind k) {
  for (const auto& [kind, name] : kSpectrumNames)
    if (kind == k) return name;
  return "?";
}

/// Case-insensitive lookup of the distribution names.
inline std::optional<SpectrumKind> parse_spectrum_kind(std::string_view name) {
  auto lower = [](std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
  };
  const std::string key = lower(name);
  for (const auto& [kind, label] : kSpectrumNames)
    if (lower(label) == key) return kind;
  return std::nullopt;
}

struct SpectrumSpec {
  SpectrumKind kind = SpectrumKind::Geometric;
  index_t n = 0;
  double cond = 1e8;
  double lambda_max = 1e6;
  std::uint64_t seed = 0;
};

/// Eigenvalues for the six test distributions, sorted ascending.
///
///   Cluster0:   lmax, then n-1 copies of lmax/cond
///   Cluster1:   n-1 copies of lmax, then lmax/cond
///   Geometric:  lmax * cond^(-(i-1)/(n-1))
///   Arithmetic: lmax * (1 - (1 - 1/cond) (i-1)/(n-1))
///   Normal:     i.i.d. N(0, 1)
///   Uniform:    i.i.d. U[-1, 1]
inline std::vector<double> eigen_spectrum(const SpectrumSpec& spec) {
  if (spec.n < 2) throw Error("eigen_spectrum: n must be >= 2");
  const bool controlled = spec.kind != SpectrumKind::Normal && spec.kind != SpectrumKind::Uniform;
  if (controlled && (spec.cond < 1.0 || spec.lambda_max <= 0.0))
    throw Error("eigen_spectrum: need cond >= 1 and lambda_max > 0");
  const index_t n = spec.n;
  const double lmax = spec.lambda_max;
  const double lmin = lmax / spec.cond;
  std::vector<double> lam(static_cast<std::size_t>(n));
  switch (spec.kind) {
    case SpectrumKind::Cluster0:
      std::fill(lam.begin(), lam.end(), lmin);
      lam[0] = lmax;
      break;
    case SpectrumKind::Cluster1:
      std::fill(lam.begin(), lam.end(), lmax);
      lam[n - 1] = lmin;
      break;
    case SpectrumKind::Geometric:
      for (index_t i = 0; i < n; ++i)
        lam[i] = lmax * std::pow(spec.cond, -static_cast<double>(i) / static_cast<double>(n - 1));
      lam[0] = lmax;
      lam[n - 1] = lmin;
      break;
    case SpectrumKind::Arithmetic:
      for (index_t i = 0; i < n; ++i)
        lam[i] = lmax * (1.0 - (1.0 - 1.0 / spec.cond) * static_cast<double>(i) / static_cast<double>(n - 1));
      lam[0] = lmax;
      lam[n - 1] = lmin;
      break;
    case SpectrumKind::Normal: {
      Rng rng(spec.seed, 1);
      for (auto& x : lam) x = rng.normal();
      break;
    }
    case SpectrumKind::Uniform: {
      Rng rng(spec.seed, 1);
      for (auto& x : lam) x = rng.uniform(-1.0, 1.0);
      break;
    }
    default:
      throw Error("eigen_spectrum: unknown kind");
  }
  std::sort(lam.begin(), lam.end());
  return lam;
}

/// Haar-distributed orthogonal matrix: Householder QR of a standard
/// Gaussian matrix, columns signed so that diag(R) > 0.
inline Matrix random_orthogonal(index_t n, std::uint64_t seed) {
  if (n < 1) throw Error("random_orthogonal: n must be >= 1");
  Rng rng(seed, 0);
  Matrix g(n, n);
  for (auto& x : g.values()) x = rng.normal();
  std::vector<double> taus(static_cast<std::size_t>(n), 0.0);
  std::vector<double> rdiag(static_cast<std::size_t>(n), 0.0);
  for (index_t j = 0; j < n; ++j) {
    double head = g(j, j);
    const index_t len = n - j;
    taus[j] = make_householder(len, head, g.col(j) + j + 1);
    rdiag[j] = head;
    g(j, j) = 1.0;
    if (j + 1 < n) {
      std::span<const double> v(g.col(j) + j, static_cast<std::size_t>(len));
      apply_householder_left(v, taus[j], g.block(j, j + 1, len, n - j - 1));
    }
  }
  Matrix q = Matrix::identity(n);
  for (index_t j = n - 1; j >= 0; --j) {
    const index_t len = n - j;
    std::span<const double> v(g.col(j) + j, static_cast<std::size_t>(len));
    apply_householder_left(v, taus[j], q.block(j, j, len, n - j));
  }
  for (index_t j = 0; j < n; ++j) {
    if (rdiag[j] < 0.0) {
      double* c = q.col(j);
      for (index_t i = 0; i < n; ++i) c[i] = -c[i];
    }
  }
  return q;
}

/// A = V diag(lambda) V^T, averaged with its transpose.
inline SymmetricMatrix assemble(ConstMatrixView v, std::span<const double> lambda) {
  const index_t n = v.rows;
  require_shape(v.cols == n && static_cast<index_t>(lambda.size()) == n, "assemble");
  Matrix vl = to_matrix(v);
  for (index_t j = 0; j < n; ++j) {
    double* c = vl.col(j);
    for (index_t i = 0; i < n; ++i) c[i] *= lambda[j];
  }
  Matrix a = multiply(Op::N, Op::T, vl.view(), v);
  for (index_t j = 0; j < n; ++j)
    for (index_t i = j + 1; i < n; ++i) {
      const double avg = 0.5 * (a(i, j) + a(j, i));
      a(i, j) = a(j, i) = avg;
    }
  return SymmetricMatrix(std::move(a));
}

struct TestMatrix {
  SymmetricMatrix a;
  std::vector<double> spectrum;
};

inline TestMatrix generate(const SpectrumSpec& spec) {
  auto lam = eigen_spectrum(spec);
  Matrix v = random_orthogonal(spec.n, spec.seed);
  auto a = assemble(v.view(), lam);
  return TestMatrix{std::move(a), std::move(lam)};
}

}  // namespace evd
