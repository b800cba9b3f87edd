#pragma once

// Low-rank factorization of a weight spectrum via the global analytic solution
// of empirical variational Bayesian matrix factorization (EVBMF), after
// Nakajima, Sugiyama, Babacan and Tomioka, "Global Analytic Solution of
// Fully-observed Variational Bayesian Matrix Factorization" (JMLR 2013).
//
// Notation below follows that work: an L x M observation (L <= M), alpha = L/M,
// singular values gamma_k, noise variance sigma2, x_k = gamma_k^2 / (M sigma2).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "genprobe/error.hpp"
#include "genprobe/spectra.hpp"

namespace genprobe::lrf {

// tau_bar = 2.5129 sqrt(alpha) is the normalized-SNR bound below which the EVB
// solution is exactly zero; it fixes both the threshold and x_bar below.
inline constexpr double kTauBarConstant = 2.5129;

inline constexpr int kMaxIterations = 100;
inline constexpr double kRelativeTolerance = 1e-8;

struct EvbmfResult {
  std::size_t rank = 0;
  std::vector<double> shrunk_values;  // descending, length == rank
  double sigma2 = 0.0;                // estimated noise variance
  double threshold = 0.0;             // singular values above this are retained
};

namespace detail {

struct Geometry {
  double rows;   // L
  double cols;   // M
  double alpha;  // L / M
  double tau_bar;
  double x_bar;  // (1 + tau_bar)(1 + alpha / tau_bar)
};

inline Geometry geometry(std::size_t m, std::size_t n) {
  const double rows = static_cast<double>(std::min(m, n));
  const double cols = static_cast<double>(std::max(m, n));
  const double alpha = rows / cols;
  const double tau_bar = kTauBarConstant * std::sqrt(alpha);
  return {rows, cols, alpha, tau_bar, (1.0 + tau_bar) * (1.0 + alpha / tau_bar)};
}

// Posterior signal-to-noise ratio tau(x) for x above x_bar.
inline double tau(double x, double alpha) {
  const double b = x - (1.0 + alpha);
  return 0.5 * (b + std::sqrt(std::max(b * b - 4.0 * alpha, 0.0)));
}

// EVB free energy as a function of sigma2 (up to terms constant in sigma2).
// `gamma_sq` holds all L squared singular values, so the residual and the
// (L - H) ln sigma2 terms of the truncated form vanish. A zero singular value
// contributes x - ln x = ln(M sigma2) + const; the infinite constant is dropped.
inline double free_energy(double sigma2, const std::vector<double>& gamma_sq, const Geometry& g) {
  const double scale = g.cols * sigma2;
  double total = 0.0;
  for (double gsq : gamma_sq) {
    if (gsq <= 0.0) {
      total += std::log(scale);
      continue;
    }
    const double x = gsq / scale;
    if (x <= g.x_bar) {
      total += x - std::log(x);
    } else {
      const double t = tau(x, g.alpha);
      total += (x - t) + std::log((t + 1.0) / x) + g.alpha * std::log(t / g.alpha + 1.0);
    }
  }
  return total;
}

// Golden-section search for the minimum of f on [lo, hi], carried out in
// log(sigma2) so that intervals spanning many decades are bisected evenly.
template <typename F>
double golden_section_log(F&& f, double lo, double hi) {
  if (!(hi > lo)) return lo;
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = std::log(lo);
  double b = std::log(hi);
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(std::exp(c));
  double fd = f(std::exp(d));
  for (int it = 0; it < kMaxIterations; ++it) {
    // width in log space bounds the relative width in sigma2
    if (b - a <= kRelativeTolerance) {
      return std::exp(0.5 * (a + b));
    }
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(std::exp(c));
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(std::exp(d));
    }
  }
  if (b - a <= kRelativeTolerance) return std::exp(0.5 * (a + b));
  throw Error(ErrorCode::OptimizationFailure, "noise variance search did not converge");
}

}  // namespace detail

// Truncation threshold on singular values for a given noise variance.
inline double evbmf_threshold(double sigma2, std::size_t m, std::size_t n) {
  const auto g = detail::geometry(m, n);
  return std::sqrt(g.cols * sigma2 * g.x_bar);
}

// Shrunk estimate of one retained singular value.
inline double evbmf_shrink(double gamma, double sigma2, std::size_t m, std::size_t n) {
  const auto g = detail::geometry(m, n);
  const double gsq = gamma * gamma;
  const double a = 1.0 - (g.rows + g.cols) * sigma2 / gsq;
  const double disc = a * a - 4.0 * g.rows * g.cols * sigma2 * sigma2 / (gsq * gsq);
  return 0.5 * gamma * (a + std::sqrt(std::max(disc, 0.0)));
}

// Number of components the analytic solution can support, H = min(ceil(L/(1+alpha)) - 1, L).
inline std::size_t candidate_count(std::size_t m, std::size_t n) {
  const auto g = detail::geometry(m, n);
  const auto bound = static_cast<std::size_t>(std::ceil(g.rows / (1.0 + g.alpha))) - 1;
  return std::min(bound, static_cast<std::size_t>(g.rows));
}

// Noise variance estimate: minimizer of the free energy over
// [max(gamma_{H+1}^2 / (M x_bar), mean_{k>H} gamma_k^2 / M), sum gamma^2 / (L M)].
inline double estimate_noise_variance(const SingularSpectrum& s) {
  const auto g = detail::geometry(s.rows(), s.cols());
  const auto L = static_cast<std::size_t>(g.rows);
  std::vector<double> gamma_sq(L, 0.0);
  const auto values = s.values();
  for (std::size_t k = 0; k < values.size(); ++k) gamma_sq[k] = values[k] * values[k];

  const std::size_t h = candidate_count(s.rows(), s.cols());
  const double total = std::accumulate(gamma_sq.begin(), gamma_sq.end(), 0.0);
  const double upper = total / (g.rows * g.cols);
  double trailing = 0.0;
  for (std::size_t k = h; k < L; ++k) trailing += gamma_sq[k];
  trailing /= static_cast<double>(L - h);
  double lower = std::max(gamma_sq[h] / (g.cols * g.x_bar), trailing / g.cols);
  // An exactly rank-deficient input drives the lower bound to zero; keep the
  // interval positive so the log-domain search stays defined.
  lower = std::max(lower, upper * std::numeric_limits<double>::epsilon());
  if (lower >= upper) return upper;

  // Condition the search by rescaling so the lower bound is 1.
  const double unit = lower;
  for (auto& v : gamma_sq) v /= unit;
  const auto objective = [&](double sigma2) { return detail::free_energy(sigma2, gamma_sq, g); };
  return unit * detail::golden_section_log(objective, 1.0, upper / unit);
}

inline EvbmfResult evbmf(const SingularSpectrum& s) {
  if (numerical_rank(s) == 0) {
    throw Error(ErrorCode::DegenerateSpectrum, "no singular value above the zero tolerance");
  }
  EvbmfResult result;
  result.sigma2 = estimate_noise_variance(s);
  result.threshold = evbmf_threshold(result.sigma2, s.rows(), s.cols());
  for (double gamma : s.values()) {
    if (gamma <= result.threshold) break;
    result.shrunk_values.push_back(evbmf_shrink(gamma, result.sigma2, s.rows(), s.cols()));
  }
  result.rank = result.shrunk_values.size();
  return result;
}

// Spectrum of the EVBMF low-rank estimate. Throws EmptyResult if nothing
// survives truncation, so callers can mark the layer degenerate.
inline SingularSpectrum shrink_spectrum(const SingularSpectrum& s) {
  auto result = evbmf(s);
  if (result.rank == 0) throw Error(ErrorCode::EmptyResult, "EVBMF retained no components");
  return SingularSpectrum(std::move(result.shrunk_values), s.rows(), s.cols(), s.epsilon());
}

}  // namespace genprobe::lrf
