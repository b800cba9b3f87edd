#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "genprobe/error.hpp"
#include "genprobe/lrf.hpp"
#include "genprobe/spectra.hpp"

namespace genprobe {

struct LayerMetrics {
  std::string layer_name;
  double sq = 0.0;    // stable quality, radians in (0, pi/2)
  double er = 0.0;    // effective rank as Shannon entropy, nats
  double fro = 0.0;   // Frobenius norm
  double spec = 0.0;  // spectral norm
  bool lrf_applied = false;
  bool degenerate = false;
};

struct ModelMetrics {
  double q_sq_p = 0.0;
  double q_e_l2 = 0.0;
  double q_f_p = 0.0;
  double q_s_p = 0.0;
  std::size_t depth = 0;
  bool lrf_applied = false;
};

// ---------------------------------------------------------------------------
// Metric identifiers: "SQ_p", "E_L2", "F_p", "S_p", optionally prefixed "lrf.".

enum class Measure { StableQuality, EffectiveRank, Frobenius, Spectral };

inline constexpr std::array<Measure, 4> kAllMeasures = {Measure::StableQuality, Measure::EffectiveRank,
                                                       Measure::Frobenius, Measure::Spectral};

struct MetricId {
  Measure measure = Measure::EffectiveRank;
  bool lrf = false;

  std::string str() const {
    std::string base;
    switch (measure) {
      case Measure::StableQuality: base = "SQ_p"; break;
      case Measure::EffectiveRank: base = "E_L2"; break;
      case Measure::Frobenius: base = "F_p"; break;
      case Measure::Spectral: base = "S_p"; break;
    }
    return lrf ? "lrf." + base : base;
  }

  static MetricId parse(std::string_view text) {
    MetricId id;
    constexpr std::string_view prefix = "lrf.";
    if (text.substr(0, prefix.size()) == prefix) {
      id.lrf = true;
      text.remove_prefix(prefix.size());
    }
    if (text == "SQ_p") id.measure = Measure::StableQuality;
    else if (text == "E_L2") id.measure = Measure::EffectiveRank;
    else if (text == "F_p") id.measure = Measure::Frobenius;
    else if (text == "S_p") id.measure = Measure::Spectral;
    else throw Error(ErrorCode::InvalidArgument, "unknown metric id '" + std::string(text) + "'");
    return id;
  }

  friend bool operator==(const MetricId&, const MetricId&) = default;
};

inline double metric_value(const ModelMetrics& m, Measure measure) {
  switch (measure) {
    case Measure::StableQuality: return m.q_sq_p;
    case Measure::EffectiveRank: return m.q_e_l2;
    case Measure::Frobenius: return m.q_f_p;
    case Measure::Spectral: return m.q_s_p;
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Per-spectrum measures.

namespace detail {
inline std::span<const double> require_significant(const SingularSpectrum& s) {
  auto sig = s.significant();
  if (sig.empty()) throw Error(ErrorCode::DegenerateSpectrum, "all singular values are at or below zero_tol");
  return sig;
}
}  // namespace detail

// arctan(stable rank / condition number), with both taken over the values
// above zero_tol.
inline double stable_quality(const SingularSpectrum& s) {
  const auto sig = detail::require_significant(s);
  const double top = sig.front();
  double sum_sq = 0.0;
  for (double v : sig) sum_sq += (v / top) * (v / top);
  const double stable_rank = sum_sq;
  const double condition = top / sig.back();
  return std::atan(stable_rank / condition);
}

// Shannon entropy (nats) of the normalized significant singular values. Note
// the sign: this is -sum p ln p, which is non-negative.
inline double effective_rank(const SingularSpectrum& s) {
  const auto sig = detail::require_significant(s);
  double total = 0.0;
  for (double v : sig) total += v;
  double entropy = 0.0;
  for (double v : sig) {
    const double p = v / total;
    if (p > 0.0) entropy -= p * std::log(p);
  }
  return std::max(entropy, 0.0);
}

inline double frobenius_norm(const SingularSpectrum& s) {
  const double top = s.max();
  if (top == 0.0) return 0.0;
  double sum_sq = 0.0;
  for (double v : s.values()) sum_sq += (v / top) * (v / top);
  return top * std::sqrt(sum_sq);
}

inline double spectral_norm(const SingularSpectrum& s) noexcept { return s.max(); }

// Conv and linear weights only: rank 2 or 4 with both leading dims > 1.
inline bool is_probeable(const WeightTensor& t) noexcept {
  const auto& shape = t.shape();
  return (shape.size() == 2 || shape.size() == 4) && shape[0] > 1 && shape[1] > 1;
}

// Metrics of one weight tensor: the four measures on each unfolding, averaged.
// With LRF, unfoldings whose spectrum is emptied by EVBMF are left out of the
// average; if all are emptied the layer comes back degenerate with zeros.
inline LayerMetrics probe_layer(const WeightTensor& t, bool use_lrf) {
  LayerMetrics out;
  out.layer_name = t.name();
  out.lrf_applied = use_lrf;
  const double eps = machine_epsilon(t.dtype());

  std::size_t used = 0;
  for (const auto& m : unfold(t)) {
    auto spectrum = singular_values(m, eps);
    if (use_lrf) {
      try {
        spectrum = lrf::shrink_spectrum(spectrum);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::EmptyResult || e.code() == ErrorCode::DegenerateSpectrum) continue;
        throw;
      }
    }
    if (numerical_rank(spectrum) == 0) continue;
    out.sq += stable_quality(spectrum);
    out.er += effective_rank(spectrum);
    out.fro += frobenius_norm(spectrum);
    out.spec += spectral_norm(spectrum);
    ++used;
  }
  if (used == 0) {
    out.sq = out.er = out.fro = out.spec = 0.0;
    out.degenerate = true;
    return out;
  }
  const double n = static_cast<double>(used);
  out.sq /= n;
  out.er /= n;
  out.fro /= n;
  out.spec /= n;
  return out;
}

inline constexpr double kEffectiveRankFloor = 1e-12;

// Depth-normalized aggregations over the non-degenerate layers:
//   SQ_p = (prod sq)^(1/d)
//   E_L2 = ln sqrt(sum er^2 / d)
//   F_p  = ln sqrt(d (prod fro^2)^(1/d)) = ln(d)/2 + mean(ln fro)
//   S_p  = ln(d)/2 + mean(ln spec)
inline ModelMetrics aggregate_model(std::span<const LayerMetrics> layers) {
  ModelMetrics out;
  double log_sq = 0.0;
  double er_sq = 0.0;
  double log_fro = 0.0;
  double log_spec = 0.0;
  std::size_t d = 0;
  for (const auto& layer : layers) {
    if (layer.degenerate) continue;
    if (!(layer.fro > 0.0) || !(layer.spec > 0.0)) {
      throw Error(ErrorCode::DegenerateNorm, layer.layer_name + ": zero norm, logarithm undefined");
    }
    if (!(layer.sq > 0.0)) throw Error(ErrorCode::DegenerateNorm, layer.layer_name + ": non-positive stable quality");
    const double er = std::max(layer.er, kEffectiveRankFloor);
    log_sq += std::log(layer.sq);
    er_sq += er * er;
    log_fro += std::log(layer.fro);
    log_spec += std::log(layer.spec);
    out.lrf_applied = out.lrf_applied || layer.lrf_applied;
    ++d;
  }
  if (d == 0) throw Error(ErrorCode::EmptyModel, "no non-degenerate layers to aggregate");
  const double depth = static_cast<double>(d);
  out.depth = d;
  out.q_sq_p = std::exp(log_sq / depth);
  out.q_e_l2 = 0.5 * std::log(er_sq / depth);
  out.q_f_p = 0.5 * std::log(depth) + log_fro / depth;
  out.q_s_p = 0.5 * std::log(depth) + log_spec / depth;
  return out;
}

struct ModelProbe {
  std::vector<LayerMetrics> layers;  // included layers, degenerate ones flagged
  ModelMetrics model;
  std::vector<std::string> skipped;  // tensors rejected by the layer filter
};

// Probes every conv/linear tensor of a model and aggregates. Throws EmptyModel
// if no tensor passes the filter or all are degenerate.
inline ModelProbe probe_model(std::span<const WeightTensor> tensors, bool use_lrf) {
  ModelProbe out;
  for (const auto& t : tensors) {
    if (!is_probeable(t)) {
      out.skipped.push_back(t.name());
      continue;
    }
    out.layers.push_back(probe_layer(t, use_lrf));
  }
  if (out.layers.empty()) throw Error(ErrorCode::EmptyModel, "no tensor passed the layer filter");
  out.model = aggregate_model(out.layers);
  out.model.lrf_applied = use_lrf;
  return out;
}

}  // namespace genprobe
