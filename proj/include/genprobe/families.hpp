#pragma once

// Desk-scale model families: synthetic weight spectra with a planted link to
// accuracy, a Gaussian-blob dataset, and a small MLP trainer that saves its
// weights after every epoch.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/QR>

#include "genprobe/error.hpp"
#include "genprobe/metrics.hpp"
#include "genprobe/parallel.hpp"
#include "genprobe/random.hpp"
#include "genprobe/spectra.hpp"
#include "genprobe/store.hpp"

namespace genprobe::families {

namespace fs = std::filesystem;

inline constexpr const char* kManifestName = "manifest.jsonl";

// Shortest decimal text that parses back to the same double.
inline std::string format_number(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

// Haar-distributed orthogonal matrix: Q of a Gaussian matrix with the signs of
// R's diagonal folded in.
inline Eigen::MatrixXd random_orthogonal(Eigen::Index n, Rng& rng) {
  Eigen::MatrixXd g(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i) g(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < n; ++j) {
    if (r(j, j) < 0) q.col(j) = -q.col(j);
  }
  return q;
}

// Starts an empty manifest, replacing any previous one.
inline void reset_manifest(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot create manifest '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// Synthetic spectrum families.

enum class Link { Linear, NegatedLinear, Quadratic, Noisy };

struct SpectrumFamilySpec {
  std::size_t n_models = 3;
  std::vector<std::pair<std::size_t, std::size_t>> layer_shapes = {{16, 32}, {32, 32}, {8, 32}};
  double decay_low = 0.2;
  double decay_high = 2.0;
  Link link = Link::Linear;
  double noise_sigma = 0.0;  // used by Link::Noisy
  std::uint64_t seed = 0;
};

inline Link parse_link(const std::string& text) {
  if (text == "linear") return Link::Linear;
  if (text == "negated" || text == "neg-linear") return Link::NegatedLinear;
  if (text == "quadratic") return Link::Quadratic;
  if (text == "noisy") return Link::Noisy;
  throw Error(ErrorCode::InvalidArgument, "unknown link '" + text + "'");
}

inline void validate(const SpectrumFamilySpec& spec) {
  if (spec.n_models < 3) throw Error(ErrorCode::InvalidArgument, "n_models must be at least 3");
  if (spec.layer_shapes.empty()) throw Error(ErrorCode::InvalidArgument, "at least one layer shape required");
  for (auto [m, n] : spec.layer_shapes) {
    if (m < 2 || n < 2) throw Error(ErrorCode::InvalidArgument, "layer dims must be at least 2");
  }
  if (!(spec.decay_low > 0.0) || !(spec.decay_low < spec.decay_high)) {
    throw Error(ErrorCode::InvalidArgument, "decay range must satisfy 0 < low < high");
  }
  if (spec.link == Link::Noisy && !(spec.noise_sigma >= 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "noise sigma must be non-negative");
  }
}

// Effective rank (nats) of a power-law spectrum sigma_k = k^-p, k = 1..r.
inline double power_law_entropy(std::size_t r, double p) {
  std::vector<double> sigma(r);
  double total = 0.0;
  for (std::size_t k = 0; k < r; ++k) total += sigma[k] = std::pow(static_cast<double>(k + 1), -p);
  double h = 0.0;
  for (double s : sigma) h -= (s / total) * std::log(s / total);
  return h;
}

// Synthetic accuracies live on a 2^-24 grid so that test + offset is exact and
// the recomputed gap is the same double for every record.
inline double on_grid(double v) { return std::ldexp(std::round(std::ldexp(v, 24)), -24); }
inline const double kTrainOffset = on_grid(0.05);

// Writes n_models containers whose layers are U diag(k^-p) V^T for a per-model
// decay exponent p, and a manifest whose accuracies are a link of the planted
// E_L2 aggregate. Returns the manifest path.
inline fs::path synth_family(const SpectrumFamilySpec& spec, const fs::path& out_dir) {
  validate(spec);
  fs::create_directories(out_dir);
  Rng rng(spec.seed);

  std::vector<double> planted(spec.n_models);
  std::vector<std::string> paths(spec.n_models);
  for (std::size_t i = 0; i < spec.n_models; ++i) {
    const double p = rng.uniform(spec.decay_low, spec.decay_high);
    std::vector<WeightTensor> layers;
    double er_sq = 0.0;
    for (std::size_t l = 0; l < spec.layer_shapes.size(); ++l) {
      const auto [m, n] = spec.layer_shapes[l];
      const auto r = static_cast<Eigen::Index>(std::min(m, n));
      const Eigen::MatrixXd u = random_orthogonal(static_cast<Eigen::Index>(m), rng);
      const Eigen::MatrixXd v = random_orthogonal(static_cast<Eigen::Index>(n), rng);
      Eigen::VectorXd sigma(r);
      for (Eigen::Index k = 0; k < r; ++k) sigma(k) = std::pow(static_cast<double>(k + 1), -p);
      const Matrix w = u.leftCols(r) * sigma.asDiagonal() * v.leftCols(r).transpose();
      std::ostringstream name;
      name << "layer" << l << ".weight";
      layers.push_back(WeightTensor::from_matrix(name.str(), w));
      const double er = power_law_entropy(static_cast<std::size_t>(r), p);
      er_sq += er * er;
    }
    planted[i] = 0.5 * std::log(er_sq / static_cast<double>(spec.layer_shapes.size()));
    std::ostringstream file;
    file << "synth-" << std::setw(4) << std::setfill('0') << i << ".gprb";
    paths[i] = file.str();
    store::write_container(layers, out_dir / paths[i]);
  }

  // Link: normalize the planted metric to [0, 1], transform, rescale to [0.1, 0.9].
  const auto [lo_it, hi_it] = std::minmax_element(planted.begin(), planted.end());
  const double lo = *lo_it, span = *hi_it - *lo_it;
  std::vector<double> raw(spec.n_models);
  for (std::size_t i = 0; i < spec.n_models; ++i) {
    const double t = span > 0.0 ? (planted[i] - lo) / span : 0.5;
    switch (spec.link) {
      case Link::Linear: raw[i] = t; break;
      case Link::NegatedLinear: raw[i] = -t; break;
      case Link::Quadratic: raw[i] = t * t; break;
      case Link::Noisy: raw[i] = t + spec.noise_sigma * rng.normal(); break;
    }
  }
  const auto [rlo_it, rhi_it] = std::minmax_element(raw.begin(), raw.end());
  const double rlo = *rlo_it, rspan = *rhi_it - *rlo_it;

  const fs::path manifest = out_dir / kManifestName;
  reset_manifest(manifest);
  for (std::size_t i = 0; i < spec.n_models; ++i) {
    store::RunRecord r;
    std::ostringstream id;
    id << "synth-" << std::setw(4) << std::setfill('0') << i;
    r.model_id = id.str();
    r.epoch = 0;
    r.optimizer = "none";
    r.dataset = "synthetic";
    r.hyperparams = {{"planted_E_L2", format_number(planted[i])}};
    r.test_accuracy = on_grid(0.1 + 0.8 * (rspan > 0.0 ? (raw[i] - rlo) / rspan : 0.5));
    r.train_accuracy = r.test_accuracy + kTrainOffset;
    r.weights_path = paths[i];
    store::append_record(manifest, r);
  }
  return manifest;
}

// ---------------------------------------------------------------------------
// Gaussian blobs.

struct Dataset {
  Eigen::MatrixXd x;           // n x dim, one sample per row
  std::vector<int> labels;     // 0 or 1
};

// Two unit-covariance Gaussian classes centred at -/+ (separation/2) e_1,
// n/2 samples each, in a seeded random order.
inline Dataset generate_blobs(std::uint64_t seed, std::size_t n, std::size_t dim = 16, double separation = 2.0) {
  if (n < 2 || n % 2 != 0) throw Error(ErrorCode::InvalidArgument, "blob count must be even and >= 2");
  if (dim < 1) throw Error(ErrorCode::InvalidArgument, "blob dimension must be positive");
  Rng rng(seed);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = i < n / 2 ? 0 : 1;
  rng.shuffle(labels.begin(), labels.end());

  Dataset out{Eigen::MatrixXd(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim)), std::move(labels)};
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    for (std::size_t d = 0; d < dim; ++d) out.x(row, static_cast<Eigen::Index>(d)) = rng.normal();
    out.x(row, 0) += (out.labels[i] == 1 ? 0.5 : -0.5) * separation;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Toy MLP: 16 -> h -> h -> 2, ReLU, softmax cross-entropy.

inline constexpr std::size_t kToyInput = 16;
inline constexpr std::size_t kToyOutput = 2;

struct ToyTrainConfig {
  std::size_t hidden = 32;
  double lr = 0.01;
  double weight_decay = 0.0;
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  std::size_t n_train = 2048;
  std::size_t n_test = 2048;
  double separation = 2.0;
  std::uint64_t data_seed = 0;
  std::uint64_t init_seed = 0;
  std::string model_id;  // derived from the configuration when empty
};

inline void validate(const ToyTrainConfig& c) {
  if (c.hidden < 2) throw Error(ErrorCode::InvalidArgument, "hidden width must be at least 2");
  if (!(c.lr >= 0.0) || !std::isfinite(c.lr)) throw Error(ErrorCode::InvalidArgument, "lr must be finite and >= 0");
  if (!(c.weight_decay >= 0.0)) throw Error(ErrorCode::InvalidArgument, "weight decay must be >= 0");
  if (c.epochs < 1 || c.batch_size < 1) throw Error(ErrorCode::InvalidArgument, "epochs and batch size must be >= 1");
  if (c.n_train < 2 || c.n_test < 2 || c.n_train % 2 || c.n_test % 2) {
    throw Error(ErrorCode::InvalidArgument, "n_train and n_test must be even and >= 2");
  }
}

inline std::string default_model_id(const ToyTrainConfig& c) {
  return "lr=" + format_number(c.lr) + "_wd=" + format_number(c.weight_decay) + "_h=" + std::to_string(c.hidden) +
         "_seed=" + std::to_string(c.init_seed);
}

struct MlpParams {
  Eigen::MatrixXd w1, w2, w3;  // (out x in)
  Eigen::VectorXd b1, b2, b3;

  std::size_t size() const {
    return static_cast<std::size_t>(w1.size() + w2.size() + w3.size() + b1.size() + b2.size() + b3.size());
  }

  // Flat views for gradient checking: w1, b1, w2, b2, w3, b3 in that order.
  double& at(std::size_t i) {
    Eigen::Index k = static_cast<Eigen::Index>(i);
    if (k < w1.size()) return w1.data()[k];
    k -= w1.size();
    if (k < b1.size()) return b1.data()[k];
    k -= b1.size();
    if (k < w2.size()) return w2.data()[k];
    k -= w2.size();
    if (k < b2.size()) return b2.data()[k];
    k -= b2.size();
    if (k < w3.size()) return w3.data()[k];
    k -= w3.size();
    return b3.data()[k];
  }
  double at(std::size_t i) const { return const_cast<MlpParams*>(this)->at(i); }

  std::vector<WeightTensor> weight_tensors() const {
    const auto tensor = [](const char* name, const Eigen::MatrixXd& w) {
      return WeightTensor::from_matrix(name, Matrix(w));
    };
    return {tensor("W1", w1), tensor("W2", w2), tensor("W3", w3)};
  }
};

// He-normal weights, zero biases.
inline MlpParams init_mlp(std::size_t hidden, std::uint64_t seed) {
  Rng rng(seed);
  const auto h = static_cast<Eigen::Index>(hidden);
  const auto fill = [&](Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd w(rows, cols);
    const double scale = std::sqrt(2.0 / static_cast<double>(cols));
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) w(i, j) = scale * rng.normal();
    return w;
  };
  MlpParams p;
  p.w1 = fill(h, static_cast<Eigen::Index>(kToyInput));
  p.w2 = fill(h, h);
  p.w3 = fill(static_cast<Eigen::Index>(kToyOutput), h);
  p.b1 = Eigen::VectorXd::Zero(h);
  p.b2 = Eigen::VectorXd::Zero(h);
  p.b3 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(kToyOutput));
  return p;
}

// Logits for a batch (rows = samples).
// Forward pass evaluated in Scalar arithmetic.
template <typename Scalar = double>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> mlp_logits(const MlpParams& p, const Eigen::MatrixXd& x) {
  using M = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const auto w = [](const auto& a) { return a.template cast<Scalar>(); };
  const M a1 = ((w(x) * w(p.w1).transpose()).rowwise() + w(p.b1).transpose()).cwiseMax(Scalar(0));
  const M a2 = ((a1 * w(p.w2).transpose()).rowwise() + w(p.b2).transpose()).cwiseMax(Scalar(0));
  return (a2 * w(p.w3).transpose()).rowwise() + w(p.b3).transpose();
}

namespace detail {
// Row-wise log-softmax.
template <typename M>
M log_softmax(const M& z) {
  M out(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const auto m = z.row(i).maxCoeff();
    const double lse = m + std::log((z.row(i).array() - m).exp().sum());
    out.row(i) = z.row(i).array() - lse;
  }
  return out;
}
}  // namespace detail

// Mean cross-entropy over the batch plus (weight_decay / 2) * sum of squared
// weights (biases are not decayed). A wider Scalar gives a finite-difference
// reference that is not limited by double rounding.
template <typename Scalar = double>
Scalar mlp_loss(const MlpParams& p, const Eigen::MatrixXd& x, std::span<const int> labels, double weight_decay) {
  const auto logp = detail::log_softmax(mlp_logits<Scalar>(p, x));
  Scalar ce = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) ce -= logp(i, labels[static_cast<std::size_t>(i)]);
  ce /= static_cast<Scalar>(x.rows());
  const Scalar l2 = p.w1.cast<Scalar>().squaredNorm() + p.w2.cast<Scalar>().squaredNorm() +
                    p.w3.cast<Scalar>().squaredNorm();
  return ce + Scalar(0.5) * static_cast<Scalar>(weight_decay) * l2;
}

// Analytic gradient of mlp_loss by backpropagation. Returns the loss too.
inline double mlp_gradient(const MlpParams& p, const Eigen::MatrixXd& x, std::span<const int> labels,
                           double weight_decay, MlpParams& grad) {
  const double n = static_cast<double>(x.rows());
  const Eigen::MatrixXd z1 = (x * p.w1.transpose()).rowwise() + p.b1.transpose();
  const Eigen::MatrixXd a1 = z1.cwiseMax(0.0);
  const Eigen::MatrixXd z2 = (a1 * p.w2.transpose()).rowwise() + p.b2.transpose();
  const Eigen::MatrixXd a2 = z2.cwiseMax(0.0);
  const Eigen::MatrixXd z3 = (a2 * p.w3.transpose()).rowwise() + p.b3.transpose();
  const Eigen::MatrixXd logp = detail::log_softmax(z3);

  Eigen::MatrixXd d3 = logp.array().exp();  // softmax - onehot, scaled by 1/n
  double ce = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    ce -= logp(i, y);
    d3(i, y) -= 1.0;
  }
  d3 /= n;
  ce /= n;

  grad.w3 = d3.transpose() * a2 + weight_decay * p.w3;
  grad.b3 = d3.colwise().sum().transpose();
  const Eigen::MatrixXd d2 = (d3 * p.w3).cwiseProduct((z2.array() > 0.0).cast<double>().matrix());
  grad.w2 = d2.transpose() * a1 + weight_decay * p.w2;
  grad.b2 = d2.colwise().sum().transpose();
  const Eigen::MatrixXd d1 = (d2 * p.w2).cwiseProduct((z1.array() > 0.0).cast<double>().matrix());
  grad.w1 = d1.transpose() * x + weight_decay * p.w1;
  grad.b1 = d1.colwise().sum().transpose();

  const double l2 = p.w1.squaredNorm() + p.w2.squaredNorm() + p.w3.squaredNorm();
  return ce + 0.5 * weight_decay * l2;
}

inline double mlp_accuracy(const MlpParams& p, const Dataset& data) {
  const Eigen::MatrixXd z = mlp_logits(p, data.x);
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const int pred = z(i, 1) > z(i, 0) ? 1 : 0;
    if (pred == data.labels[static_cast<std::size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(z.rows());
}

struct ToyData {
  Dataset train, test;
  std::uint64_t order_seed;
};

// Train set, test set and batch-order stream all derive from data_seed.
inline ToyData make_toy_data(const ToyTrainConfig& c) {
  Rng seeds(c.data_seed);
  const auto train_seed = seeds.next_u64();
  const auto test_seed = seeds.next_u64();
  const auto order_seed = seeds.next_u64();
  return {generate_blobs(train_seed, c.n_train, kToyInput, c.separation),
          generate_blobs(test_seed, c.n_test, kToyInput, c.separation), order_seed};
}

struct TrainOutcome {
  std::vector<store::RunRecord> records;
  MlpParams initial;
  MlpParams final;
  bool diverged = false;
  std::string failure;
};

// Mini-batch SGD with L2 weight decay. After each epoch the weights W1..W3
// are written to out_dir/<model_id>/epoch_NNN.gprb and a record is produced
// (weights_path relative to out_dir). Stops early on a non-finite loss.
inline TrainOutcome train_model(const ToyTrainConfig& config, const fs::path& out_dir) {
  validate(config);
  const std::string model_id = config.model_id.empty() ? default_model_id(config) : config.model_id;
  const auto data = make_toy_data(config);
  Rng order_rng(data.order_seed);

  TrainOutcome out;
  MlpParams params = init_mlp(config.hidden, config.init_seed);
  out.initial = params;
  MlpParams grad = params;

  fs::create_directories(out_dir / model_id);
  std::vector<Eigen::Index> order(config.n_train);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<Eigen::Index>(i);

  const auto n_in = static_cast<Eigen::Index>(kToyInput);
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    order_rng.shuffle(order.begin(), order.end());
    bool finite = true;
    for (std::size_t start = 0; start < order.size() && finite; start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      Eigen::MatrixXd xb(static_cast<Eigen::Index>(stop - start), n_in);
      std::vector<int> yb(stop - start);
      for (std::size_t k = start; k < stop; ++k) {
        xb.row(static_cast<Eigen::Index>(k - start)) = data.train.x.row(order[k]);
        yb[k - start] = data.train.labels[static_cast<std::size_t>(order[k])];
      }
      const double loss = mlp_gradient(params, xb, yb, config.weight_decay, grad);
      if (!std::isfinite(loss)) {
        finite = false;
        break;
      }
      params.w1 -= config.lr * grad.w1;
      params.b1 -= config.lr * grad.b1;
      params.w2 -= config.lr * grad.w2;
      params.b2 -= config.lr * grad.b2;
      params.w3 -= config.lr * grad.w3;
      params.b3 -= config.lr * grad.b3;
    }
    const bool params_finite = params.w1.allFinite() && params.w2.allFinite() && params.w3.allFinite() &&
                               params.b1.allFinite() && params.b2.allFinite() && params.b3.allFinite();
    if (!finite || !params_finite) {
      out.diverged = true;
      out.failure = model_id + ": loss became non-finite in epoch " + std::to_string(epoch);
      break;
    }

    std::ostringstream file;
    file << model_id << "/epoch_" << std::setw(3) << std::setfill('0') << epoch << ".gprb";
    store::write_container(params.weight_tensors(), out_dir / file.str());

    store::RunRecord r;
    r.model_id = model_id;
    r.epoch = epoch;
    r.optimizer = "sgd";
    r.dataset = "blobs";
    r.hyperparams = {{"lr", format_number(config.lr)},
                     {"weight_decay", format_number(config.weight_decay)},
                     {"hidden", std::to_string(config.hidden)},
                     {"init_seed", std::to_string(config.init_seed)},
                     {"data_seed", std::to_string(config.data_seed)}};
    r.train_accuracy = mlp_accuracy(params, data.train);
    r.test_accuracy = mlp_accuracy(params, data.test);
    r.weights_path = file.str();
    out.records.push_back(std::move(r));
  }
  out.final = params;
  return out;
}

// Trains one model and writes out_dir/manifest.jsonl. On divergence the
// records up to the last finite epoch are kept and DivergenceDetected thrown.
inline std::vector<store::RunRecord> train_toy(const ToyTrainConfig& config, const fs::path& out_dir) {
  auto outcome = train_model(config, out_dir);
  const fs::path manifest = out_dir / kManifestName;
  reset_manifest(manifest);
  for (const auto& r : outcome.records) store::append_record(manifest, r);
  if (outcome.diverged) throw Error(ErrorCode::DivergenceDetected, outcome.failure);
  return std::move(outcome.records);
}

inline constexpr std::size_t kMaxGridCells = 512;

// Default acceptance grid: 5 learning rates x 3 weight decays x 2 widths x 2 seeds.
inline constexpr std::array<double, 5> kDefaultGridLrs = {0.003, 0.01, 0.03, 0.1, 0.3};
inline constexpr std::array<double, 3> kDefaultGridWds = {1e-2, 3e-2, 1e-1};
inline constexpr std::array<std::size_t, 2> kDefaultGridWidths = {24, 32};
inline constexpr std::array<std::uint64_t, 2> kDefaultGridSeeds = {1, 2};

struct GridResult {
  fs::path manifest;
  std::size_t models = 0;
  std::vector<std::string> failures;  // one line per diverged or failed cell
};

// Cartesian product lr x weight_decay x hidden x init_seed over a base
// configuration. Cells train independently (in parallel when allowed) and
// their records are merged into one manifest in grid order.
inline GridResult grid_family(std::span<const double> lrs, std::span<const double> wds,
                              std::span<const std::size_t> widths, std::span<const std::uint64_t> seeds,
                              const fs::path& out_dir, const ToyTrainConfig& base = {}) {
  if (lrs.empty() || wds.empty() || widths.empty() || seeds.empty()) {
    throw Error(ErrorCode::InvalidArgument, "grid option lists must be non-empty");
  }
  const std::size_t cells = lrs.size() * wds.size() * widths.size() * seeds.size();
  if (cells > kMaxGridCells) throw Error(ErrorCode::InvalidArgument, "grid exceeds 512 cells");

  std::vector<ToyTrainConfig> configs;
  for (double lr : lrs)
    for (double wd : wds)
      for (std::size_t h : widths)
        for (std::uint64_t seed : seeds) {
          ToyTrainConfig c = base;
          c.lr = lr;
          c.weight_decay = wd;
          c.hidden = h;
          c.init_seed = seed;
          c.model_id = default_model_id(c);
          configs.push_back(c);
        }

  fs::create_directories(out_dir);
  std::vector<TrainOutcome> outcomes(configs.size());
  std::vector<std::string> errors(configs.size());
  parallel_for(configs.size(), [&](std::size_t i) {
    try {
      outcomes[i] = train_model(configs[i], out_dir);
    } catch (const std::exception& e) {
      errors[i] = configs[i].model_id + ": " + e.what();
    }
  });

  GridResult result;
  result.manifest = out_dir / kManifestName;
  reset_manifest(result.manifest);
  for (std::size_t i = 0; i < configs.size(); ++i) {
    for (const auto& r : outcomes[i].records) store::append_record(result.manifest, r);
    if (!errors[i].empty()) result.failures.push_back(errors[i]);
    else if (outcomes[i].diverged) result.failures.push_back(outcomes[i].failure);
    else ++result.models;
  }
  return result;
}

}  // namespace genprobe::families
