#pragma once

// Command implementations behind the `genprobe` tool. Each command takes a
// plain options struct and output streams and returns the process exit code,
// so the same code path is exercised by the binary and by in-process tests.
//
// Exit codes: 0 ok, 1 usage/other error, 2 container or manifest format
// error, 3 no probeable layers, 4 more than 10% of records failed,
// 5 training diverged.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "genprobe/error.hpp"
#include "genprobe/families.hpp"
#include "genprobe/metrics.hpp"
#include "genprobe/parallel.hpp"
#include "genprobe/stats.hpp"
#include "genprobe/store.hpp"
#include "genprobe/svg.hpp"

namespace genprobe::cli {

namespace fs = std::filesystem;

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kFormatError = 2,
  kNoLayers = 3,
  kTooManyFailures = 4,
  kDiverged = 5,
};

inline bool is_format_error(ErrorCode c) {
  switch (c) {
    case ErrorCode::BadMagic:
    case ErrorCode::UnsupportedVersion:
    case ErrorCode::CorruptIndex:
    case ErrorCode::TruncatedPayload:
    case ErrorCode::IoError:
    case ErrorCode::NonFinite:
    case ErrorCode::ParseError:
    case ErrorCode::DuplicateKey:
    case ErrorCode::ScaleMixing:
    case ErrorCode::DuplicateName:
    case ErrorCode::LengthMismatch:
    case ErrorCode::UnsupportedShape:
      return true;
    default:
      return false;
  }
}

// Splits "a,b,c"; empty input gives an empty list.
inline std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline std::vector<MetricId> resolve_metrics(const std::vector<std::string>& names, bool lrf) {
  std::vector<MetricId> out;
  if (names.empty()) {
    for (auto m : kAllMeasures) out.push_back({m, lrf});
  }
  for (const auto& n : names) {
    auto id = MetricId::parse(n);
    if (lrf) id.lrf = true;
    if (std::find(out.begin(), out.end(), id) == out.end()) out.push_back(id);
  }
  return out;
}

inline std::uint64_t content_hash(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a
  for (auto b : bytes) {
    h ^= b;
    h *= 1099511628211ull;
  }
  return h;
}

// ---------------------------------------------------------------------------
// probe

struct ProbeOptions {
  fs::path weights;
  bool lrf = false;
  std::vector<std::string> metrics;  // empty = all four
  bool csv = false;
  std::optional<fs::path> out;
};

inline nlohmann::json probe_json(const ModelProbe& probe, const std::vector<MetricId>& ids) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : probe.layers) {
    layers.push_back({{"name", l.layer_name},
                      {"sq", l.sq},
                      {"er", l.er},
                      {"fro", l.fro},
                      {"spec", l.spec},
                      {"lrf_applied", l.lrf_applied},
                      {"degenerate", l.degenerate}});
  }
  nlohmann::json model = nlohmann::json::object();
  for (const auto& id : ids) model[id.str()] = metric_value(probe.model, id.measure);
  return {{"layers", layers}, {"model", model}, {"depth", probe.model.depth}, {"lrf", probe.model.lrf_applied},
          {"skipped", probe.skipped}};
}

inline int cmd_probe(const ProbeOptions& opt, std::ostream& out, std::ostream& err) {
  std::vector<MetricId> ids;
  try {
    ids = resolve_metrics(opt.metrics, opt.lrf);
    for (const auto& id : ids) {
      if (id.lrf != opt.lrf) throw Error(ErrorCode::InvalidArgument, "lrf. metrics require --lrf");
    }
  } catch (const Error& e) {
    err << e.what() << "\n";
    return kUsage;
  }

  std::vector<WeightTensor> tensors;
  try {
    tensors = store::read_container(opt.weights);
  } catch (const Error& e) {
    err << e.name() << ": " << e.what() << "\n";
    return kFormatError;
  }

  ModelProbe probe;
  try {
    probe = probe_model(tensors, opt.lrf);
  } catch (const Error& e) {
    err << e.name() << ": " << e.what() << "\n";
    return e.code() == ErrorCode::EmptyModel ? kNoLayers : kUsage;
  }
  for (const auto& l : probe.layers) {
    if (l.degenerate) err << "warning: layer " << l.layer_name << " is degenerate after LRF and was excluded\n";
  }

  std::ostringstream text;
  if (opt.csv) {
    text << "scope,name,metric,value\n";
    for (const auto& l : probe.layers) {
      for (auto [key, v] : {std::pair{"sq", l.sq}, {"er", l.er}, {"fro", l.fro}, {"spec", l.spec}}) {
        text << "layer," << l.layer_name << "," << key << "," << families::format_number(v) << "\n";
      }
    }
    for (const auto& id : ids) {
      text << "model,," << id.str() << "," << families::format_number(metric_value(probe.model, id.measure)) << "\n";
    }
  } else {
    text << probe_json(probe, ids).dump(2) << "\n";
  }

  if (opt.out) {
    std::ofstream f(*opt.out, std::ios::binary | std::ios::trunc);
    if (!f) {
      err << "IoError: cannot write '" << opt.out->string() << "'\n";
      return kUsage;
    }
    f << text.str();
  } else {
    out << text.str();
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateOptions {
  fs::path manifest;
  std::vector<std::string> group_by;
  std::vector<std::string> metrics;  // empty = all four
  std::vector<std::string> targets = {"test_accuracy", "generalization_gap"};
  bool lrf = false;
  fs::path out_dir;
  bool svg = true;
};

inline std::map<std::string, std::string> record_keys(const store::RunRecord& r) {
  std::map<std::string, std::string> keys = r.hyperparams;
  keys["model_id"] = r.model_id;
  keys["epoch"] = std::to_string(r.epoch);
  keys["optimizer"] = r.optimizer;
  keys["dataset"] = r.dataset;
  return keys;
}

inline std::string file_safe(const std::string& s) {
  std::string out;
  for (char c : s) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '.' ||
                    c == '-' || c == '_';
    out += ok ? c : '_';
  }
  return out;
}

inline std::string group_slug(const stats::GroupKey& key) {
  if (key.empty()) return "all";
  std::string out;
  for (const auto& [k, v] : key) {
    if (!out.empty()) out += "_";
    out += k + "-" + v;
  }
  return file_safe(out);
}

struct Evaluation {
  std::vector<stats::Observation> observations;
  std::vector<store::RunRecord> records;  // aligned with observations
  stats::GroupedResult result;
  std::size_t failed = 0;
};

// Metrics for every manifest record, computed once per distinct container
// content and LRF setting. Records that fail are counted and reported.
inline Evaluation evaluate_manifest(const EvaluateOptions& opt, std::ostream& err) {
  const auto records = store::read_manifest(opt.manifest);
  const auto ids = resolve_metrics(opt.metrics, opt.lrf);
  bool need_raw = false, need_lrf = false;
  for (const auto& id : ids) (id.lrf ? need_lrf : need_raw) = true;
  std::vector<std::string> id_names;
  for (const auto& id : ids) id_names.push_back(id.str());
  std::vector<stats::Target> targets;
  for (const auto& t : opt.targets) targets.push_back(stats::parse_target(t));

  struct Slot {
    std::optional<stats::Observation> obs;
    std::string error;
  };
  std::vector<Slot> slots(records.size());
  std::map<std::pair<std::uint64_t, bool>, ModelMetrics> cache;
  std::mutex cache_mutex;

  const auto metrics_for = [&](std::span<const std::uint8_t> bytes, bool lrf) {
    const auto key = std::pair{content_hash(bytes), lrf};
    {
      std::lock_guard lock(cache_mutex);
      if (auto it = cache.find(key); it != cache.end()) return it->second;
    }
    const auto tensors = store::decode_container(bytes);
    const auto model = probe_model(tensors, lrf).model;
    std::lock_guard lock(cache_mutex);
    cache.emplace(key, model);
    return model;
  };

  parallel_for(records.size(), [&](std::size_t i) {
    const auto& r = records[i];
    try {
      const auto bytes = store::detail::read_file(store::resolve_weights(opt.manifest, r));
      stats::Observation obs;
      obs.keys = record_keys(r);
      obs.train_accuracy = r.train_accuracy;
      obs.test_accuracy = r.test_accuracy;
      std::optional<ModelMetrics> raw, low;
      if (need_raw) raw = metrics_for(bytes, false);
      if (need_lrf) low = metrics_for(bytes, true);
      for (const auto& id : ids) obs.metrics[id.str()] = metric_value(id.lrf ? *low : *raw, id.measure);
      slots[i].obs = std::move(obs);
    } catch (const std::exception& e) {
      slots[i].error = e.what();
    }
  });

  Evaluation ev;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (slots[i].obs) {
      ev.observations.push_back(std::move(*slots[i].obs));
      ev.records.push_back(records[i]);
    } else {
      ++ev.failed;
      err << "warning: skipping record (" << records[i].model_id << ", " << records[i].epoch
          << "): " << slots[i].error << "\n";
    }
  }
  if (ev.failed * 10 > records.size()) return ev;
  ev.result = stats::grouped_correlations(ev.observations, opt.group_by, id_names, targets);
  for (const auto& w : ev.result.warnings) {
    err << "warning: skipped cell group=" << stats::describe(w.group_key) << " metric=" << w.metric_id
        << " target=" << stats::target_name(w.target) << ": " << w.reason << "\n";
  }
  return ev;
}

inline std::string correlations_csv(const stats::GroupedResult& result, const std::vector<std::string>& group_by) {
  std::ostringstream csv;
  for (const auto& k : group_by) csv << k << ",";
  csv << "metric_id,target,rho,n\n";
  for (const auto& c : result.cells) {
    for (const auto& [k, v] : c.group_key) csv << v << ",";
    csv << c.metric_id << "," << stats::target_name(c.target) << "," << families::format_number(c.rho) << ","
        << c.n << "\n";
  }
  return csv.str();
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::IoError, "cannot write '" + path.string() + "'");
  f << text;
  if (!f) throw Error(ErrorCode::IoError, "write failed for '" + path.string() + "'");
}

// Scatter of target vs metric per cell, and, when grouping by epoch, rho vs
// epoch with one curve per metric for each target and remaining group key.
inline void write_charts(const Evaluation& ev, const EvaluateOptions& opt) {
  const fs::path scatter_dir = opt.out_dir / "scatter";
  const fs::path evolution_dir = opt.out_dir / "evolution";
  fs::remove_all(scatter_dir);
  fs::remove_all(evolution_dir);
  fs::create_directories(scatter_dir);

  std::map<stats::GroupKey, std::vector<const stats::Observation*>, stats::GroupKeyLess> members;
  for (const auto& o : ev.observations) {
    stats::GroupKey key;
    for (const auto& g : opt.group_by) key.emplace_back(g, o.keys.at(g));
    members[key].push_back(&o);
  }
  for (const auto& c : ev.result.cells) {
    std::vector<std::pair<double, double>> pts;
    for (const auto* o : members[c.group_key]) pts.emplace_back(o->metrics.at(c.metric_id), o->target(c.target));
    const std::string title = stats::describe(c.group_key) + "  rho=" + families::format_number(c.rho);
    write_text(scatter_dir / (group_slug(c.group_key) + "__" + file_safe(c.metric_id) + "__" +
                              std::string(stats::target_name(c.target)) + ".svg"),
               svg::scatter(title, c.metric_id, std::string(stats::target_name(c.target)), pts));
  }

  const auto epoch_pos = std::find(opt.group_by.begin(), opt.group_by.end(), "epoch");
  if (epoch_pos == opt.group_by.end()) return;
  fs::create_directories(evolution_dir);
  // (rest-of-key, target) -> metric -> points
  std::map<std::pair<std::string, std::string>, std::map<std::string, svg::Series>> charts;
  for (const auto& c : ev.result.cells) {
    stats::GroupKey rest;
    double epoch = 0;
    for (const auto& [k, v] : c.group_key) {
      if (k == "epoch") epoch = std::stod(v);
      else rest.emplace_back(k, v);
    }
    auto& series = charts[{rest.empty() ? std::string("all") : group_slug(rest),
                           std::string(stats::target_name(c.target))}][c.metric_id];
    series.label = c.metric_id;
    series.points.emplace_back(epoch, c.rho);
  }
  for (const auto& [key, by_metric] : charts) {
    std::vector<svg::Series> series;
    for (const auto& [metric, s] : by_metric) series.push_back(s);
    write_text(evolution_dir / ("evolution__" + key.first + "__" + key.second + ".svg"),
               svg::lines("Spearman vs epoch (" + key.second + ")", "epoch", "rho", series, {-1.0, 1.0}));
  }
}

inline int cmd_evaluate(const EvaluateOptions& opt, std::ostream& out, std::ostream& err) {
  Evaluation ev;
  try {
    ev = evaluate_manifest(opt, err);
  } catch (const Error& e) {
    err << e.name() << ": " << e.what() << "\n";
    return is_format_error(e.code()) ? kFormatError : kUsage;
  }
  const std::size_t total = ev.failed + ev.observations.size();
  if (ev.failed * 10 > total) {
    err << "error: " << ev.failed << " of " << total << " records failed\n";
    return kTooManyFailures;
  }
  try {
    fs::create_directories(opt.out_dir);
    write_text(opt.out_dir / "correlations.csv", correlations_csv(ev.result, opt.group_by));

    std::ostringstream metrics_csv;
    metrics_csv << "model_id,epoch";
    std::vector<std::string> names;
    if (!ev.observations.empty()) {
      for (const auto& [name, v] : ev.observations.front().metrics) names.push_back(name);
    }
    for (const auto& n : names) metrics_csv << "," << n;
    metrics_csv << ",train_accuracy,test_accuracy\n";
    for (std::size_t i = 0; i < ev.observations.size(); ++i) {
      metrics_csv << ev.records[i].model_id << "," << ev.records[i].epoch;
      for (const auto& n : names) metrics_csv << "," << families::format_number(ev.observations[i].metrics.at(n));
      metrics_csv << "," << families::format_number(ev.records[i].train_accuracy) << ","
                  << families::format_number(ev.records[i].test_accuracy) << "\n";
    }
    write_text(opt.out_dir / "metrics.csv", metrics_csv.str());
    if (opt.svg) write_charts(ev, opt);
  } catch (const std::exception& e) {
    err << e.what() << "\n";
    return kUsage;
  }
  out << "wrote " << ev.result.cells.size() << " correlation cells to "
      << (opt.out_dir / "correlations.csv").string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// families wrappers

inline int cmd_synth(const families::SpectrumFamilySpec& spec, const fs::path& out_dir, std::ostream& out,
                     std::ostream& err) {
  try {
    const auto manifest = families::synth_family(spec, out_dir);
    out << "wrote " << spec.n_models << " containers and " << manifest.string() << "\n";
    return kOk;
  } catch (const std::exception& e) {
    err << e.what() << "\n";
    return kUsage;
  }
}

inline int cmd_train_toy(const families::ToyTrainConfig& config, const fs::path& out_dir, std::ostream& out,
                         std::ostream& err) {
  try {
    const auto records = families::train_toy(config, out_dir);
    out << "wrote " << records.size() << " records to " << (out_dir / families::kManifestName).string() << "\n";
    return kOk;
  } catch (const Error& e) {
    err << e.name() << ": " << e.what() << "\n";
    return e.code() == ErrorCode::DivergenceDetected ? kDiverged : kUsage;
  }
}

struct GridOptions {
  std::vector<double> lrs;
  std::vector<double> wds;
  std::vector<std::size_t> widths;
  std::vector<std::uint64_t> seeds;
  families::ToyTrainConfig base;
  fs::path out_dir;
};

inline int cmd_grid(const GridOptions& opt, std::ostream& out, std::ostream& err) {
  try {
    const auto result = families::grid_family(opt.lrs, opt.wds, opt.widths, opt.seeds, opt.out_dir, opt.base);
    for (const auto& f : result.failures) err << "warning: grid cell failed: " << f << "\n";
    out << "trained " << result.models << " models; manifest " << result.manifest.string() << "\n";
    return kOk;
  } catch (const std::exception& e) {
    err << e.what() << "\n";
    return kUsage;
  }
}

}  // namespace genprobe::cli
