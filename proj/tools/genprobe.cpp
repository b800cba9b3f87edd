// genprobe: probe layer quality metrics from weight containers and evaluate
// their rank correlation with accuracy across model families.

#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "genprobe/cli.hpp"

namespace {

using namespace genprobe;

std::vector<std::pair<std::size_t, std::size_t>> parse_shapes(const std::string& text) {
  std::vector<std::pair<std::size_t, std::size_t>> shapes;
  for (const auto& item : cli::split_list(text)) {
    const auto x = item.find('x');
    if (x == std::string::npos) throw CLI::ValidationError("--shapes", "expected MxN entries, got '" + item + "'");
    shapes.emplace_back(std::stoul(item.substr(0, x)), std::stoul(item.substr(x + 1)));
  }
  return shapes;
}

void add_train_flags(CLI::App* cmd, families::ToyTrainConfig& c, bool with_grid_axes) {
  if (!with_grid_axes) {
    cmd->add_option("--hidden", c.hidden, "hidden width")->capture_default_str();
    cmd->add_option("--lr", c.lr, "learning rate")->capture_default_str();
    cmd->add_option("--weight-decay", c.weight_decay, "L2 weight decay")->capture_default_str();
    cmd->add_option("--init-seed", c.init_seed, "weight initialization seed")->required();
    cmd->add_option("--model-id", c.model_id, "model identifier (default: derived from config)");
  }
  cmd->add_option("--epochs", c.epochs, "training epochs")->capture_default_str();
  cmd->add_option("--batch-size", c.batch_size, "mini-batch size")->capture_default_str();
  cmd->add_option("--n-train", c.n_train, "training samples")->capture_default_str();
  cmd->add_option("--n-test", c.n_test, "test samples")->capture_default_str();
  cmd->add_option("--separation", c.separation, "distance between blob means")->capture_default_str();
  cmd->add_option("--data-seed", c.data_seed, "dataset and batch-order seed")->required();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"genprobe: probeable generalization measures from saved weights"};
  app.require_subcommand(1);

  // probe
  cli::ProbeOptions probe;
  std::string probe_metrics, probe_out;
  auto* probe_cmd = app.add_subcommand("probe", "per-layer and model-level metrics of one container");
  probe_cmd->add_option("--weights", probe.weights, "container path")->required();
  probe_cmd->add_flag("--lrf", probe.lrf, "apply EVBMF low-rank factorization first");
  probe_cmd->add_option("--metrics", probe_metrics, "comma list of SQ_p,E_L2,F_p,S_p (default all)");
  auto* json_flag = probe_cmd->add_flag("--json", "JSON output (default)");
  auto* csv_flag = probe_cmd->add_flag("--csv", probe.csv, "CSV output");
  json_flag->excludes(csv_flag);
  probe_cmd->add_option("--out", probe_out, "write to file instead of stdout");

  // evaluate
  cli::EvaluateOptions eval;
  std::string eval_group, eval_metrics, eval_targets = "test_accuracy,generalization_gap";
  auto* eval_cmd = app.add_subcommand("evaluate", "grouped Spearman correlations over a run manifest");
  eval_cmd->add_option("--manifest", eval.manifest, "JSON-lines run manifest")->required();
  eval_cmd->add_option("--group-by", eval_group, "comma list of grouping keys (e.g. epoch,optimizer)");
  eval_cmd->add_option("--metrics", eval_metrics, "comma list of metric ids (default all)");
  eval_cmd->add_option("--targets", eval_targets, "test_accuracy and/or generalization_gap")->capture_default_str();
  eval_cmd->add_flag("--lrf", eval.lrf, "use LRF-preprocessed metrics");
  eval_cmd->add_flag("!--no-svg", eval.svg, "skip SVG charts");
  eval_cmd->add_option("--out", eval.out_dir, "report directory")->required();

  // synth
  families::SpectrumFamilySpec spec;
  std::string synth_shapes = "16x32,32x32,8x32", synth_link = "linear", synth_out;
  auto* synth_cmd = app.add_subcommand("synth", "synthetic spectrum family with a planted accuracy link");
  synth_cmd->add_option("--n-models", spec.n_models, "number of models")->capture_default_str();
  synth_cmd->add_option("--shapes", synth_shapes, "comma list of layer shapes MxN")->capture_default_str();
  synth_cmd->add_option("--decay-low", spec.decay_low, "lowest power-law exponent")->capture_default_str();
  synth_cmd->add_option("--decay-high", spec.decay_high, "highest power-law exponent")->capture_default_str();
  synth_cmd->add_option("--link", synth_link, "linear | negated | quadratic | noisy")->capture_default_str();
  synth_cmd->add_option("--noise-sigma", spec.noise_sigma, "noise level for the noisy link")->capture_default_str();
  synth_cmd->add_option("--seed", spec.seed, "generator seed")->required();
  synth_cmd->add_option("--out", synth_out, "output directory")->required();

  // train-toy
  families::ToyTrainConfig toy;
  std::string toy_out;
  auto* toy_cmd = app.add_subcommand("train-toy", "train one toy MLP, saving weights every epoch");
  add_train_flags(toy_cmd, toy, false);
  toy_cmd->add_option("--out", toy_out, "output directory")->required();

  // grid
  cli::GridOptions grid;
  std::string grid_out;
  auto* grid_cmd = app.add_subcommand("grid", "train a hyperparameter grid of toy MLPs");
  grid.lrs.assign(families::kDefaultGridLrs.begin(), families::kDefaultGridLrs.end());
  grid.wds.assign(families::kDefaultGridWds.begin(), families::kDefaultGridWds.end());
  grid.widths.assign(families::kDefaultGridWidths.begin(), families::kDefaultGridWidths.end());
  grid.seeds.assign(families::kDefaultGridSeeds.begin(), families::kDefaultGridSeeds.end());
  grid_cmd->add_option("--lrs", grid.lrs, "learning rates")->delimiter(',')->capture_default_str();
  grid_cmd->add_option("--wds", grid.wds, "weight decays")->delimiter(',')->capture_default_str();
  grid_cmd->add_option("--widths", grid.widths, "hidden widths")->delimiter(',')->capture_default_str();
  grid_cmd->add_option("--seeds", grid.seeds, "initialization seeds")->delimiter(',')->capture_default_str();
  add_train_flags(grid_cmd, grid.base, true);
  grid_cmd->add_option("--out", grid_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? cli::kOk : cli::kUsage;
  }

  try {
    if (*probe_cmd) {
      probe.metrics = cli::split_list(probe_metrics);
      if (!probe_out.empty()) probe.out = probe_out;
      return cli::cmd_probe(probe, std::cout, std::cerr);
    }
    if (*eval_cmd) {
      eval.group_by = cli::split_list(eval_group);
      eval.metrics = cli::split_list(eval_metrics);
      eval.targets = cli::split_list(eval_targets);
      return cli::cmd_evaluate(eval, std::cout, std::cerr);
    }
    if (*synth_cmd) {
      spec.layer_shapes = parse_shapes(synth_shapes);
      spec.link = families::parse_link(synth_link);
      return cli::cmd_synth(spec, synth_out, std::cout, std::cerr);
    }
    if (*toy_cmd) return cli::cmd_train_toy(toy, toy_out, std::cout, std::cerr);
    if (*grid_cmd) {
      grid.out_dir = grid_out;
      return cli::cmd_grid(grid, std::cout, std::cerr);
    }
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return cli::kUsage;
  }
  return cli::kUsage;
}
