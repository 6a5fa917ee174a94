#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "ser/commands.hpp"
#include "ser/runtime.hpp"

namespace {

using namespace ser;

struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs, batch_size, jobs, k, budget, n_classes;
  std::optional<double> lr;
  std::optional<std::string> variant, eca_mode, scope;
  bool no_augment = false;

  void attach(CLI::App* app) {
    app->add_option("-c,--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
    app->add_option("--seed", seed, "Master seed");
    app->add_option("--epochs", epochs, "Training epochs");
    app->add_option("--batch-size", batch_size, "Minibatch size");
    app->add_option("--lr", lr, "Adam learning rate");
    app->add_option("--jobs", jobs, "Worker threads for folds and trials");
    app->add_option("--k", k, "Number of folds");
    app->add_option("--budget", budget, "Number of tuning trials");
    app->add_option("--n-classes", n_classes, "Output classes");
    app->add_option("--variant", variant, "full|no_eca|no_gfb|one_gfb|no_eca_no_gfb");
    app->add_option("--eca-mode", eca_mode, "table1|eq4");
    app->add_option("--scope", scope, "train_only|paper_faithful");
    app->add_flag("--no-augment", no_augment, "Skip augmentation");
  }

  config::RunConfig resolve() const {
    config::RunConfig c = config_path.empty() ? config::RunConfig{} : config::load_run_config(config_path);
    if (seed) c.seed = *seed;
    if (epochs) c.train.epochs = *epochs;
    if (batch_size) c.train.batch_size = *batch_size;
    if (lr) c.train.lr = *lr;
    if (jobs) c.jobs = *jobs;
    if (k) c.split.k = *k;
    if (budget) c.tune_budget = *budget;
    if (n_classes) c.model.n_classes = *n_classes;
    if (variant) c.model.variant = model::parse_variant(*variant);
    if (eca_mode) c.model.eca_mode = model::parse_eca_mode(*eca_mode);
    if (scope) c.split.augment_scope = eval::parse_augment_scope(*scope);
    if (no_augment) c.augment_enabled = false;
    c.propagate_seed();
    c.validate();
    return c;
  }
};

void print_report(const eval::EvalReport& r) {
  std::cout << "samples " << r.n_samples << "\naccuracy " << r.accuracy << "\nprecision " << r.precision
            << "\nrecall " << r.recall << "\nf1 " << r.f1 << '\n';
}

void print_failures(const cli::FeatureRun& run) {
  for (const auto& f : run.failures) std::cerr << "skipped " << f << '\n';
  std::cout << run.inputs << " inputs, " << run.rows << " rows\n";
}

}  // namespace

int main(int argc, char** argv) {
  ser::configure_allocator();
  CLI::App app{"Speech emotion recognition: features, training and evaluation"};
  app.require_subcommand(1);

  cli::SynthOptions synth;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic labelled WAV set and manifest");
  synth_cmd->add_option("--n-per-class", synth.n_per_class)->capture_default_str();
  synth_cmd->add_option("--classes", synth.classes)->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed)->capture_default_str();
  synth_cmd->add_option("--duration", synth.duration_s, "Clip length in seconds")->capture_default_str();
  synth_cmd->add_option("-o,--out", synth.out_dir)->required();

  Overrides ov;
  std::string manifest, features, out, checkpoint;

  auto* features_cmd = app.add_subcommand("features", "Extract 150-wide feature rows from a manifest");
  features_cmd->add_option("-m,--manifest", manifest)->required()->check(CLI::ExistingFile);
  features_cmd->add_option("-o,--out", out, "Output CSV")->required();

  auto* augment_cmd = app.add_subcommand("augment", "Write the six augmented variants of every clip");
  augment_cmd->add_option("-m,--manifest", manifest)->required()->check(CLI::ExistingFile);
  augment_cmd->add_option("-o,--out", out, "Output directory")->required();

  auto* train_cmd = app.add_subcommand("train", "Holdout training with test evaluation");
  auto* kfold_cmd = app.add_subcommand("kfold", "k-fold cross-validation");
  auto* tune_cmd = app.add_subcommand("tune", "Random hyperparameter search");
  for (auto* cmd : {train_cmd, kfold_cmd, tune_cmd}) {
    cmd->add_option("-f,--features", features)->required()->check(CLI::ExistingFile);
    cmd->add_option("-o,--out", out, "Output directory")->required();
  }

  auto* eval_cmd = app.add_subcommand("evaluate", "Score a checkpoint on a feature file");
  eval_cmd->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("-f,--features", features)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("-o,--out", out, "Output directory")->required();

  auto* params_cmd = app.add_subcommand("params", "Per-block parameter counts");

  for (auto* cmd : {features_cmd, augment_cmd, train_cmd, kfold_cmd, tune_cmd, eval_cmd, params_cmd}) ov.attach(cmd);

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth_cmd->parsed()) {
      std::cout << cli::cmd_synth(synth).string() << '\n';
    } else if (features_cmd->parsed()) {
      print_failures(cli::cmd_features(manifest, ov.resolve(), out));
    } else if (augment_cmd->parsed()) {
      print_failures(cli::cmd_augment(manifest, ov.resolve(), out));
    } else if (train_cmd->parsed()) {
      print_report(cli::cmd_train(features, ov.resolve(), out));
    } else if (kfold_cmd->parsed()) {
      const auto s = cli::cmd_kfold(features, ov.resolve(), out);
      for (std::size_t f = 0; f < s.folds.size(); ++f) std::cout << "fold " << f + 1 << " accuracy " << s.folds[f].accuracy << '\n';
      std::cout << "mean accuracy " << s.mean_accuracy << "\nmean precision " << s.mean_precision << "\nmean recall "
                << s.mean_recall << "\nmean f1 " << s.mean_f1 << '\n';
    } else if (eval_cmd->parsed()) {
      print_report(cli::cmd_evaluate(checkpoint, features, ov.resolve(), out));
    } else if (params_cmd->parsed()) {
      std::cout << cli::cmd_params(ov.resolve().model);
    } else if (tune_cmd->parsed()) {
      const auto r = cli::cmd_tune(features, ov.resolve(), out);
      std::cout << "best trial " << r.best << " score " << r.trials[r.best].score << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
