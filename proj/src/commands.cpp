#include "ser/commands.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "ser/audio_io.hpp"
#include "ser/checkpoint.hpp"
#include "ser/dataset.hpp"

namespace ser::cli {

namespace {

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

void prepare_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw std::runtime_error(dir.string() + ": cannot create output directory");
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error(path.string() + ": cannot open for writing");
  return os;
}

// Declared outputs must exist, be non-empty and, for JSON, parse.
void verify_outputs(const std::vector<fs::path>& paths) {
  for (const auto& p : paths) {
    std::error_code ec;
    if (!fs::is_regular_file(p, ec) || fs::file_size(p, ec) == 0) throw std::runtime_error(p.string() + ": output missing or empty");
    if (p.extension() == ".json") config::read_json(p);
  }
}

data::Dataset load_features(const fs::path& path, const config::RunConfig& config) {
  auto ds = data::read_feature_csv(path);
  if (ds.width != config.model.input_len) {
    throw config::ConfigError("model.input_len: " + std::to_string(config.model.input_len) + " but " + path.string() +
                              " has " + std::to_string(ds.width) + " features");
  }
  if (ds.n_classes() != config.model.n_classes) {
    throw config::ConfigError("model.n_classes: " + std::to_string(config.model.n_classes) + " but " + path.string() +
                              " has " + std::to_string(ds.n_classes()) + " labels");
  }
  return ds;
}

fs::path resolve(const fs::path& manifest, const fs::path& entry) {
  return entry.is_absolute() ? entry : manifest.parent_path() / entry;
}

void write_curves(const std::vector<eval::EpochRecord>& curves, const fs::path& path) {
  auto os = open_out(path);
  os << "epoch,train_loss,train_acc,val_loss,val_acc\n";
  for (const auto& r : curves) {
    os << r.epoch << ',' << ad::format_double(r.train_loss) << ',' << ad::format_double(r.train_acc) << ','
       << ad::format_double(r.val_loss) << ',' << ad::format_double(r.val_acc) << '\n';
  }
}

void write_confusion(const eval::EvalReport& r, const fs::path& path) {
  auto os = open_out(path);
  os << "true\\predicted";
  for (const auto& n : r.label_names) os << ',' << n;
  os << '\n';
  for (std::size_t c = 0; c < r.confusion.size(); ++c) {
    os << (c < r.label_names.size() ? r.label_names[c] : std::to_string(c));
    for (std::size_t v : r.confusion[c]) os << ',' << v;
    os << '\n';
  }
}

void write_roc(const eval::EvalReport& r, const fs::path& path) {
  auto os = open_out(path);
  os << "class,fpr,tpr\n";
  for (std::size_t c = 0; c < r.roc.size(); ++c) {
    const auto& roc = r.roc[c];
    const std::string name = c < r.label_names.size() ? r.label_names[c] : std::to_string(c);
    for (std::size_t k = 0; k < roc.fpr.size(); ++k) {
      os << name << ',' << ad::format_double(roc.fpr[k]) << ',' << ad::format_double(roc.tpr[k]) << '\n';
    }
  }
}

// report.json, confusion.csv, roc.csv and, when curves exist, curves.csv.
std::vector<fs::path> write_report(const eval::EvalReport& report, const fs::path& dir) {
  auto j = config::to_json(report);
  j[kTimestampField] = utc_timestamp();
  std::vector<fs::path> out{dir / "report.json", dir / "confusion.csv", dir / "roc.csv"};
  config::write_json(j, out[0]);
  write_confusion(report, out[1]);
  write_roc(report, out[2]);
  if (!report.curves.empty()) {
    out.push_back(dir / "curves.csv");
    write_curves(report.curves, out.back());
  }
  return out;
}

fs::path echo_config(const config::RunConfig& config, const fs::path& dir) {
  const auto path = dir / "config.json";
  config::write_json(config::to_json(config), path);
  return path;
}

}  // namespace

fs::path cmd_synth(const SynthOptions& o) {
  if (o.n_per_class < 1) throw std::invalid_argument("synth: n_per_class must be at least 1");
  const auto& names = audio::synth_label_names();
  if (o.classes < 2 || o.classes > names.size()) {
    throw std::invalid_argument("synth: classes must be between 2 and " + std::to_string(names.size()));
  }
  prepare_dir(o.out_dir / "wav");
  std::vector<audio::ManifestEntry> entries;
  for (std::size_t c = 0; c < o.classes; ++c) {
    for (std::size_t i = 0; i < o.n_per_class; ++i) {
      const auto clip = audio::synth_clip(static_cast<int>(c), o.seed + i, o.duration_s);
      const fs::path rel = fs::path("wav") / (clip.source_id + ".wav");
      audio::write_wav(o.out_dir / rel, clip, audio::WavFormat::pcm16);
      entries.push_back({rel, *clip.label});
    }
  }
  const auto manifest = o.out_dir / "manifest.csv";
  audio::write_manifest(audio::make_manifest(std::move(entries)), manifest);
  verify_outputs({manifest});
  return manifest;
}

FeatureRun cmd_features(const fs::path& manifest_path, const config::RunConfig& config, const fs::path& out_csv) {
  const auto manifest = audio::read_manifest(manifest_path);
  const dsp::FeatureExtractor extractor(config.extraction);
  data::Dataset ds;
  ds.width = config.extraction.width();
  ds.label_names = manifest.label_set;
  FeatureRun run;
  run.inputs = manifest.entries.size();
  for (const auto& entry : manifest.entries) {
    const auto path = resolve(manifest_path, entry.path);
    try {
      auto clip = audio::load_wav(path, config.extraction.sample_rate);
      clip.source_id = entry.path.generic_string();
      const auto clips = config.augment_enabled ? augment::expand_clip(clip, config.augment)
                                                : std::vector<audio::AudioClip>{clip};
      const std::size_t label = manifest.class_index(entry.label);
      for (const auto& c : clips) ds.add_row(extractor.extract(c), label, clip.source_id);
    } catch (const std::exception& e) {
      run.failures.push_back(path.string() + ": " + e.what());
    }
  }
  if (ds.size() == 0) throw std::runtime_error("features: no clip could be processed");
  if (!out_csv.parent_path().empty()) prepare_dir(out_csv.parent_path());
  data::write_feature_csv(ds, out_csv);
  verify_outputs({out_csv, data::groups_path(out_csv)});
  run.rows = ds.size();
  return run;
}

FeatureRun cmd_augment(const fs::path& manifest_path, const config::RunConfig& config, const fs::path& out_dir) {
  const auto manifest = audio::read_manifest(manifest_path);
  prepare_dir(out_dir / "wav");
  std::vector<audio::ManifestEntry> entries;
  FeatureRun run;
  run.inputs = manifest.entries.size();
  for (const auto& entry : manifest.entries) {
    const auto path = resolve(manifest_path, entry.path);
    try {
      auto clip = audio::load_wav(path, config.extraction.sample_rate);
      clip.source_id = entry.path.generic_string();
      const auto stem = entry.path.stem().string();
      const auto clips = augment::expand_clip(clip, config.augment);
      for (std::size_t v = 0; v < clips.size(); ++v) {
        const fs::path rel = fs::path("wav") / (stem + std::string(augment::kVariantSuffixes[v]) + ".wav");
        audio::write_wav(out_dir / rel, clips[v], audio::WavFormat::float32);
        entries.push_back({rel, entry.label});
      }
    } catch (const std::exception& e) {
      run.failures.push_back(path.string() + ": " + e.what());
    }
  }
  if (entries.empty()) throw std::runtime_error("augment: no clip could be processed");
  run.rows = entries.size();
  const auto out_manifest = out_dir / "manifest.csv";
  audio::write_manifest(audio::make_manifest(std::move(entries)), out_manifest);
  verify_outputs({out_manifest});
  return run;
}

eval::EvalReport cmd_train(const fs::path& features, const config::RunConfig& config, const fs::path& out_dir) {
  config.validate();
  const auto ds = load_features(features, config);
  prepare_dir(out_dir);
  auto plan = config.split;
  plan.mode = eval::SplitMode::holdout;
  model::Network net(config.model);
  const auto result = train::run_holdout(net, ds, plan, config.train);

  std::vector<fs::path> outputs = write_report(result.test_report, out_dir);
  outputs.push_back(out_dir / "model.ckpt");
  ad::save_checkpoint(outputs.back(), net.state());
  outputs.push_back(echo_config(config, out_dir));
  verify_outputs(outputs);
  return result.test_report;
}

eval::FoldSummary cmd_kfold(const fs::path& features, const config::RunConfig& config, const fs::path& out_dir) {
  config.validate();
  const auto ds = load_features(features, config);
  prepare_dir(out_dir);
  auto plan = config.split;
  plan.mode = eval::SplitMode::kfold;
  auto summary = train::kfold_run(ds, config.model, plan, config.train, config.jobs);

  std::vector<fs::path> outputs;
  for (std::size_t f = 0; f < summary.folds.size(); ++f) {
    summary.folds[f].label_names = ds.label_names;
    const auto dir = out_dir / ("fold_" + std::to_string(f + 1));
    prepare_dir(dir);
    const auto written = write_report(summary.folds[f], dir);
    outputs.insert(outputs.end(), written.begin(), written.end());
  }
  auto j = config::to_json(summary);
  j[kTimestampField] = utc_timestamp();
  outputs.push_back(out_dir / "summary.json");
  config::write_json(j, outputs.back());
  outputs.push_back(echo_config(config, out_dir));
  verify_outputs(outputs);
  return summary;
}

eval::EvalReport cmd_evaluate(const fs::path& checkpoint, const fs::path& features, const config::RunConfig& config,
                              const fs::path& out_dir) {
  config.validate();
  const auto ds = load_features(features, config);
  model::Network net(config.model);
  net.load_state(ad::load_checkpoint(checkpoint));
  prepare_dir(out_dir);
  auto report = train::evaluate(net, ds);
  verify_outputs(write_report(report, out_dir));
  return report;
}

std::string cmd_params(const model::ModelConfig& config) {
  const model::Network net(config);
  const auto counts = net.count_parameters();
  std::ostringstream os;
  for (const auto& b : counts.blocks) os << std::left << std::setw(8) << b.block << ' ' << b.count << '\n';
  os << std::left << std::setw(8) << "total" << ' ' << counts.total << '\n';
  return os.str();
}

tune::TuneResult cmd_tune(const fs::path& features, const config::RunConfig& config, const fs::path& out_dir) {
  config.validate();
  const auto ds = load_features(features, config);
  prepare_dir(out_dir);
  auto plan = config.split;
  plan.mode = eval::SplitMode::holdout;
  auto tc = config.train;
  tc.epochs = config.tune_epochs;
  const auto result = tune::tune(config.search, config.model, config.tune_budget, config.seed,
                                 tune::training_objective(ds, plan, tc), config.jobs);

  const auto trials_csv = out_dir / "trials.csv";
  {
    auto os = open_out(trials_csv);
    os << "trial,score,parameters,lr,alfb_filters,alfb_kernels,alfb_pools,gfb_units,gfb_dropout,dense_units\n";
    auto join = [](const auto& v, auto get) {
      std::string s;
      for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + get(v[i]);
      return s;
    };
    auto num = [](auto x) { return ad::format_double(static_cast<double>(x)); };
    for (const auto& t : result.trials) {
      const auto& m = t.candidate.model;
      os << t.index << ',' << ad::format_double(t.score) << ',' << t.parameters << ',' << ad::format_double(t.candidate.lr)
         << ',' << join(m.alfb_filters, num) << ',' << join(m.alfb_kernels, num) << ','
         << join(m.alfb_pools, [](const model::PoolSpec& p) { return std::to_string(p.pool); }) << ','
         << join(m.gfb_units, num) << ',' << join(m.gfb_dropout, num) << ',' << m.dense_units << '\n';
    }
  }
  auto best = config;
  best.model = result.trials[result.best].candidate.model;
  best.model.seed = config.model.seed;
  best.train.lr = result.trials[result.best].candidate.lr;
  const std::vector<fs::path> outputs{trials_csv, out_dir / "tune.json", out_dir / "best_config.json"};
  config::write_json(config::to_json(result), outputs[1]);
  config::write_json(config::to_json(best), outputs[2]);
  verify_outputs(outputs);
  return result;
}

}  // namespace ser::cli
