#include "ser/run_config.hpp"

#include <fstream>
#include <set>

namespace ser::config {

namespace {

// Checks that `j` is an object whose keys all appear in `allowed`.
void expect_keys(const Json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  const std::set<std::string> names(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    if (!names.count(key)) throw ConfigError(where + (where.empty() ? "" : ".") + key + ": unknown field");
  }
}

template <typename T>
void read(const Json& j, const char* key, const std::string& where, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

template <typename Parse>
void read_enum(const Json& j, const char* key, const std::string& where, Parse parse) {
  if (!j.contains(key)) return;
  try {
    parse(j.at(key).get<std::string>());
  } catch (const std::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

Json curves_json(const std::vector<eval::EpochRecord>& curves) {
  Json arr = Json::array();
  for (const auto& r : curves) {
    arr.push_back({{"epoch", r.epoch}, {"train_loss", r.train_loss}, {"train_acc", r.train_acc},
                   {"val_loss", r.val_loss}, {"val_acc", r.val_acc}});
  }
  return arr;
}

}  // namespace

void RunConfig::propagate_seed() {
  model.seed = seed;
  train.seed = seed;
  split.seed = seed;
  augment.rng_seed = seed;
}

void RunConfig::validate() const {
  if (jobs < 1) throw ConfigError("jobs: must be at least 1");
  if (tune_budget < 1) throw ConfigError("tune.budget: must be at least 1");
  if (tune_epochs < 1) throw ConfigError("tune.epochs: must be at least 1");
  try {
    model.validate();
    train.validate();
    split.validate();
    augment.validate();
    search.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (extraction.width() != model.input_len) {
    throw ConfigError("model.input_len: " + std::to_string(model.input_len) + " does not match extraction width " +
                      std::to_string(extraction.width()));
  }
}

Json to_json(const model::ModelConfig& c) {
  Json pools = Json::array();
  for (const auto& p : c.alfb_pools) pools.push_back({p.pool, p.stride});
  return {{"input_len", c.input_len},       {"alfb_filters", c.alfb_filters},
          {"alfb_kernels", c.alfb_kernels}, {"alfb_pools", pools},
          {"eca_mode", to_string(c.eca_mode)}, {"gfb_units", c.gfb_units},
          {"gfb_dropout", c.gfb_dropout},   {"dense_units", c.dense_units},
          {"n_classes", c.n_classes},       {"variant", to_string(c.variant)},
          {"seed", c.seed}};
}

model::ModelConfig model_config_from_json(const Json& j, model::ModelConfig c) {
  const std::string w = "model";
  expect_keys(j, w, {"input_len", "alfb_filters", "alfb_kernels", "alfb_pools", "eca_mode", "gfb_units", "gfb_dropout",
                     "dense_units", "n_classes", "variant", "seed"});
  read(j, "input_len", w, c.input_len);
  read(j, "alfb_filters", w, c.alfb_filters);
  read(j, "alfb_kernels", w, c.alfb_kernels);
  if (j.contains("alfb_pools")) {
    std::vector<std::vector<std::size_t>> pools;
    read(j, "alfb_pools", w, pools);
    c.alfb_pools.clear();
    for (const auto& p : pools) {
      if (p.size() != 2) throw ConfigError("model.alfb_pools: each entry must be [pool, stride]");
      c.alfb_pools.push_back({p[0], p[1]});
    }
  }
  read_enum(j, "eca_mode", w, [&](const std::string& s) { c.eca_mode = model::parse_eca_mode(s); });
  read(j, "gfb_units", w, c.gfb_units);
  read(j, "gfb_dropout", w, c.gfb_dropout);
  read(j, "dense_units", w, c.dense_units);
  read(j, "n_classes", w, c.n_classes);
  read_enum(j, "variant", w, [&](const std::string& s) { c.variant = model::parse_variant(s); });
  read(j, "seed", w, c.seed);
  return c;
}

Json to_json(const RunConfig& c) {
  const auto& s = c.search;
  return {
      {"seed", c.seed},
      {"jobs", c.jobs},
      {"model", [&] {
         auto m = to_json(c.model);
         m.erase("seed");
         return m;
       }()},
      {"train", {{"batch_size", c.train.batch_size}, {"epochs", c.train.epochs}, {"lr", c.train.lr}}},
      {"split",
       {{"mode", to_string(c.split.mode)},
        {"ratios", c.split.ratios},
        {"k", c.split.k},
        {"stratified", c.split.stratified},
        {"augment_scope", to_string(c.split.augment_scope)}}},
      {"augment",
       {{"enabled", c.augment_enabled},
        {"noise_rate", c.augment.noise_rate},
        {"pitch_steps", c.augment.pitch_steps},
        {"stretch_rate", c.augment.stretch_rate}}},
      {"extraction",
       {{"sample_rate", c.extraction.sample_rate},
        {"frame_length", c.extraction.frame_length},
        {"hop_length", c.extraction.hop_length},
        {"n_mels", c.extraction.n_mels},
        {"n_mfcc", c.extraction.n_mfcc},
        {"f_min", c.extraction.f_min},
        {"f_max", c.extraction.f_max}}},
      {"tune",
       {{"budget", c.tune_budget},
        {"epochs", c.tune_epochs},
        {"alfb_filters", s.alfb_filters},
        {"alfb_kernels", s.alfb_kernels},
        {"alfb_pools", s.alfb_pools},
        {"gfb_units", s.gfb_units},
        {"gfb_dropout", s.gfb_dropout},
        {"dense_units", s.dense_units},
        {"lr", s.lr}}},
  };
}

RunConfig run_config_from_json(const Json& j) {
  RunConfig c;
  expect_keys(j, "", {"seed", "jobs", "model", "train", "split", "augment", "extraction", "tune"});
  read(j, "seed", "config", c.seed);
  read(j, "jobs", "config", c.jobs);
  if (j.contains("model")) {
    Json m = j.at("model");
    if (m.is_object() && m.contains("seed")) throw ConfigError("model.seed: set the top-level 'seed' instead");
    c.model = model_config_from_json(m, c.model);
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    expect_keys(t, "train", {"batch_size", "epochs", "lr"});
    read(t, "batch_size", "train", c.train.batch_size);
    read(t, "epochs", "train", c.train.epochs);
    read(t, "lr", "train", c.train.lr);
  }
  if (j.contains("split")) {
    const auto& s = j.at("split");
    expect_keys(s, "split", {"mode", "ratios", "k", "stratified", "augment_scope"});
    read_enum(s, "mode", "split", [&](const std::string& v) { c.split.mode = eval::parse_split_mode(v); });
    read(s, "ratios", "split", c.split.ratios);
    read(s, "k", "split", c.split.k);
    read(s, "stratified", "split", c.split.stratified);
    read_enum(s, "augment_scope", "split",
              [&](const std::string& v) { c.split.augment_scope = eval::parse_augment_scope(v); });
  }
  if (j.contains("augment")) {
    const auto& a = j.at("augment");
    expect_keys(a, "augment", {"enabled", "noise_rate", "pitch_steps", "stretch_rate"});
    read(a, "enabled", "augment", c.augment_enabled);
    read(a, "noise_rate", "augment", c.augment.noise_rate);
    read(a, "pitch_steps", "augment", c.augment.pitch_steps);
    read(a, "stretch_rate", "augment", c.augment.stretch_rate);
  }
  if (j.contains("extraction")) {
    const auto& e = j.at("extraction");
    expect_keys(e, "extraction", {"sample_rate", "frame_length", "hop_length", "n_mels", "n_mfcc", "f_min", "f_max"});
    read(e, "sample_rate", "extraction", c.extraction.sample_rate);
    read(e, "frame_length", "extraction", c.extraction.frame_length);
    read(e, "hop_length", "extraction", c.extraction.hop_length);
    read(e, "n_mels", "extraction", c.extraction.n_mels);
    read(e, "n_mfcc", "extraction", c.extraction.n_mfcc);
    read(e, "f_min", "extraction", c.extraction.f_min);
    read(e, "f_max", "extraction", c.extraction.f_max);
  }
  if (j.contains("tune")) {
    const auto& t = j.at("tune");
    expect_keys(t, "tune", {"budget", "epochs", "alfb_filters", "alfb_kernels", "alfb_pools", "gfb_units",
                            "gfb_dropout", "dense_units", "lr"});
    read(t, "budget", "tune", c.tune_budget);
    read(t, "epochs", "tune", c.tune_epochs);
    read(t, "alfb_filters", "tune", c.search.alfb_filters);
    read(t, "alfb_kernels", "tune", c.search.alfb_kernels);
    read(t, "alfb_pools", "tune", c.search.alfb_pools);
    read(t, "gfb_units", "tune", c.search.gfb_units);
    read(t, "gfb_dropout", "tune", c.search.gfb_dropout);
    read(t, "dense_units", "tune", c.search.dense_units);
    read(t, "lr", "tune", c.search.lr);
  }
  c.propagate_seed();
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  try {
    return run_config_from_json(read_json(path));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

Json to_json(const eval::EvalReport& r) {
  Json per_class = Json::array();
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    const auto& m = r.per_class[c];
    Json entry = {{"class", c < r.label_names.size() ? r.label_names[c] : std::to_string(c)},
                  {"precision", m.precision},
                  {"recall", m.recall},
                  {"f1", m.f1},
                  {"support", m.support}};
    if (c < r.roc.size()) entry["auc"] = r.roc[c].defined ? Json(r.roc[c].auc) : Json(nullptr);
    per_class.push_back(entry);
  }
  return {{"n_samples", r.n_samples}, {"accuracy", r.accuracy}, {"precision", r.precision},
          {"recall", r.recall},       {"f1", r.f1},             {"labels", r.label_names},
          {"per_class", per_class},   {"confusion", r.confusion}, {"curves", curves_json(r.curves)}};
}

Json to_json(const eval::FoldSummary& s) {
  Json folds = Json::array();
  for (const auto& f : s.folds) folds.push_back(to_json(f));
  return {{"k", s.folds.size()},
          {"mean_accuracy", s.mean_accuracy},
          {"mean_precision", s.mean_precision},
          {"mean_recall", s.mean_recall},
          {"mean_f1", s.mean_f1},
          {"folds", folds}};
}

Json to_json(const tune::TuneResult& r) {
  Json trials = Json::array();
  for (const auto& t : r.trials) {
    trials.push_back({{"trial", t.index},
                      {"score", t.score},
                      {"parameters", t.parameters},
                      {"lr", t.candidate.lr},
                      {"model", to_json(t.candidate.model)}});
  }
  const auto& best = r.trials.at(r.best);
  return {{"best_trial", best.index}, {"best_score", best.score}, {"best_lr", best.candidate.lr},
          {"best_model", to_json(best.candidate.model)}, {"trials", trials}};
}

void write_json(const Json& j, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error(path.string() + ": cannot open for writing");
  os << j.dump(2) << '\n';
  if (!os) throw std::runtime_error(path.string() + ": write failed");
}

Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path.string() + ": cannot open");
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace ser::config
