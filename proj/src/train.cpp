#include "ser/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

#include "ser/optim.hpp"

namespace ser::train {

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("train.batch_size: must be at least 1");
  if (epochs < 1) throw std::invalid_argument("train.epochs: must be at least 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw std::invalid_argument("train.lr: must be a finite non-negative number");
}

namespace {

void check_compatible(const model::Network& net, const data::Dataset& set, const char* what) {
  if (set.width != net.config().input_len) {
    throw std::invalid_argument(std::string(what) + " has " + std::to_string(set.width) +
                                " features per row, model expects " + std::to_string(net.config().input_len));
  }
  if (set.n_classes() > net.config().n_classes) {
    throw std::invalid_argument(std::string(what) + " has " + std::to_string(set.n_classes()) +
                                " classes, model outputs " + std::to_string(net.config().n_classes));
  }
}

std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

}  // namespace

std::vector<eval::EpochRecord> train(model::Network& net, const data::Dataset& train_set,
                                     const data::Dataset& val_set, const TrainConfig& config,
                                     const EpochCallback& on_epoch) {
  config.validate();
  if (train_set.size() == 0) throw std::invalid_argument("train: empty training set");
  check_compatible(net, train_set, "training set");
  if (val_set.size() > 0) check_compatible(net, val_set, "validation set");

  const auto [mean, sd] = data::column_stats(train_set);
  net.set_input_normalization(mean, sd);

  const std::size_t n_classes = net.config().n_classes;
  ad::Adam optimizer(net.trainable_parameters(), {.lr = config.lr});
  Rng shuffle_rng(derive_seed(config.seed, "shuffle"));
  Rng dropout_rng(derive_seed(config.seed, "dropout"));
  auto order = iota_indices(train_set.size());

  std::vector<eval::EpochRecord> curves;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::size_t batch_no = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_no) {
      const std::span<const std::size_t> idx(order.data() + start, std::min(config.batch_size, order.size() - start));
      std::vector<std::size_t> labels;
      for (std::size_t i : idx) labels.push_back(train_set.labels[i]);

      const ad::Tensor logits = net.forward(train_set.batch(idx), ad::Mode::train, dropout_rng);
      const ad::Tensor loss = ad::softmax_cross_entropy(logits, ad::one_hot(labels, n_classes));
      const double value = loss.item();
      if (!std::isfinite(value)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch_no + 1));
      }
      optimizer.zero_grad();
      ad::backward(loss);
      optimizer.step();

      loss_sum += value * static_cast<double>(idx.size());
      for (std::size_t r = 0; r < idx.size(); ++r) {
        correct += eval::argmax(logits.data().subspan(r * n_classes, n_classes)) == labels[r];
      }
    }

    eval::EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.train_acc = static_cast<double>(correct) / static_cast<double>(order.size());
    if (val_set.size() > 0) std::tie(rec.val_loss, rec.val_acc) = score(net, val_set);
    curves.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return curves;
}

std::vector<double> predict(model::Network& net, const data::Dataset& set, std::size_t chunk) {
  check_compatible(net, set, "dataset");
  std::vector<double> out;
  out.reserve(set.size() * net.config().n_classes);
  const auto all = iota_indices(set.size());
  for (std::size_t start = 0; start < all.size(); start += chunk) {
    const std::span<const std::size_t> idx(all.data() + start, std::min(chunk, all.size() - start));
    const auto probs = net.predict_proba(set.batch(idx));
    out.insert(out.end(), probs.data().begin(), probs.data().end());
  }
  return out;
}

std::pair<double, double> score(model::Network& net, const data::Dataset& set, std::size_t chunk) {
  const std::size_t n_classes = net.config().n_classes;
  const auto probs = predict(net, set, chunk);
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto row = std::span<const double>(probs).subspan(i * n_classes, n_classes);
    loss -= std::log(std::max(row[set.labels[i]], 1e-12));
    correct += eval::argmax(row) == set.labels[i];
  }
  const double n = static_cast<double>(set.size());
  return {loss / n, static_cast<double>(correct) / n};
}

eval::EvalReport evaluate(model::Network& net, const data::Dataset& test_set) {
  if (test_set.size() == 0) throw std::invalid_argument("evaluate: empty test set");
  const auto probs = predict(net, test_set);
  auto report = eval::evaluate_scores(probs, test_set.labels, net.config().n_classes);
  report.label_names = test_set.label_names;
  return report;
}

model::ModelConfig job_model_config(model::ModelConfig config, std::size_t job) {
  config.seed = derive_seed(config.seed, "job", job);
  return config;
}

TrainConfig job_train_config(TrainConfig config, std::size_t job) {
  config.seed = derive_seed(config.seed, "job", job);
  return config;
}

HoldoutResult run_holdout(model::Network& net, const data::Dataset& dataset, const eval::SplitPlan& plan,
                          const TrainConfig& config, const EpochCallback& on_epoch) {
  HoldoutResult r;
  r.split = eval::holdout_split(dataset.labels, dataset.groups, plan);
  if (r.split.test.empty()) throw std::invalid_argument("holdout: test share is empty");
  const auto train_set = dataset.subset(r.split.train);
  const auto val_set = dataset.subset(r.split.val);
  r.curves = train(net, train_set, val_set, config, on_epoch);
  r.test_report = evaluate(net, dataset.subset(r.split.test));
  r.test_report.curves = r.curves;
  return r;
}

eval::FoldSummary kfold_run(const data::Dataset& dataset, const model::ModelConfig& model_config,
                            const eval::SplitPlan& plan, const TrainConfig& config, std::size_t jobs) {
  const auto folds = eval::kfold_split(dataset.labels, dataset.groups, plan);
  std::vector<eval::EvalReport> reports(folds.size());
  parallel_for(folds.size(), jobs, [&](std::size_t f) {
    model::Network net(job_model_config(model_config, f));
    const auto held_out = dataset.subset(folds[f]);
    const auto curves = train(net, dataset.subset(eval::complement(dataset.size(), folds[f])), held_out,
                              job_train_config(config, f));
    reports[f] = evaluate(net, held_out);
    reports[f].curves = curves;
  });
  return eval::summarize_folds(std::move(reports));
}

std::vector<AblationRun> run_ablation(const data::Dataset& dataset, const model::ModelConfig& model_config,
                                      const std::vector<model::Variant>& variants, std::size_t repeats,
                                      const eval::SplitPlan& plan, const TrainConfig& config, std::size_t jobs) {
  if (repeats == 0) throw std::invalid_argument("ablation: repeats must be at least 1");
  std::vector<AblationRun> runs;
  for (auto v : variants) runs.push_back({v, std::vector<double>(repeats, 0.0), 0.0});
  parallel_for(variants.size() * repeats, jobs, [&](std::size_t job) {
    const std::size_t vi = job / repeats, r = job % repeats;
    auto mc = job_model_config(model_config, r);
    mc.variant = variants[vi];
    auto sp = plan;
    sp.seed = derive_seed(plan.seed, "job", r);
    model::Network net(mc);
    runs[vi].test_accuracy[r] = run_holdout(net, dataset, sp, job_train_config(config, r)).test_report.accuracy;
  });
  for (auto& run : runs) run.median = median(run.test_accuracy);
  return runs;
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median: no values");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : (values[n / 2 - 1] + values[n / 2]) / 2.0;
}

void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& task) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> workers;
  for (std::size_t w = 0; w < jobs; ++w) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          task(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace ser::train
