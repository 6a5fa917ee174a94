#include "ser/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace ser::eval {

namespace {

double ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

}  // namespace

std::size_t argmax(std::span<const double> row) {
  if (row.empty()) throw std::invalid_argument("argmax: empty row");
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

ConfusionMatrix confusion_matrix(std::span<const std::size_t> truth, std::span<const std::size_t> predicted,
                                 std::size_t n_classes) {
  if (truth.size() != predicted.size()) throw std::invalid_argument("confusion_matrix: length mismatch");
  ConfusionMatrix cm(n_classes, std::vector<std::size_t>(n_classes, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] >= n_classes || predicted[i] >= n_classes) {
      throw std::out_of_range("confusion_matrix: class index out of range at sample " + std::to_string(i));
    }
    ++cm[truth[i]][predicted[i]];
  }
  return cm;
}

std::vector<ClassMetrics> class_metrics(const ConfusionMatrix& cm) {
  const std::size_t n = cm.size();
  std::vector<ClassMetrics> out(n);
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t predicted = 0, actual = 0;
    for (std::size_t k = 0; k < n; ++k) {
      predicted += cm[k][c];
      actual += cm[c][k];
    }
    const double tp = static_cast<double>(cm[c][c]);
    auto& m = out[c];
    m.support = actual;
    m.precision = ratio(tp, static_cast<double>(predicted));
    m.recall = ratio(tp, static_cast<double>(actual));
    m.f1 = ratio(2.0 * m.precision * m.recall, m.precision + m.recall);
  }
  return out;
}

EvalReport classification_report(std::span<const std::size_t> truth, std::span<const std::size_t> predicted,
                                 std::size_t n_classes) {
  if (truth.empty()) throw std::invalid_argument("classification_report: no samples");
  EvalReport r;
  r.n_samples = truth.size();
  r.confusion = confusion_matrix(truth, predicted, n_classes);
  r.per_class = class_metrics(r.confusion);
  std::size_t trace = 0;
  for (std::size_t c = 0; c < n_classes; ++c) trace += r.confusion[c][c];
  const double total = static_cast<double>(r.n_samples);
  r.accuracy = static_cast<double>(trace) / total;
  for (const auto& m : r.per_class) {
    const double w = static_cast<double>(m.support) / total;
    r.precision += w * m.precision;
    r.recall += w * m.recall;
    r.f1 += w * m.f1;
  }
  return r;
}

std::vector<RocCurve> roc_auc(std::span<const double> scores, std::span<const std::size_t> truth, std::size_t n_classes) {
  const std::size_t n = truth.size();
  if (scores.size() != n * n_classes) throw std::invalid_argument("roc_auc: scores do not match [n, classes]");
  std::vector<RocCurve> out(n_classes);
  std::vector<std::size_t> order(n);
  for (std::size_t c = 0; c < n_classes; ++c) {
    std::size_t pos = 0;
    for (std::size_t l : truth) pos += (l == c);
    const std::size_t neg = n - pos;
    auto& roc = out[c];
    if (pos == 0 || neg == 0) continue;
    roc.defined = true;

    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a * n_classes + c] > scores[b * n_classes + c]; });
    roc.fpr.push_back(0.0);
    roc.tpr.push_back(0.0);
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < n;) {
      // Every sample tied at this score crosses the threshold together.
      const double s = scores[order[i] * n_classes + c];
      while (i < n && scores[order[i] * n_classes + c] == s) {
        (truth[order[i]] == c ? tp : fp) += 1;
        ++i;
      }
      roc.fpr.push_back(static_cast<double>(fp) / static_cast<double>(neg));
      roc.tpr.push_back(static_cast<double>(tp) / static_cast<double>(pos));
    }
    for (std::size_t k = 1; k < roc.fpr.size(); ++k) {
      roc.auc += (roc.fpr[k] - roc.fpr[k - 1]) * (roc.tpr[k] + roc.tpr[k - 1]) / 2.0;
    }
  }
  return out;
}

EvalReport evaluate_scores(std::span<const double> scores, std::span<const std::size_t> truth, std::size_t n_classes) {
  if (scores.size() != truth.size() * n_classes) throw std::invalid_argument("evaluate_scores: scores do not match [n, classes]");
  std::vector<std::size_t> predicted(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) predicted[i] = argmax(scores.subspan(i * n_classes, n_classes));
  EvalReport r = classification_report(truth, predicted, n_classes);
  r.roc = roc_auc(scores, truth, n_classes);
  check_identities(r);
  return r;
}

void check_identities(const EvalReport& report, double tolerance) {
  std::size_t trace = 0, total = 0;
  for (std::size_t c = 0; c < report.confusion.size(); ++c) {
    trace += report.confusion[c][c];
    for (std::size_t v : report.confusion[c]) total += v;
  }
  if (total != report.n_samples) throw std::logic_error("confusion matrix total differs from sample count");
  const double acc = static_cast<double>(trace) / static_cast<double>(total);
  if (std::abs(acc - report.accuracy) > tolerance) throw std::logic_error("accuracy differs from confusion trace/total");
  if (std::abs(report.recall - report.accuracy) > tolerance) throw std::logic_error("weighted recall differs from accuracy");
}

double mean(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("mean: no values");
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

FoldSummary summarize_folds(std::vector<EvalReport> folds) {
  if (folds.empty()) throw std::invalid_argument("summarize_folds: no folds");
  FoldSummary s;
  auto collect = [&](double EvalReport::*field) {
    std::vector<double> v;
    for (const auto& f : folds) v.push_back(f.*field);
    return mean(v);
  };
  s.mean_accuracy = collect(&EvalReport::accuracy);
  s.mean_precision = collect(&EvalReport::precision);
  s.mean_recall = collect(&EvalReport::recall);
  s.mean_f1 = collect(&EvalReport::f1);
  s.folds = std::move(folds);
  return s;
}

}  // namespace ser::eval
