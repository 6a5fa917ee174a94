#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace ser::eval {

using ConfusionMatrix = std::vector<std::vector<std::size_t>>;  // [true][predicted]

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

/// One-vs-rest ROC for a class. Undefined when the class has no positives or
/// no negatives among the evaluated samples.
struct RocCurve {
  bool defined = false;
  std::vector<double> fpr;
  std::vector<double> tpr;
  double auc = 0.0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
};

struct EvalReport {
  std::size_t n_samples = 0;
  double accuracy = 0.0;
  double precision = 0.0;  // support-weighted
  double recall = 0.0;
  double f1 = 0.0;
  std::vector<ClassMetrics> per_class;
  ConfusionMatrix confusion;
  std::vector<RocCurve> roc;
  std::vector<EpochRecord> curves;
  std::vector<std::string> label_names;
};

struct FoldSummary {
  std::vector<EvalReport> folds;
  double mean_accuracy = 0.0;
  double mean_precision = 0.0;
  double mean_recall = 0.0;
  double mean_f1 = 0.0;
};

std::size_t argmax(std::span<const double> row);

ConfusionMatrix confusion_matrix(std::span<const std::size_t> truth, std::span<const std::size_t> predicted,
                                 std::size_t n_classes);

/// Per-class precision, recall and F1 from a confusion matrix; 0/0 counts as 0.
std::vector<ClassMetrics> class_metrics(const ConfusionMatrix& cm);

/// Accuracy, weighted metrics and confusion matrix from hard predictions.
EvalReport classification_report(std::span<const std::size_t> truth, std::span<const std::size_t> predicted,
                                 std::size_t n_classes);

/// One-vs-rest ROC per class from row-major scores [n, n_classes]. A threshold is
/// placed at every distinct score; AUC by the trapezoid rule.
std::vector<RocCurve> roc_auc(std::span<const double> scores, std::span<const std::size_t> truth, std::size_t n_classes);

/// Full report from class probabilities: argmax predictions plus ROC curves.
EvalReport evaluate_scores(std::span<const double> scores, std::span<const std::size_t> truth, std::size_t n_classes);

/// Throws std::logic_error if accuracy differs from trace/total or from the
/// weighted recall by more than `tolerance`.
void check_identities(const EvalReport& report, double tolerance = 1e-12);

double mean(std::span<const double> values);

/// Arithmetic means of the per-fold metrics.
FoldSummary summarize_folds(std::vector<EvalReport> folds);

}  // namespace ser::eval
