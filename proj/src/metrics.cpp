#include "vadvae/metrics.hpp"

namespace vadvae {

ConfusionMatrix confusion_matrix(std::span<const int> preds, std::span<const int> golds,
                                 int num_classes) {
  if (preds.size() != golds.size()) throw UsageError("metrics: preds/golds length mismatch");
  if (preds.empty()) throw UsageError("metrics: empty input");
  ConfusionMatrix cm = ConfusionMatrix::Zero(num_classes, num_classes);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] < 0 || preds[i] >= num_classes || golds[i] < 0 || golds[i] >= num_classes) {
      throw UsageError("metrics: label outside the label set");
    }
    ++cm(golds[i], preds[i]);
  }
  return cm;
}

std::vector<ClassScores> per_class_scores(const ConfusionMatrix& cm) {
  std::vector<ClassScores> out(static_cast<std::size_t>(cm.rows()));
  for (Eigen::Index c = 0; c < cm.rows(); ++c) {
    const double tp = static_cast<double>(cm(c, c));
    const double predicted = static_cast<double>(cm.col(c).sum());
    const double actual = static_cast<double>(cm.row(c).sum());
    ClassScores& s = out[static_cast<std::size_t>(c)];
    s.support = cm.row(c).sum();
    s.precision = predicted > 0 ? tp / predicted : 0.0;
    s.recall = actual > 0 ? tp / actual : 0.0;
    s.f1 = s.precision + s.recall > 0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  }
  return out;
}

double weighted_f1(std::span<const int> preds, std::span<const int> golds, int num_classes) {
  const ConfusionMatrix cm = confusion_matrix(preds, golds, num_classes);
  const double n = static_cast<double>(preds.size());
  double total = 0.0;
  for (const auto& s : per_class_scores(cm)) total += static_cast<double>(s.support) / n * s.f1;
  return total;
}

FlaggedValue micro_f1_excluding(std::span<const int> preds, std::span<const int> golds,
                                int num_classes, int excluded) {
  if (excluded < 0 || excluded >= num_classes) {
    throw UsageError("micro_f1_excluding: excluded label not in the label set");
  }
  const ConfusionMatrix cm = confusion_matrix(preds, golds, num_classes);
  long tp = 0;
  long fp = 0;
  long fn = 0;
  for (int c = 0; c < num_classes; ++c) {
    if (c == excluded) continue;
    tp += cm(c, c);
    fp += cm.col(c).sum() - cm(c, c);
    fn += cm.row(c).sum() - cm(c, c);
  }
  if (tp + fn == 0) return {0.0, false};
  const long denom = 2 * tp + fp + fn;
  return {2.0 * static_cast<double>(tp) / static_cast<double>(denom), true};
}

}  // namespace vadvae
