#pragma once

#include "vadvae/errors.hpp"

#include <Eigen/Core>

#include <cmath>
#include <span>
#include <string>
#include <vector>

namespace vadvae {

using ConfusionMatrix = Eigen::Matrix<long, Eigen::Dynamic, Eigen::Dynamic>;

// Rows are gold classes, columns are predictions.
ConfusionMatrix confusion_matrix(std::span<const int> preds, std::span<const int> golds,
                                 int num_classes);

struct ClassScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long support = 0;
};

std::vector<ClassScores> per_class_scores(const ConfusionMatrix& confusion);

// Support-weighted mean of per-class F1; classes without predictions or gold
// items score 0.
double weighted_f1(std::span<const int> preds, std::span<const int> golds, int num_classes);

struct FlaggedValue {
  double value = 0.0;
  bool defined = true;
};

// Micro-F1 over every class except `excluded`. Gold-excluded items count only
// as false positives of whatever they were predicted as; predicting the
// excluded class for another gold class is a false negative. Undefined (value
// 0, flagged) when no gold item falls outside the excluded class.
FlaggedValue micro_f1_excluding(std::span<const int> preds, std::span<const int> golds,
                                int num_classes, int excluded);

template <typename DerivedX, typename DerivedY>
FlaggedValue pearson(const Eigen::DenseBase<DerivedX>& x, const Eigen::DenseBase<DerivedY>& y) {
  if (x.size() != y.size()) throw UsageError("pearson: length mismatch");
  if (x.size() < 2) return {0.0, false};
  const auto xa = x.derived().array().template cast<double>().eval();
  const auto ya = y.derived().array().template cast<double>().eval();
  const auto dx = (xa - xa.mean()).eval();
  const auto dy = (ya - ya.mean()).eval();
  const double sxx = dx.square().sum();
  const double syy = dy.square().sum();
  if (sxx <= 0.0 || syy <= 0.0) return {0.0, false};
  return {(dx * dy).sum() / std::sqrt(sxx * syy), true};
}

inline FlaggedValue pearson(std::span<const double> x, std::span<const double> y) {
  using Map = Eigen::Map<const Eigen::ArrayXd>;
  return pearson(Map(x.data(), static_cast<Eigen::Index>(x.size())),
                 Map(y.data(), static_cast<Eigen::Index>(y.size())));
}

}  // namespace vadvae
