#pragma once

#include <span>

namespace qis::metrics {

/// Sample Pearson correlation. Needs >= 3 points and non-zero variance in both.
double pcc(std::span<const double> xs, std::span<const double> ys);

enum class IccVariant {
  absolute_agreement,  // ICC(2,1): two-way random effects, single rater
  consistency,         // ICC(3,1): two-way mixed effects, single rater
};

/// Intraclass correlation with k = 2 raters (ground truth and prediction).
double icc(std::span<const double> gt, std::span<const double> pred,
           IccVariant variant = IccVariant::absolute_agreement);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population

  friend bool operator==(const MeanStd&, const MeanStd&) = default;
};

MeanStd mean_std(std::span<const double> values);

/// Mean and population std of |gt - pred|.
MeanStd mae_stats(std::span<const double> gt, std::span<const double> pred);

}  // namespace qis::metrics
