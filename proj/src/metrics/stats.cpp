#include "qis/metrics/stats.hpp"

#include <cmath>
#include <vector>

#include "qis/error.hpp"

namespace qis::metrics {

namespace {

double mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

void require_pairs(std::span<const double> a, std::span<const double> b, std::size_t min_len) {
  if (a.size() != b.size()) throw ShapeError("paired sequences differ in length");
  if (a.size() < min_len) throw DegenerateError("too few subjects");
}

}  // namespace

double pcc(std::span<const double> xs, std::span<const double> ys) {
  require_pairs(xs, ys, 3);
  const double mx = mean(xs), my = mean(ys);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx, dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw DegenerateError("pcc: zero variance");
  const double r = sxy / std::sqrt(sxx * syy);
  return std::fmax(-1.0, std::fmin(1.0, r));
}

double icc(std::span<const double> gt, std::span<const double> pred, IccVariant variant) {
  require_pairs(gt, pred, 3);
  const double n = static_cast<double>(gt.size());
  constexpr double k = 2.0;
  const double mg = mean(gt), mp = mean(pred);
  const double grand = 0.5 * (mg + mp);

  double ss_rows = 0.0, ss_total = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const double row = 0.5 * (gt[i] + pred[i]);
    ss_rows += k * (row - grand) * (row - grand);
    ss_total += (gt[i] - grand) * (gt[i] - grand) + (pred[i] - grand) * (pred[i] - grand);
  }
  const double ss_cols = n * ((mg - grand) * (mg - grand) + (mp - grand) * (mp - grand));
  const double ss_err = ss_total - ss_rows - ss_cols;

  const double ms_r = ss_rows / (n - 1.0);
  const double ms_c = ss_cols / (k - 1.0);
  const double ms_e = ss_err / ((n - 1.0) * (k - 1.0));

  const double denom = variant == IccVariant::absolute_agreement
                           ? ms_r + (k - 1.0) * ms_e + (k / n) * (ms_c - ms_e)
                           : ms_r + (k - 1.0) * ms_e;
  if (!(std::fabs(denom) > 0.0)) throw DegenerateError("icc: degenerate mean squares");
  return (ms_r - ms_e) / denom;
}

MeanStd mean_std(std::span<const double> values) {
  if (values.empty()) return {};
  const double m = mean(values);
  double ss = 0.0;
  for (double v : values) ss += (v - m) * (v - m);
  return {m, std::sqrt(ss / static_cast<double>(values.size()))};
}

MeanStd mae_stats(std::span<const double> gt, std::span<const double> pred) {
  require_pairs(gt, pred, 0);
  std::vector<double> abs_err(gt.size());
  for (std::size_t i = 0; i < gt.size(); ++i) abs_err[i] = std::fabs(gt[i] - pred[i]);
  return mean_std(abs_err);
}

}  // namespace qis::metrics
