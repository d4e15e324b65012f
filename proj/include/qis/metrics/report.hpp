#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "qis/metrics/stats.hpp"

namespace qis::metrics {

/// One evaluated test scan. Null metrics carry a reason code.
struct ScanRow {
  std::string scan_id;
  std::string patient_id;
  std::optional<double> gt_bmd;
  std::optional<double> pred_bmd;
  std::optional<double> psnr;  // +inf for a perfect prediction
  std::optional<double> psnr_roi;
  std::optional<double> ssim_roi;
  std::string error;  // empty when every metric is present
};

struct ReportKey {
  int resolution = 0;
  std::string pretraining;
  int fold = -1;  // -1 for a fold-pooled report

  friend auto operator<=>(const ReportKey&, const ReportKey&) = default;
};

struct Aggregates {
  std::optional<double> pcc;
  std::optional<double> icc;
  MeanStd mae;
  MeanStd psnr;
  MeanStd psnr_roi;
  MeanStd ssim_roi;
  std::size_t scans = 0;
  std::size_t null_rows = 0;
  std::size_t infinite_psnr = 0;  // excluded from the PSNR mean(std)
};

struct MetricsReport {
  ReportKey key;
  Aggregates aggregates;
  std::vector<ScanRow> rows;
  nlohmann::json provenance = nlohmann::json::object();
};

/// Recomputes every aggregate from per-scan rows.
Aggregates aggregate(const std::vector<ScanRow>& rows, IccVariant variant = IccVariant::absolute_agreement);

nlohmann::json to_json(const MetricsReport& report);
MetricsReport report_from_json(const nlohmann::json& j);

void write_report(const MetricsReport& report, const std::filesystem::path& dir);
MetricsReport read_report(const std::filesystem::path& dir);

/// Per-scan CSV: scan_id,patient_id,gt_bmd,pred_bmd,psnr,psnr_roi,ssim_roi,error
std::string rows_to_csv(const std::vector<ScanRow>& rows);

}  // namespace qis::metrics
