#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "qis/bench/data.hpp"
#include "qis/metrics/report.hpp"
#include "qis/nets/modules.hpp"

namespace qis::bench {

struct EvalOptions {
  double bmd_threshold = 1e-3;
  metrics::IccVariant icc_variant = metrics::IccVariant::absolute_agreement;
};

/// Scores one prediction against its ground truth. Metric failures leave
/// the field empty and append the error to `row.error`.
metrics::ScanRow score_scan(const std::string& scan_id, const std::string& patient_id,
                            const imaging::QuantImage& gt, const imaging::QuantImage& pred,
                            const imaging::RoiMask& roi, const EvalOptions& opts);

/// infer_map on every entry, then per-scan metrics and aggregates.
metrics::MetricsReport evaluate_generator(nets::Generator& g, int resolution, double scale,
                                          const DatasetReader& reader,
                                          const std::vector<const phantom::ScanEntry*>& entries,
                                          const metrics::ReportKey& key, const EvalOptions& opts,
                                          const std::string& phase = "evaluate");

/// GT maps scored against themselves.
metrics::MetricsReport evaluate_ground_truth(const DatasetReader& reader,
                                             const std::vector<const phantom::ScanEntry*>& entries,
                                             const metrics::ReportKey& key, const EvalOptions& opts);

/// Loads run_dir/final.ckpt (IoError if absent), evaluates the test patients
/// and writes report.json and report.csv into run_dir.
metrics::MetricsReport evaluate_run(const std::filesystem::path& run_dir, const DatasetReader& reader,
                                    const std::vector<std::string>& test_patients, const metrics::ReportKey& key,
                                    const EvalOptions& opts);

/// Concatenates the rows of per-fold reports into one fold = -1 report.
metrics::MetricsReport pool_reports(const std::vector<metrics::MetricsReport>& folds,
                                    metrics::IccVariant variant = metrics::IccVariant::absolute_agreement);

}  // namespace qis::bench
