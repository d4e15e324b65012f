#include "qis/bench/evaluate.hpp"

#include <typeinfo>

#include "qis/error.hpp"
#include "qis/hash.hpp"
#include "qis/metrics/bmd.hpp"
#include "qis/metrics/image_quality.hpp"
#include "qis/nets/checkpoint.hpp"
#include "qis/target/trainer.hpp"

namespace qis::bench {

namespace {

std::string reason(const std::exception& e) {
  if (dynamic_cast<const EmptyRegionError*>(&e)) return "empty_region";
  if (dynamic_cast<const DegenerateError*>(&e)) return "degenerate";
  if (dynamic_cast<const RegionTooSmallError*>(&e)) return "region_too_small";
  if (dynamic_cast<const ShapeError*>(&e)) return "shape";
  if (dynamic_cast<const UnitError*>(&e)) return "unit";
  return "error";
}

template <class F>
std::optional<double> attempt(metrics::ScanRow& row, const char* what, F&& f) {
  try {
    return f();
  } catch (const std::exception& e) {
    if (!row.error.empty()) row.error += ";";
    row.error += std::string(what) + ":" + reason(e);
    return std::nullopt;
  }
}

}  // namespace

metrics::ScanRow score_scan(const std::string& scan_id, const std::string& patient_id,
                            const imaging::QuantImage& gt, const imaging::QuantImage& pred,
                            const imaging::RoiMask& roi, const EvalOptions& opts) {
  metrics::ScanRow row;
  row.scan_id = scan_id;
  row.patient_id = patient_id;
  row.gt_bmd = attempt(row, "gt_bmd", [&] { return metrics::extract_bmd(gt, opts.bmd_threshold).bmd; });
  row.pred_bmd = attempt(row, "pred_bmd", [&] { return metrics::extract_bmd(pred, opts.bmd_threshold).bmd; });
  row.psnr = attempt(row, "psnr", [&] { return metrics::psnr(gt, pred); });
  row.psnr_roi = attempt(row, "psnr_roi", [&] { return metrics::psnr(gt, pred, &roi); });
  row.ssim_roi = attempt(row, "ssim_roi", [&] { return metrics::ssim(gt, pred, &roi); });
  return row;
}

metrics::MetricsReport evaluate_generator(nets::Generator& g, int resolution, double scale,
                                          const DatasetReader& reader,
                                          const std::vector<const phantom::ScanEntry*>& entries,
                                          const metrics::ReportKey& key, const EvalOptions& opts,
                                          const std::string& phase) {
  metrics::MetricsReport report;
  report.key = key;
  for (const auto* e : entries) {
    const auto xray = reader.read(e->xray_path, phase);
    const auto gt = reader.read(e->pf_path, phase);
    const auto roi = reader.read_roi(e->roi_path, phase);
    const auto pred = target::infer_map(g, xray, resolution, scale);
    report.rows.push_back(score_scan(e->record.key(), e->record.patient_id, gt, pred, roi, opts));
  }
  report.aggregates = metrics::aggregate(report.rows, opts.icc_variant);
  report.provenance["bmd_threshold"] = opts.bmd_threshold;
  report.provenance["dataset_seed"] = reader.manifest().seed;
  return report;
}

metrics::MetricsReport evaluate_ground_truth(const DatasetReader& reader,
                                             const std::vector<const phantom::ScanEntry*>& entries,
                                             const metrics::ReportKey& key, const EvalOptions& opts) {
  metrics::MetricsReport report;
  report.key = key;
  for (const auto* e : entries) {
    const auto gt = reader.read(e->pf_path, "evaluate");
    const auto roi = reader.read_roi(e->roi_path, "evaluate");
    report.rows.push_back(score_scan(e->record.key(), e->record.patient_id, gt, gt, roi, opts));
  }
  report.aggregates = metrics::aggregate(report.rows, opts.icc_variant);
  report.provenance["bmd_threshold"] = opts.bmd_threshold;
  report.provenance["dataset_seed"] = reader.manifest().seed;
  report.provenance["oracle"] = "ground_truth";
  return report;
}

metrics::MetricsReport evaluate_run(const std::filesystem::path& run_dir, const DatasetReader& reader,
                                    const std::vector<std::string>& test_patients, const metrics::ReportKey& key,
                                    const EvalOptions& opts) {
  const auto ckpt_path = run_dir / "final.ckpt";
  if (!std::filesystem::exists(ckpt_path)) throw IoError("missing checkpoint " + ckpt_path.string());
  const auto ckpt = nets::load_checkpoint(ckpt_path);
  auto g = nets::restore_generator(ckpt);
  auto report = evaluate_generator(g, ckpt.meta.at("resolution").get<int>(),
                                   ckpt.meta.at("normalization_scale").get<double>(), reader,
                                   reader.target_entries(test_patients), key, opts);
  if (ckpt.meta.contains("config")) report.provenance["config_hash"] = sha256_hex(ckpt.meta["config"].dump());
  metrics::write_report(report, run_dir);
  return report;
}

metrics::MetricsReport pool_reports(const std::vector<metrics::MetricsReport>& folds, metrics::IccVariant variant) {
  metrics::MetricsReport out;
  if (folds.empty()) return out;
  out.key = folds.front().key;
  out.key.fold = -1;
  nlohmann::json parts = nlohmann::json::array();
  for (const auto& r : folds) {
    out.rows.insert(out.rows.end(), r.rows.begin(), r.rows.end());
    parts.push_back(r.key.fold);
  }
  out.aggregates = metrics::aggregate(out.rows, variant);
  out.provenance["pooled_folds"] = parts;
  if (!folds.front().provenance.empty()) out.provenance["fold_provenance"] = folds.front().provenance;
  return out;
}

}  // namespace qis::bench
