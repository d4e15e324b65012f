#include "qis/metrics/report.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "qis/error.hpp"

namespace qis::metrics {

namespace {

nlohmann::json opt_json(const std::optional<double>& v) {
  if (!v) return nullptr;
  if (std::isinf(*v)) return *v > 0 ? "inf" : "-inf";
  return *v;
}

std::optional<double> opt_from(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  if (j.is_string()) return j.get<std::string>() == "inf" ? INFINITY : -INFINITY;
  return j.get<double>();
}

nlohmann::json ms_json(const MeanStd& m) { return {{"mean", m.mean}, {"std", m.std}}; }
MeanStd ms_from(const nlohmann::json& j) { return {j.at("mean").get<double>(), j.at("std").get<double>()}; }

std::string csv_num(const std::optional<double>& v) {
  if (!v) return "";
  if (std::isinf(*v)) return *v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os.precision(17);
  os << *v;
  return os.str();
}

}  // namespace

Aggregates aggregate(const std::vector<ScanRow>& rows, IccVariant variant) {
  Aggregates a;
  a.scans = rows.size();
  std::vector<double> gt, pred, ps, ps_roi, ss_roi;
  for (const ScanRow& r : rows) {
    if (!r.error.empty()) ++a.null_rows;
    if (r.gt_bmd && r.pred_bmd) {
      gt.push_back(*r.gt_bmd);
      pred.push_back(*r.pred_bmd);
    }
    auto take_psnr = [&](const std::optional<double>& v, std::vector<double>& dst) {
      if (!v) return;
      if (std::isinf(*v)) {
        ++a.infinite_psnr;
        return;
      }
      dst.push_back(*v);
    };
    take_psnr(r.psnr, ps);
    take_psnr(r.psnr_roi, ps_roi);
    if (r.ssim_roi) ss_roi.push_back(*r.ssim_roi);
  }
  try {
    a.pcc = pcc(gt, pred);
  } catch (const DegenerateError&) {
  }
  try {
    a.icc = icc(gt, pred, variant);
  } catch (const DegenerateError&) {
  }
  a.mae = mae_stats(gt, pred);
  a.psnr = mean_std(ps);
  a.psnr_roi = mean_std(ps_roi);
  a.ssim_roi = mean_std(ss_roi);
  return a;
}

nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const ScanRow& s : r.rows) {
    rows.push_back({{"scan_id", s.scan_id},
                    {"patient_id", s.patient_id},
                    {"gt_bmd", opt_json(s.gt_bmd)},
                    {"pred_bmd", opt_json(s.pred_bmd)},
                    {"psnr", opt_json(s.psnr)},
                    {"psnr_roi", opt_json(s.psnr_roi)},
                    {"ssim_roi", opt_json(s.ssim_roi)},
                    {"error", s.error}});
  }
  const Aggregates& a = r.aggregates;
  return {{"schema", "qisbench.report/1"},
          {"key", {{"resolution", r.key.resolution}, {"pretraining", r.key.pretraining}, {"fold", r.key.fold}}},
          {"aggregates",
           {{"PCC", opt_json(a.pcc)},
            {"ICC", opt_json(a.icc)},
            {"mAE", ms_json(a.mae)},
            {"mPSNR", ms_json(a.psnr)},
            {"mPSNR_roi", ms_json(a.psnr_roi)},
            {"mSSIM_roi", ms_json(a.ssim_roi)},
            {"scans", a.scans},
            {"null_rows", a.null_rows},
            {"infinite_psnr", a.infinite_psnr}}},
          {"provenance", r.provenance},
          {"rows", rows}};
}

MetricsReport report_from_json(const nlohmann::json& j) {
  MetricsReport r;
  const auto& k = j.at("key");
  r.key = {k.at("resolution").get<int>(), k.at("pretraining").get<std::string>(), k.at("fold").get<int>()};
  const auto& a = j.at("aggregates");
  r.aggregates.pcc = opt_from(a.at("PCC"));
  r.aggregates.icc = opt_from(a.at("ICC"));
  r.aggregates.mae = ms_from(a.at("mAE"));
  r.aggregates.psnr = ms_from(a.at("mPSNR"));
  r.aggregates.psnr_roi = ms_from(a.at("mPSNR_roi"));
  r.aggregates.ssim_roi = ms_from(a.at("mSSIM_roi"));
  r.aggregates.scans = a.at("scans").get<std::size_t>();
  r.aggregates.null_rows = a.at("null_rows").get<std::size_t>();
  r.aggregates.infinite_psnr = a.at("infinite_psnr").get<std::size_t>();
  r.provenance = j.value("provenance", nlohmann::json::object());
  for (const auto& s : j.at("rows")) {
    r.rows.push_back(ScanRow{s.at("scan_id").get<std::string>(), s.at("patient_id").get<std::string>(),
                             opt_from(s.at("gt_bmd")), opt_from(s.at("pred_bmd")), opt_from(s.at("psnr")),
                             opt_from(s.at("psnr_roi")), opt_from(s.at("ssim_roi")),
                             s.at("error").get<std::string>()});
  }
  return r;
}

std::string rows_to_csv(const std::vector<ScanRow>& rows) {
  std::ostringstream os;
  os << "scan_id,patient_id,gt_bmd,pred_bmd,psnr,psnr_roi,ssim_roi,error\n";
  for (const ScanRow& r : rows) {
    os << r.scan_id << ',' << r.patient_id << ',' << csv_num(r.gt_bmd) << ',' << csv_num(r.pred_bmd) << ','
       << csv_num(r.psnr) << ',' << csv_num(r.psnr_roi) << ',' << csv_num(r.ssim_roi) << ',' << r.error << '\n';
  }
  return os.str();
}

void write_report(const MetricsReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream f(dir / "report.json");
    if (!f) throw IoError("cannot write " + (dir / "report.json").string());
    f << to_json(report).dump(2) << '\n';
  }
  std::ofstream f(dir / "report.csv");
  if (!f) throw IoError("cannot write " + (dir / "report.csv").string());
  f << rows_to_csv(report.rows);
}

MetricsReport read_report(const std::filesystem::path& dir) {
  std::ifstream f(dir / "report.json");
  if (!f) throw IoError("missing report: " + (dir / "report.json").string());
  return report_from_json(nlohmann::json::parse(f));
}

}  // namespace qis::metrics
