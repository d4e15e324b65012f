#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qis/bench/data.hpp"
#include "qis/imaging/quant_image.hpp"
#include "qis/metrics/report.hpp"

namespace qis::bench {

/// Column order of the summary table.
inline const std::vector<std::string> kTableColumns = {"PCC", "ICC", "mAE", "mPSNR", "mPSNR_roi", "mSSIM_roi"};

struct TableRow {
  int resolution = 0;
  std::string pretraining;
  bool present = false;  // false: requested cell with no report
  std::optional<double> pcc;
  std::optional<double> icc;
  metrics::MeanStd mae;
  metrics::MeanStd psnr;
  metrics::MeanStd psnr_roi;
  metrics::MeanStd ssim_roi;
  std::size_t scans = 0;

  friend bool operator==(const TableRow&, const TableRow&) = default;
};

struct ResultsTable {
  std::vector<TableRow> rows;

  /// Formatted table; the best value of each column within a resolution
  /// block is marked with '*'.
  std::string to_text() const;
  /// Full-precision CSV that from_csv() reads back exactly.
  std::string to_csv() const;
  static ResultsTable from_csv(const std::string& csv);

  /// Formatted cells of one row in kTableColumns order, best flags applied.
  std::vector<std::string> formatted(std::size_t row) const;
};

/// "0.069(0.055)": three decimals for both parts.
std::string format_fixed3(const metrics::MeanStd& v);
/// "39.9(2.52)": three significant digits for both parts.
std::string format_sig3(const metrics::MeanStd& v);
std::string format_sig3(double v);

/// Fold reports sharing a (resolution, pretraining) key are pooled; an
/// existing pooled report (fold -1) is used as is. Requested rows without a
/// report appear as gaps.
ResultsTable emit_table(const std::vector<metrics::MetricsReport>& reports,
                        const std::vector<std::pair<int, std::string>>& requested = {});

/// Writes table.txt and table.csv into `dir`.
void write_table(const ResultsTable& table, const std::filesystem::path& dir);

struct ScatterMeta {
  int resolution = 0;
  std::string pretraining;
  std::size_t points = 0;
  double axis_min = 0.0;
  double axis_max = 0.0;
  double data_min = 0.0;
  double data_max = 0.0;
};

/// One scatter_<R>_<label>.csv (scan_id,patient_id,gt_bmd,pred_bmd) and .svg
/// per row, with the identity line drawn. Returns the metadata written into
/// each plot.
std::vector<ScatterMeta> emit_scatter(const std::vector<metrics::MetricsReport>& reports,
                                      const std::filesystem::path& out);
/// Reads the metadata attributes back from a rendered scatter plot.
ScatterMeta read_scatter_meta(const std::filesystem::path& svg);

struct ErrorMapInput {
  std::string scan_id;
  imaging::QuantImage gt;
  imaging::QuantImage pred;
};

/// RGB triple for a signed error scaled by `range` (blue below, white at
/// zero, red above).
std::array<std::uint8_t, 3> diverging_color(double error, double range);

/// Writes <scan>_error.qimg (pred - gt) and <scan>_error.png per input.
/// Returns the written .qimg paths.
std::vector<std::filesystem::path> emit_error_maps(const std::vector<ErrorMapInput>& scans,
                                                   const std::filesystem::path& out);

/// Runs run_dir/final.ckpt on the listed scans (all measured test scans of
/// `patients` when `scan_ids` is empty) and writes their error maps.
std::vector<std::filesystem::path> emit_error_maps(const std::filesystem::path& run_dir,
                                                   const DatasetReader& reader,
                                                   const std::vector<std::string>& patients,
                                                   const std::vector<std::string>& scan_ids,
                                                   const std::filesystem::path& out);

/// Decodes an 8-bit RGB PNG (used to check rendered error maps).
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;
};
RgbImage read_png_rgb(const std::filesystem::path& path);

}  // namespace qis::bench
