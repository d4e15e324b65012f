#include "qis/bench/reporting.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <regex>
#include <sstream>

#include "qis/bench/evaluate.hpp"
#include "qis/error.hpp"
#include "qis/imaging/qimg_io.hpp"
#include "qis/nets/checkpoint.hpp"
#include "qis/target/trainer.hpp"

namespace qis::bench {

namespace fs = std::filesystem;
using metrics::MeanStd;
using metrics::MetricsReport;

namespace {

std::string printf_str(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

std::string full(double v) { return printf_str("%.17g", v); }

double parse_double(const std::string& s) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw FormatError("bad number '" + s + "'");
  return v;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::stringstream ss(line);
  while (std::getline(ss, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

using RowKey = std::pair<int, std::string>;

/// Groups reports by row key; pooled reports win over fold reports.
std::map<RowKey, MetricsReport> pooled_by_row(const std::vector<MetricsReport>& reports,
                                              std::vector<RowKey>* order) {
  std::map<RowKey, std::vector<MetricsReport>> folds;
  std::map<RowKey, MetricsReport> pooled;
  for (const auto& r : reports) {
    RowKey k{r.key.resolution, r.key.pretraining};
    if (std::find(order->begin(), order->end(), k) == order->end()) order->push_back(k);
    if (r.key.fold < 0)
      pooled[k] = r;
    else
      folds[k].push_back(r);
  }
  for (auto& [k, list] : folds) {
    if (pooled.count(k)) continue;
    std::sort(list.begin(), list.end(), [](const auto& a, const auto& b) { return a.key.fold < b.key.fold; });
    pooled[k] = pool_reports(list);
  }
  return pooled;
}

TableRow row_from(const RowKey& k, const MetricsReport& r) {
  TableRow row;
  row.resolution = k.first;
  row.pretraining = k.second;
  row.present = true;
  row.pcc = r.aggregates.pcc;
  row.icc = r.aggregates.icc;
  row.mae = r.aggregates.mae;
  row.psnr = r.aggregates.psnr;
  row.psnr_roi = r.aggregates.psnr_roi;
  row.ssim_roi = r.aggregates.ssim_roi;
  row.scans = r.aggregates.scans;
  return row;
}

std::string fixed3(double v) { return std::isfinite(v) ? printf_str("%.3f", v) : "n/a"; }

std::string fixed3(const std::optional<double>& v) { return v ? fixed3(*v) : "n/a"; }

// Formatted mean and std parts of each column, in kTableColumns order. PCC
// and ICC have no std part.
struct Parts {
  std::string mean;
  std::string std;
};

std::vector<Parts> parts_of(const TableRow& r) {
  if (!r.present) return std::vector<Parts>(kTableColumns.size(), Parts{"-", ""});
  return {{fixed3(r.pcc), ""},
          {fixed3(r.icc), ""},
          {fixed3(r.mae.mean), fixed3(r.mae.std)},
          {format_sig3(r.psnr.mean), format_sig3(r.psnr.std)},
          {format_sig3(r.psnr_roi.mean), format_sig3(r.psnr_roi.std)},
          {fixed3(r.ssim_roi.mean), fixed3(r.ssim_roi.std)}};
}

bool numeric(const std::string& s) { return !s.empty() && s != "n/a" && s != "-"; }

}  // namespace

std::string format_sig3(double v) {
  if (!std::isfinite(v)) return "n/a";
  if (v == 0.0) return "0.00";
  int mag = static_cast<int>(std::floor(std::log10(std::fabs(v))));
  int decimals = std::max(0, 2 - mag);
  std::string s = printf_str(("%." + std::to_string(decimals) + "f").c_str(), v);
  // Rounding can carry into a new digit (9.996 -> 10.00); redo with one less.
  const double rounded = std::stod(s);
  if (rounded != 0.0 && static_cast<int>(std::floor(std::log10(std::fabs(rounded)))) > mag && decimals > 0)
    s = printf_str(("%." + std::to_string(decimals - 1) + "f").c_str(), v);
  return s;
}

std::string format_fixed3(const MeanStd& v) { return fixed3(v.mean) + "(" + fixed3(v.std) + ")"; }

std::string format_sig3(const MeanStd& v) { return format_sig3(v.mean) + "(" + format_sig3(v.std) + ")"; }

std::vector<std::string> ResultsTable::formatted(std::size_t index) const {
  const auto& row = rows.at(index);
  const auto mine = parts_of(row);
  std::vector<std::string> out;
  for (std::size_t c = 0; c < kTableColumns.size(); ++c) {
    const bool lower_better = kTableColumns[c] == "mAE";
    bool best_mean = numeric(mine[c].mean);
    bool best_std = numeric(mine[c].std);
    for (const auto& other : rows) {
      if (other.resolution != row.resolution || !other.present) continue;
      const auto theirs = parts_of(other)[c];
      if (best_mean && numeric(theirs.mean)) {
        const double a = std::stod(mine[c].mean), b = std::stod(theirs.mean);
        if (lower_better ? b < a : b > a) best_mean = false;
      }
      if (best_std && numeric(theirs.std) && std::stod(theirs.std) < std::stod(mine[c].std)) best_std = false;
    }
    std::string cell = mine[c].mean + (best_mean ? "*" : "");
    if (!mine[c].std.empty()) cell += "(" + mine[c].std + (best_std ? "*" : "") + ")";
    out.push_back(cell);
  }
  return out;
}

std::string ResultsTable::to_text() const {
  std::vector<std::vector<std::string>> cells;
  cells.push_back({"Res.", "Pretraining"});
  for (const auto& c : kTableColumns) cells.back().push_back(c);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::vector<std::string> line{std::to_string(rows[i].resolution), rows[i].pretraining};
    for (auto& s : formatted(i)) line.push_back(s);
    cells.push_back(std::move(line));
  }
  std::vector<std::size_t> width(cells.front().size(), 0);
  for (const auto& line : cells)
    for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], line[c].size());
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i > 1 && rows[i - 1].resolution != rows[i - 2].resolution) out += '\n';
    std::string line;
    for (std::size_t c = 0; c < cells[i].size(); ++c) {
      if (c) line += "  ";
      line += cells[i][c] + std::string(width[c] - cells[i][c].size(), ' ');
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + '\n';
  }
  return out;
}

std::string ResultsTable::to_csv() const {
  std::string out =
      "resolution,pretraining,present,scans,pcc,icc,mae_mean,mae_std,psnr_mean,psnr_std,psnr_roi_mean,"
      "psnr_roi_std,ssim_roi_mean,ssim_roi_std\n";
  auto opt = [](const std::optional<double>& v) { return v ? full(*v) : std::string(); };
  for (const auto& r : rows) {
    // Pretraining labels can hold commas (cascades), so they are quoted.
    out += std::to_string(r.resolution) + ",\"" + r.pretraining + "\"," + (r.present ? "1" : "0") + "," +
           std::to_string(r.scans) + "," + opt(r.pcc) + "," + opt(r.icc) + "," + full(r.mae.mean) + "," +
           full(r.mae.std) + "," + full(r.psnr.mean) + "," + full(r.psnr.std) + "," + full(r.psnr_roi.mean) + "," +
           full(r.psnr_roi.std) + "," + full(r.ssim_roi.mean) + "," + full(r.ssim_roi.std) + "\n";
  }
  return out;
}

ResultsTable ResultsTable::from_csv(const std::string& csv) {
  ResultsTable t;
  std::stringstream ss(csv);
  std::string line;
  if (!std::getline(ss, line) || line.rfind("resolution,pretraining,", 0) != 0)
    throw FormatError("results table CSV: missing header");
  const std::regex row_re("^(-?\\d+),\"([^\"]*)\",(.*)$");
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    std::smatch m;
    if (!std::regex_match(line, m, row_re)) throw FormatError("results table CSV: bad row '" + line + "'");
    const auto f = split(m[3].str(), ',');
    if (f.size() != 12) throw FormatError("results table CSV: wrong field count in '" + line + "'");
    TableRow r;
    r.resolution = std::stoi(m[1].str());
    r.pretraining = m[2].str();
    r.present = f[0] == "1";
    r.scans = std::stoul(f[1]);
    if (!f[2].empty()) r.pcc = parse_double(f[2]);
    if (!f[3].empty()) r.icc = parse_double(f[3]);
    r.mae = {parse_double(f[4]), parse_double(f[5])};
    r.psnr = {parse_double(f[6]), parse_double(f[7])};
    r.psnr_roi = {parse_double(f[8]), parse_double(f[9])};
    r.ssim_roi = {parse_double(f[10]), parse_double(f[11])};
    t.rows.push_back(std::move(r));
  }
  return t;
}

ResultsTable emit_table(const std::vector<MetricsReport>& reports, const std::vector<RowKey>& requested) {
  std::vector<RowKey> order;
  const auto pooled = pooled_by_row(reports, &order);
  if (!requested.empty()) {
    std::vector<RowKey> all = requested;
    for (const auto& k : order)
      if (std::find(all.begin(), all.end(), k) == all.end()) all.push_back(k);
    order = std::move(all);
  }
  std::stable_sort(order.begin(), order.end(), [](const RowKey& a, const RowKey& b) { return a.first < b.first; });
  ResultsTable t;
  for (const auto& k : order) {
    auto it = pooled.find(k);
    if (it != pooled.end()) {
      t.rows.push_back(row_from(k, it->second));
    } else {
      TableRow gap;
      gap.resolution = k.first;
      gap.pretraining = k.second;
      t.rows.push_back(gap);
    }
  }
  return t;
}

void write_table(const ResultsTable& table, const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream(dir / "table.txt") << table.to_text();
  std::ofstream(dir / "table.csv") << table.to_csv();
}

// ---------------------------------------------------------------------------
// Scatter plots

namespace {

std::string file_label(const std::string& label) {
  std::string s = label;
  std::replace(s.begin(), s.end(), ',', '+');
  return s;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else if (c == '"') out += "&quot;";
    else out += c;
  }
  return out;
}

}  // namespace

std::vector<ScatterMeta> emit_scatter(const std::vector<MetricsReport>& reports, const fs::path& out) {
  fs::create_directories(out);
  std::vector<RowKey> order;
  const auto pooled = pooled_by_row(reports, &order);
  std::vector<ScatterMeta> metas;
  for (const auto& key : order) {
    const auto& report = pooled.at(key);
    const std::string stem = "scatter_" + std::to_string(key.first) + "_" + file_label(key.second);

    ScatterMeta meta;
    meta.resolution = key.first;
    meta.pretraining = key.second;
    meta.data_min = std::numeric_limits<double>::infinity();
    meta.data_max = -std::numeric_limits<double>::infinity();
    std::string csv = "scan_id,patient_id,gt_bmd,pred_bmd\n";
    std::vector<std::pair<double, double>> pts;
    for (const auto& r : report.rows) {
      if (!r.gt_bmd || !r.pred_bmd) continue;
      csv += r.scan_id + "," + r.patient_id + "," + full(*r.gt_bmd) + "," + full(*r.pred_bmd) + "\n";
      pts.emplace_back(*r.gt_bmd, *r.pred_bmd);
      meta.data_min = std::min({meta.data_min, *r.gt_bmd, *r.pred_bmd});
      meta.data_max = std::max({meta.data_max, *r.gt_bmd, *r.pred_bmd});
    }
    meta.points = pts.size();
    std::ofstream(out / (stem + ".csv")) << csv;

    if (pts.empty()) {
      meta.data_min = meta.data_max = 0.0;
      meta.axis_min = 0.0;
      meta.axis_max = 1.0;
    } else {
      const double pad = std::max(0.05 * (meta.data_max - meta.data_min), 1e-3);
      meta.axis_min = meta.data_min - pad;
      meta.axis_max = meta.data_max + pad;
    }

    // Square plot, same range on both axes so the identity line is the diagonal.
    const double size = 400, margin = 50, span = meta.axis_max - meta.axis_min;
    auto px = [&](double v) { return margin + (v - meta.axis_min) / span * size; };
    auto py = [&](double v) { return margin + size - (v - meta.axis_min) / span * size; };
    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size + 2 * margin << "\" height=\""
        << size + 2 * margin << "\" data-resolution=\"" << meta.resolution << "\" data-pretraining=\""
        << xml_escape(meta.pretraining) << "\" data-points=\"" << meta.points << "\" data-axis-min=\""
        << full(meta.axis_min) << "\" data-axis-max=\"" << full(meta.axis_max) << "\" data-data-min=\""
        << full(meta.data_min) << "\" data-data-max=\"" << full(meta.data_max) << "\">\n";
    svg << "<rect x=\"" << margin << "\" y=\"" << margin << "\" width=\"" << size << "\" height=\"" << size
        << "\" fill=\"white\" stroke=\"black\"/>\n";
    svg << "<line class=\"identity\" x1=\"" << px(meta.axis_min) << "\" y1=\"" << py(meta.axis_min) << "\" x2=\""
        << px(meta.axis_max) << "\" y2=\"" << py(meta.axis_max) << "\" stroke=\"gray\" stroke-dasharray=\"4 4\"/>\n";
    for (const auto& [gx, gy] : pts)
      svg << "<circle cx=\"" << px(gx) << "\" cy=\"" << py(gy) << "\" r=\"3\" fill=\"steelblue\" fill-opacity=\"0.7\"/>\n";
    svg << "<text x=\"" << margin + size / 2 << "\" y=\"" << size + 2 * margin - 12
        << "\" text-anchor=\"middle\" font-size=\"12\">GT aBMD (g/cm2)</text>\n";
    svg << "<text x=\"14\" y=\"" << margin + size / 2 << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 14 "
        << margin + size / 2 << ")\">Predicted aBMD (g/cm2)</text>\n";
    svg << "<text x=\"" << margin << "\" y=\"" << margin + size + 14 << "\" font-size=\"10\">"
        << printf_str("%.3f", meta.axis_min) << "</text>\n";
    svg << "<text x=\"" << margin + size << "\" y=\"" << margin + size + 14 << "\" text-anchor=\"end\" font-size=\"10\">"
        << printf_str("%.3f", meta.axis_max) << "</text>\n";
    svg << "<text x=\"" << margin + size / 2 << "\" y=\"" << margin - 16 << "\" text-anchor=\"middle\" font-size=\"13\">"
        << meta.resolution << " " << xml_escape(meta.pretraining) << " (n=" << meta.points << ")</text>\n";
    svg << "</svg>\n";
    std::ofstream(out / (stem + ".svg")) << svg.str();
    metas.push_back(meta);
  }
  return metas;
}

ScatterMeta read_scatter_meta(const fs::path& svg) {
  std::ifstream in(svg);
  if (!in) throw IoError("cannot read " + svg.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  auto attr = [&](const std::string& name) {
    std::smatch m;
    if (!std::regex_search(text, m, std::regex(name + "=\"([^\"]*)\"")))
      throw FormatError("scatter plot lacks " + name);
    return m[1].str();
  };
  ScatterMeta meta;
  meta.resolution = std::stoi(attr("data-resolution"));
  meta.pretraining = attr("data-pretraining");
  meta.points = std::stoul(attr("data-points"));
  meta.axis_min = parse_double(attr("data-axis-min"));
  meta.axis_max = parse_double(attr("data-axis-max"));
  meta.data_min = parse_double(attr("data-data-min"));
  meta.data_max = parse_double(attr("data-data-max"));
  return meta;
}

// ---------------------------------------------------------------------------
// Signed error maps

std::array<std::uint8_t, 3> diverging_color(double error, double range) {
  if (!(range > 0.0)) return {255, 255, 255};
  const double t = std::clamp(error / range, -1.0, 1.0);
  const auto fade = static_cast<std::uint8_t>(std::lround(255.0 * (1.0 - std::fabs(t))));
  if (t >= 0.0) return {255, fade, fade};
  return {fade, fade, 255};
}

namespace {

void write_png_rgb(const RgbImage& img, const fs::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, img.rgb.data(), 0, nullptr))
    throw IoError("cannot write " + path.string() + ": " + image.message);
}

}  // namespace

RgbImage read_png_rgb(const fs::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) throw IoError("cannot read " + path.string());
  image.format = PNG_FORMAT_RGB;
  RgbImage out;
  out.width = static_cast<int>(image.width);
  out.height = static_cast<int>(image.height);
  out.rgb.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, out.rgb.data(), 0, nullptr)) {
    png_image_free(&image);
    throw FormatError("cannot decode " + path.string() + ": " + image.message);
  }
  return out;
}

std::vector<fs::path> emit_error_maps(const std::vector<ErrorMapInput>& scans, const fs::path& out) {
  fs::create_directories(out);
  std::vector<fs::path> written;
  for (const auto& s : scans) {
    if (!s.gt.same_shape(s.pred)) throw ShapeError("error map " + s.scan_id + ": shape mismatch");
    auto err = imaging::QuantImage::zeros(s.gt.width, s.gt.height, s.gt.unit, s.gt.spacing_mm);
    float range = 0.0f;
    for (std::size_t i = 0; i < err.size(); ++i) {
      err.pixels[i] = s.pred.pixels[i] - s.gt.pixels[i];
      range = std::max(range, std::fabs(err.pixels[i]));
    }
    const fs::path qimg = out / (s.scan_id + "_error.qimg");
    imaging::save_qimg(err, qimg);

    RgbImage png{err.width, err.height, std::vector<std::uint8_t>(err.size() * 3)};
    for (std::size_t i = 0; i < err.size(); ++i) {
      const auto c = diverging_color(err.pixels[i], range);
      std::copy(c.begin(), c.end(), png.rgb.begin() + static_cast<std::ptrdiff_t>(3 * i));
    }
    write_png_rgb(png, out / (s.scan_id + "_error.png"));
    written.push_back(qimg);
  }
  return written;
}

std::vector<fs::path> emit_error_maps(const fs::path& run_dir, const DatasetReader& reader,
                                      const std::vector<std::string>& patients,
                                      const std::vector<std::string>& scan_ids, const fs::path& out) {
  const fs::path ckpt_path = run_dir / "final.ckpt";
  if (!fs::exists(ckpt_path)) throw IoError("no final.ckpt in " + run_dir.string());
  const auto ckpt = nets::load_checkpoint(ckpt_path);
  auto g = nets::restore_generator(ckpt);
  const int res = ckpt.meta.at("resolution").get<int>();
  const double scale = ckpt.meta.at("normalization_scale").get<double>();
  std::vector<ErrorMapInput> inputs;
  for (const auto* e : reader.target_entries(patients)) {
    const std::string id = e->record.key();
    if (!scan_ids.empty() && std::find(scan_ids.begin(), scan_ids.end(), id) == scan_ids.end()) continue;
    ErrorMapInput in;
    in.scan_id = id;
    in.gt = reader.read(e->pf_path, "evaluate");
    in.pred = target::infer_map(g, reader.read(e->xray_path, "evaluate"), res, scale);
    inputs.push_back(std::move(in));
  }
  return emit_error_maps(inputs, out);
}

}  // namespace qis::bench
