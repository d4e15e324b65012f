#include "qis/phantom/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "qis/error.hpp"
#include "qis/imaging/qimg_io.hpp"

namespace qis::phantom {

namespace fs = std::filesystem;

DatasetProfile DatasetProfile::desk() {
  DatasetProfile p;
  p.name = "desk";
  p.resolution = 64;
  p.default_patients = 40;
  p.five_scan_fraction = 0.0;
  p.original_widths = {56, 60, 64};
  return p;
}

DatasetProfile DatasetProfile::paper() {
  DatasetProfile p;
  p.name = "paper";
  p.resolution = 256;
  p.default_patients = 600;
  // 256 of 600 patients with five scans: 344*4 + 256*5 = 2656 measured pairs.
  p.five_scan_fraction = 256.0 / 600.0;
  p.original_widths = {512, 544, 576};
  return p;
}

DatasetProfile DatasetProfile::by_name(const std::string& name) {
  if (name == "desk") return desk();
  if (name == "paper") return paper();
  throw ConfigError("unknown profile: " + name);
}

std::vector<const ScanEntry*> DatasetManifest::target_entries() const {
  std::vector<const ScanEntry*> out;
  for (const auto& s : scans)
    if (s.valid && s.record.measured) out.push_back(&s);
  return out;
}

std::vector<const ScanEntry*> DatasetManifest::pretrain_entries() const {
  std::vector<const ScanEntry*> out;
  for (const auto& s : scans)
    if (s.valid) out.push_back(&s);
  return out;
}

const PatientRecord& DatasetManifest::patient(const std::string& id) const {
  for (const auto& p : patients)
    if (p.patient_id == id) return p;
  throw ConfigError("unknown patient: " + id);
}

std::vector<std::string> DatasetManifest::patient_ids() const {
  std::vector<std::string> ids;
  for (const auto& p : patients) ids.push_back(p.patient_id);
  return ids;
}

nlohmann::json DatasetManifest::to_json() const {
  nlohmann::json pj = nlohmann::json::array();
  for (const auto& p : patients)
    pj.push_back({{"patient_id", p.patient_id},
                  {"age", p.age},
                  {"sex", to_string(p.sex)},
                  {"height_cm", p.height_cm},
                  {"weight_kg", p.weight_kg}});
  nlohmann::json sj = nlohmann::json::array();
  for (const auto& s : scans)
    sj.push_back({{"patient_id", s.record.patient_id},
                  {"scan_id", s.record.scan_id},
                  {"pose", to_string(s.record.pose)},
                  {"side", to_string(s.record.side)},
                  {"measured", s.record.measured},
                  {"original_w", s.record.original_w},
                  {"original_h", s.record.original_h},
                  {"valid", s.valid},
                  {"rotation_deg", s.rotation_deg},
                  {"files", {{"xray", s.xray_path}, {"bone", s.bone_path}, {"pf", s.pf_path}, {"roi", s.roi_path}}}});
  return {{"schema", "qisbench.manifest"},
          {"version", version},
          {"seed", seed},
          {"profile", profile},
          {"resolution", resolution},
          {"bmd_threshold", bmd_threshold},
          {"scale", {{"bone_g_per_cm2", bone_scale}, {"pf_g_per_cm2", pf_scale}}},
          {"patients", pj},
          {"scans", sj}};
}

DatasetManifest DatasetManifest::from_json(const nlohmann::json& j) {
  DatasetManifest m;
  m.version = j.at("version").get<int>();
  if (m.version != kVersion) throw FormatError("unsupported manifest version");
  m.seed = j.at("seed").get<std::uint64_t>();
  m.profile = j.at("profile").get<std::string>();
  m.resolution = j.at("resolution").get<int>();
  m.bmd_threshold = j.at("bmd_threshold").get<double>();
  m.bone_scale = j.at("scale").at("bone_g_per_cm2").get<double>();
  m.pf_scale = j.at("scale").at("pf_g_per_cm2").get<double>();
  for (const auto& p : j.at("patients"))
    m.patients.push_back({p.at("patient_id").get<std::string>(), p.at("age").get<double>(),
                          sex_from_string(p.at("sex").get<std::string>()), p.at("height_cm").get<double>(),
                          p.at("weight_kg").get<double>()});
  for (const auto& s : j.at("scans")) {
    ScanEntry e;
    e.record = {s.at("patient_id").get<std::string>(), s.at("scan_id").get<std::string>(),
                pose_from_string(s.at("pose").get<std::string>()), side_from_string(s.at("side").get<std::string>()),
                s.at("measured").get<bool>(), s.at("original_w").get<int>(), s.at("original_h").get<int>()};
    e.valid = s.at("valid").get<bool>();
    e.rotation_deg = s.at("rotation_deg").get<double>();
    const auto& f = s.at("files");
    e.xray_path = f.at("xray").get<std::string>();
    e.bone_path = f.at("bone").get<std::string>();
    e.pf_path = f.at("pf").get<std::string>();
    e.roi_path = f.at("roi").get<std::string>();
    m.scans.push_back(std::move(e));
  }
  return m;
}

void DatasetManifest::save(const fs::path& path) const {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write manifest: " + path.string());
  f << to_json().dump(2) << '\n';
  if (!f) throw IoError("manifest write failed: " + path.string());
}

DatasetManifest DatasetManifest::load(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read manifest: " + path.string());
  try {
    return from_json(nlohmann::json::parse(f));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
}

ScanPlan plan_scans(int n_patients, std::uint64_t seed, const DatasetProfile& profile) {
  if (n_patients < 1) throw ConfigError("need at least one patient");
  if (profile.original_widths.empty()) throw ConfigError("profile has no original widths");
  ScanPlan plan;
  Rng rng = Rng::derive(seed, "plan:" + profile.name);

  std::vector<int> order(n_patients);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order.begin(), order.end());
  const int n_five = static_cast<int>(std::lround(profile.five_scan_fraction * n_patients));
  std::vector<char> five(n_patients, 0);
  for (int i = 0; i < n_five; ++i) five[order[i]] = 1;

  for (int i = 0; i < n_patients; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "P%04d", i + 1);
    auto [patient, spec] = sample_patient(seed, id);
    plan.patients.push_back(patient);
    plan.specs.push_back(spec);

    const Side measured = rng.bernoulli(0.5) ? Side::left : Side::right;
    const int ow = profile.original_widths[rng.below(profile.original_widths.size())];
    std::vector<Pose> poses(kAllPoses.begin(), kAllPoses.end());
    if (!five[i]) poses.erase(poses.begin() + static_cast<long>(rng.below(kPoseCount)));

    for (std::size_t k = 0; k < poses.size(); ++k) {
      const std::string scan_id = std::string(id) + "-S" + std::to_string(k + 1);
      for (Side side : {Side::right, Side::left})
        plan.records.push_back({id, scan_id, poses[k], side, side == measured, ow, 2 * ow});
    }
  }
  return plan;
}

DatasetManifest build_dataset(int n_patients, const fs::path& out_dir, std::uint64_t seed,
                              const DatasetProfile& profile) {
  const ScanPlan plan = plan_scans(n_patients, seed, profile);
  std::error_code ec;
  fs::create_directories(out_dir / "scans", ec);
  if (ec) throw IoError("cannot create " + (out_dir / "scans").string() + ": " + ec.message());

  DatasetManifest m;
  m.seed = seed;
  m.profile = profile.name;
  m.resolution = profile.resolution;
  m.patients = plan.patients;
  double bone_max = 0.0, pf_max = 0.0;

  for (const ScanRecord& rec : plan.records) {
    const auto pidx = static_cast<std::size_t>(std::stoi(rec.patient_id.substr(1)) - 1);
    Rng rng = scan_rng(seed, rec);
    const RenderedScan r = render_scan(plan.specs[pidx], rec, rng, profile.render);

    ScanEntry e;
    e.record = rec;
    e.valid = r.valid;
    e.rotation_deg = r.rotation_deg;
    const std::string stem = "scans/" + rec.key();
    e.xray_path = stem + "_xray.qimg";
    e.bone_path = stem + "_bone.qimg";
    e.pf_path = stem + "_pf.qimg";
    e.roi_path = stem + "_roi.qimg";
    imaging::save_qimg(r.xray, out_dir / e.xray_path);
    imaging::save_qimg(r.bone_map, out_dir / e.bone_path);
    imaging::save_qimg(r.pf_map, out_dir / e.pf_path);
    imaging::save_roi(r.pf_roi, out_dir / e.roi_path);

    if (r.valid) {
      bone_max = std::max<double>(bone_max, *std::max_element(r.bone_map.pixels.begin(), r.bone_map.pixels.end()));
      pf_max = std::max<double>(pf_max, *std::max_element(r.pf_map.pixels.begin(), r.pf_map.pixels.end()));
    }
    m.scans.push_back(std::move(e));
  }
  m.bone_scale = bone_max > 0.0 ? bone_max : 1.0;
  m.pf_scale = pf_max > 0.0 ? pf_max : 1.0;
  m.save(out_dir / "manifest.json");
  return m;
}

}  // namespace qis::phantom
