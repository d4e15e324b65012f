#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "qis/phantom/phantom.hpp"

namespace qis::phantom {

/// Dataset-scale settings. "Resolution R" means model inputs of R/2 x R
/// (width x height).
struct DatasetProfile {
  std::string name;
  int resolution = 64;
  int default_patients = 40;
  /// Fraction of patients with five scans (the rest have four).
  double five_scan_fraction = 0.0;
  /// Candidate original half-image widths; height is twice the width.
  std::vector<int> original_widths;
  RenderOptions render;

  static DatasetProfile desk();
  static DatasetProfile paper();
  static DatasetProfile by_name(const std::string& name);
};

struct ScanEntry {
  ScanRecord record;
  bool valid = true;
  double rotation_deg = 0.0;
  std::string xray_path;  // relative to the dataset root
  std::string bone_path;
  std::string pf_path;
  std::string roi_path;
};

struct DatasetManifest {
  static constexpr int kVersion = 1;

  int version = kVersion;
  std::uint64_t seed = 0;
  std::string profile;
  int resolution = 64;
  double bmd_threshold = 1e-3;
  double bone_scale = 1.0;  // max GT bone areal density, normalises targets
  double pf_scale = 1.0;    // max GT PF areal density
  std::vector<PatientRecord> patients;
  std::vector<ScanEntry> scans;

  /// Measured-side, valid records: the target-task pairs.
  std::vector<const ScanEntry*> target_entries() const;
  /// Every valid record (both sides): the pretraining pool.
  std::vector<const ScanEntry*> pretrain_entries() const;
  const PatientRecord& patient(const std::string& id) const;
  std::vector<std::string> patient_ids() const;

  nlohmann::json to_json() const;
  static DatasetManifest from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static DatasetManifest load(const std::filesystem::path& path);
};

struct ScanPlan {
  std::vector<PatientRecord> patients;
  std::vector<PhantomSpec> specs;
  std::vector<ScanRecord> records;  // both sides of every scan
};

/// Patients, scan counts (4 or 5), poses, measured sides and original dims,
/// without rendering.
ScanPlan plan_scans(int n_patients, std::uint64_t seed, const DatasetProfile& profile);

/// Renders every record of the plan and writes .qimg files plus
/// manifest.json. A pure function of (n_patients, seed, profile).
DatasetManifest build_dataset(int n_patients, const std::filesystem::path& out_dir, std::uint64_t seed,
                              const DatasetProfile& profile);

}  // namespace qis::phantom
