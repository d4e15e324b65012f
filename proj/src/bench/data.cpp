#include "qis/bench/data.hpp"

#include <algorithm>

#include "qis/error.hpp"
#include "qis/imaging/qimg_io.hpp"
#include "qis/imaging/resize.hpp"
#include "qis/nets/training.hpp"

namespace qis::bench {

void DataAccessAudit::record(const std::string& phase, const std::string& path) {
  std::lock_guard<std::mutex> lock(mu_);
  entries_.push_back({phase, path});
}

std::vector<DataAccessAudit::Entry> DataAccessAudit::entries() const {
  std::lock_guard<std::mutex> lock(mu_);
  return entries_;
}

std::vector<DataAccessAudit::Entry> DataAccessAudit::reads_of(const phantom::DatasetManifest& manifest,
                                                              const std::string& phase,
                                                              const std::vector<std::string>& patients) const {
  std::set<std::string> paths;
  const std::set<std::string> wanted(patients.begin(), patients.end());
  for (const auto& s : manifest.scans) {
    if (!wanted.count(s.record.patient_id)) continue;
    for (const auto* p : {&s.xray_path, &s.bone_path, &s.pf_path, &s.roi_path}) paths.insert(*p);
  }
  std::vector<Entry> out;
  for (const auto& e : entries())
    if (e.phase == phase && paths.count(e.path)) out.push_back(e);
  return out;
}

void DataAccessAudit::clear() {
  std::lock_guard<std::mutex> lock(mu_);
  entries_.clear();
}

DatasetReader::DatasetReader(std::filesystem::path root, phantom::DatasetManifest manifest, DataAccessAudit* audit)
    : root_(std::move(root)), manifest_(std::move(manifest)), audit_(audit) {}

DatasetReader DatasetReader::open(const std::filesystem::path& root, DataAccessAudit* audit) {
  return DatasetReader(root, phantom::DatasetManifest::load(root / "manifest.json"), audit);
}

imaging::QuantImage DatasetReader::read(const std::string& relative_path, const std::string& phase) const {
  if (audit_ != nullptr) audit_->record(phase, relative_path);
  return imaging::load_qimg(root_ / relative_path);
}

imaging::RoiMask DatasetReader::read_roi(const std::string& relative_path, const std::string& phase) const {
  if (audit_ != nullptr) audit_->record(phase, relative_path);
  return imaging::load_roi(root_ / relative_path);
}

namespace {

void copy_into(torch::Tensor& dst, int64_t i, const imaging::QuantImage& img, double divisor) {
  auto t = nets::to_tensor(img).squeeze(0);
  if (divisor != 1.0) t = t / divisor;
  dst[i].copy_(t);
}

}  // namespace

pretrain::PretrainData DatasetReader::pretrain_data(const std::vector<std::string>& patients, int resolution,
                                                    bool with_bones, const std::string& phase) const {
  const std::set<std::string> wanted(patients.begin(), patients.end());
  const auto all_ids = manifest_.patient_ids();
  std::vector<const phantom::ScanEntry*> entries;
  for (const auto* e : manifest_.pretrain_entries())
    if (wanted.count(e->record.patient_id)) entries.push_back(e);
  const int64_t n = static_cast<int64_t>(entries.size());
  const int w = resolution / 2, h = resolution;
  pretrain::PretrainData d;
  if (n == 0) return d;
  d.xrays = torch::empty({n, 1, h, w}, torch::kFloat32);
  if (with_bones) d.bones = torch::empty({n, 1, h, w}, torch::kFloat32);
  d.poses = torch::empty({n}, torch::kLong);
  d.patients = torch::empty({n}, torch::kLong);
  d.info = torch::empty({n, 4}, torch::kFloat64);
  for (int64_t i = 0; i < n; ++i) {
    const auto& e = *entries[i];
    copy_into(d.xrays, i, imaging::resize(read(e.xray_path, phase), w, h), 1.0);
    if (with_bones) copy_into(d.bones, i, imaging::resize(read(e.bone_path, phase), w, h), manifest_.bone_scale);
    d.poses[i] = static_cast<int64_t>(e.record.pose);
    const auto it = std::lower_bound(all_ids.begin(), all_ids.end(), e.record.patient_id);
    d.patients[i] = static_cast<int64_t>(it - all_ids.begin());
    const auto& p = manifest_.patient(e.record.patient_id);
    d.info[i][0] = p.age;
    d.info[i][1] = p.height_cm;
    d.info[i][2] = p.weight_kg;
    d.info[i][3] = p.sex == phantom::Sex::male ? 1.0 : 0.0;
  }
  return d;
}

std::vector<const phantom::ScanEntry*> DatasetReader::target_entries(const std::vector<std::string>& patients) const {
  const std::set<std::string> wanted(patients.begin(), patients.end());
  std::vector<const phantom::ScanEntry*> out;
  for (const auto* e : manifest_.target_entries())
    if (wanted.count(e->record.patient_id)) out.push_back(e);
  return out;
}

target::TargetData DatasetReader::target_data(const std::vector<std::string>& patients, int resolution,
                                              const std::string& phase) const {
  const auto entries = target_entries(patients);
  const int64_t n = static_cast<int64_t>(entries.size());
  const int w = resolution / 2, h = resolution;
  target::TargetData d;
  if (n == 0) return d;
  d.xrays = torch::empty({n, 1, h, w}, torch::kFloat32);
  d.targets = torch::empty({n, 1, h, w}, torch::kFloat32);
  for (int64_t i = 0; i < n; ++i) {
    copy_into(d.xrays, i, imaging::resize(read(entries[i]->xray_path, phase), w, h), 1.0);
    copy_into(d.targets, i, imaging::resize(read(entries[i]->pf_path, phase), w, h), manifest_.pf_scale);
  }
  return d;
}

}  // namespace qis::bench
