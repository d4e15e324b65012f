#pragma once

#include <filesystem>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "qis/imaging/quant_image.hpp"
#include "qis/phantom/dataset.hpp"
#include "qis/pretrain/trainer.hpp"
#include "qis/target/trainer.hpp"

namespace qis::bench {

/// Log of every dataset file read, tagged with the phase that read it.
class DataAccessAudit {
 public:
  struct Entry {
    std::string phase;
    std::string path;  // relative to the dataset root
  };

  void record(const std::string& phase, const std::string& path);
  std::vector<Entry> entries() const;
  /// Entries of `phase` whose path belongs to one of `patients`' scans.
  std::vector<Entry> reads_of(const phantom::DatasetManifest& manifest, const std::string& phase,
                              const std::vector<std::string>& patients) const;
  void clear();

 private:
  mutable std::mutex mu_;
  std::vector<Entry> entries_;
};

/// Dataset reader that records every file access in an audit log.
class DatasetReader {
 public:
  DatasetReader(std::filesystem::path root, phantom::DatasetManifest manifest, DataAccessAudit* audit = nullptr);

  static DatasetReader open(const std::filesystem::path& root, DataAccessAudit* audit = nullptr);

  const phantom::DatasetManifest& manifest() const { return manifest_; }
  const std::filesystem::path& root() const { return root_; }

  imaging::QuantImage read(const std::string& relative_path, const std::string& phase) const;
  imaging::RoiMask read_roi(const std::string& relative_path, const std::string& phase) const;

  /// Both sides of every valid scan of `patients`, resized to R/2 x R.
  pretrain::PretrainData pretrain_data(const std::vector<std::string>& patients, int resolution,
                                       bool with_bones, const std::string& phase = "pretrain") const;
  /// Measured-side pairs of `patients`: x-ray and PF map / pf_scale at R/2 x R.
  target::TargetData target_data(const std::vector<std::string>& patients, int resolution,
                                 const std::string& phase = "target") const;
  /// Measured-side entries of `patients`, manifest order.
  std::vector<const phantom::ScanEntry*> target_entries(const std::vector<std::string>& patients) const;

 private:
  std::filesystem::path root_;
  phantom::DatasetManifest manifest_;
  DataAccessAudit* audit_;
};

}  // namespace qis::bench
