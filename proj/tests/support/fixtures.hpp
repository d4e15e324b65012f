#pragma once

#include <filesystem>
#include <string>
#include <unistd.h>

#include "qis/phantom/dataset.hpp"

namespace qis::support {

/// Desk-profile dataset built once per process under the temp directory.
inline std::filesystem::path small_dataset(int patients = 8, std::uint64_t seed = 5) {
  const auto root = std::filesystem::temp_directory_path() / "qis_unit" /
                    ("ds_" + std::to_string(patients) + "_" + std::to_string(seed) + "_" +
                     std::to_string(static_cast<long long>(::getpid())));
  if (!std::filesystem::exists(root / "manifest.json"))
    phantom::build_dataset(patients, root, seed, phantom::DatasetProfile::desk());
  return root;
}

inline std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "qis_unit" /
                   (name + "_" + std::to_string(static_cast<long long>(::getpid())));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace qis::support
