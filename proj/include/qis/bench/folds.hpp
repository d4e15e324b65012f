#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "qis/phantom/dataset.hpp"

namespace qis::bench {

/// Patient-wise k-fold split.
struct FoldPlan {
  int k = 4;
  std::uint64_t seed = 0;
  std::vector<std::vector<std::string>> test;  // per fold, sorted patient ids

  std::vector<std::string> train_patients(int fold) const;
  const std::vector<std::string>& test_patients(int fold) const;
  /// Fold whose test set contains `patient_id`, or -1.
  int fold_of(const std::string& patient_id) const;

  nlohmann::json to_json() const;
};

/// Shuffles patients by seed and deals contiguous chunks; the first n % k
/// folds get one extra patient. ConfigError when n < k.
FoldPlan make_folds(const std::vector<std::string>& patient_ids, int k, std::uint64_t seed);
FoldPlan make_folds(const phantom::DatasetManifest& manifest, int k, std::uint64_t seed);

}  // namespace qis::bench
