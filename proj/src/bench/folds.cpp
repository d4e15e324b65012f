#include "qis/bench/folds.hpp"

#include <algorithm>

#include "qis/error.hpp"
#include "qis/rng.hpp"

namespace qis::bench {

std::vector<std::string> FoldPlan::train_patients(int fold) const {
  if (fold < 0 || fold >= k) throw ConfigError("fold out of range");
  std::vector<std::string> out;
  for (int f = 0; f < k; ++f)
    if (f != fold) out.insert(out.end(), test[f].begin(), test[f].end());
  std::sort(out.begin(), out.end());
  return out;
}

const std::vector<std::string>& FoldPlan::test_patients(int fold) const {
  if (fold < 0 || fold >= k) throw ConfigError("fold out of range");
  return test[fold];
}

int FoldPlan::fold_of(const std::string& patient_id) const {
  for (int f = 0; f < k; ++f)
    if (std::binary_search(test[f].begin(), test[f].end(), patient_id)) return f;
  return -1;
}

nlohmann::json FoldPlan::to_json() const { return {{"k", k}, {"seed", seed}, {"test", test}}; }

FoldPlan make_folds(const std::vector<std::string>& patient_ids, int k, std::uint64_t seed) {
  if (k < 1) throw ConfigError("fold count must be positive");
  std::vector<std::string> ids = patient_ids;
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) throw ConfigError("duplicate patient id");
  if (static_cast<int>(ids.size()) < k)
    throw ConfigError("need at least " + std::to_string(k) + " patients, got " + std::to_string(ids.size()));
  Rng rng = Rng::derive(seed, "folds");
  rng.shuffle(ids.begin(), ids.end());
  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  plan.test.resize(k);
  const std::size_t n = ids.size(), base = n / k, extra = n % k;
  std::size_t pos = 0;
  for (int f = 0; f < k; ++f) {
    const std::size_t take = base + (static_cast<std::size_t>(f) < extra ? 1 : 0);
    plan.test[f].assign(ids.begin() + pos, ids.begin() + pos + take);
    std::sort(plan.test[f].begin(), plan.test[f].end());
    pos += take;
  }
  return plan;
}

FoldPlan make_folds(const phantom::DatasetManifest& manifest, int k, std::uint64_t seed) {
  return make_folds(manifest.patient_ids(), k, seed);
}

}  // namespace qis::bench
