#include "qis/metrics/bmd.hpp"

#include "qis/error.hpp"

namespace qis::metrics {

BmdResult extract_bmd(const imaging::QuantImage& map, double threshold) {
  if (map.unit != imaging::Unit::areal_density) throw UnitError("extract_bmd expects a g/cm^2 map");
  double sum = 0.0;
  std::size_t count = 0;
  for (float p : map.pixels) {
    if (p > threshold) {
      sum += p;
      ++count;
    }
  }
  if (count == 0) throw EmptyRegionError("no pixel above the BMD threshold");
  return BmdResult{sum / static_cast<double>(count), count, threshold};
}

}  // namespace qis::metrics
