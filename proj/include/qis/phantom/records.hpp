#pragma once

#include <array>
#include <string>
#include <string_view>

namespace qis::phantom {

enum class Sex { male, female };
enum class Side { left, right };
enum class Pose { standing, supine, resting, abduction, adduction };

inline constexpr int kPoseCount = 5;
inline constexpr std::array<Pose, kPoseCount> kAllPoses{Pose::standing, Pose::supine, Pose::resting,
                                                        Pose::abduction, Pose::adduction};

std::string_view to_string(Sex s);
std::string_view to_string(Side s);
std::string_view to_string(Pose p);
Sex sex_from_string(std::string_view s);
Side side_from_string(std::string_view s);
Pose pose_from_string(std::string_view s);

struct PatientRecord {
  std::string patient_id;
  double age = 0.0;        // years, [20, 100]
  Sex sex = Sex::female;
  double height_cm = 0.0;  // [120, 210]
  double weight_kg = 0.0;  // [30, 150]

  friend bool operator==(const PatientRecord&, const PatientRecord&) = default;
};

/// One half-radiograph (one body side of one scan).
struct ScanRecord {
  std::string patient_id;
  std::string scan_id;
  Pose pose = Pose::standing;
  Side side = Side::right;
  bool measured = false;  // the side whose BMD is the target label
  int original_w = 0;
  int original_h = 0;

  /// Unique per side, e.g. "P0003-S2-L".
  std::string key() const { return scan_id + (side == Side::left ? "-L" : "-R"); }

  friend bool operator==(const ScanRecord&, const ScanRecord&) = default;
};

}  // namespace qis::phantom
