#include "qis/phantom/records.hpp"

#include "qis/error.hpp"

namespace qis::phantom {

std::string_view to_string(Sex s) { return s == Sex::male ? "male" : "female"; }
std::string_view to_string(Side s) { return s == Side::left ? "left" : "right"; }

std::string_view to_string(Pose p) {
  switch (p) {
    case Pose::standing: return "standing";
    case Pose::supine: return "supine";
    case Pose::resting: return "resting";
    case Pose::abduction: return "abduction";
    case Pose::adduction: return "adduction";
  }
  return "?";
}

Sex sex_from_string(std::string_view s) {
  if (s == "male") return Sex::male;
  if (s == "female") return Sex::female;
  throw FormatError("unknown sex: " + std::string(s));
}

Side side_from_string(std::string_view s) {
  if (s == "left") return Side::left;
  if (s == "right") return Side::right;
  throw FormatError("unknown side: " + std::string(s));
}

Pose pose_from_string(std::string_view s) {
  for (Pose p : kAllPoses)
    if (to_string(p) == s) return p;
  throw FormatError("unknown pose: " + std::string(s));
}

}  // namespace qis::phantom
