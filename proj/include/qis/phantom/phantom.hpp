#pragma once

#include <cstdint>
#include <string_view>
#include <utility>

#include "qis/imaging/quant_image.hpp"
#include "qis/phantom/records.hpp"
#include "qis/rng.hpp"

namespace qis::phantom {

struct Vec3 {
  double x = 0, y = 0, z = 0;
  friend bool operator==(const Vec3&, const Vec3&) = default;
};

/// Parametric hip phantom for the right side of the body. Coordinates are
/// millimetres in the half-image field of view: x grows laterally-to-medial
/// (the midline sits at x = fov_w_mm), y grows downwards, z is depth.
struct PhantomSpec {
  double fov_w_mm = 200.0;
  double fov_h_mm = 400.0;

  Vec3 head_center;
  double head_radius = 0.0;
  Vec3 neck_end;
  double neck_radius = 0.0;
  Vec3 shaft_end;
  double shaft_radius = 0.0;
  Vec3 ilium_center, ilium_axes;
  Vec3 roof_center, roof_axes;
  Vec3 pubis_center, pubis_axes;

  double cortical_thickness_mm = 2.5;
  double trabecular_density = 0.0;  // g/cm^3
  double cortical_density = 0.0;    // g/cm^3
  double pelvis_density_scale = 0.85;
  double left_side_scale = 1.0;     // left/right density asymmetry

  double soft_density = 1.0;        // g/cm^3
  double body_half_width_mm = 0.0;
  double body_half_depth_mm = 0.0;

  friend bool operator==(const PhantomSpec&, const PhantomSpec&) = default;
};

/// Deterministic per (seed, patient_id). Bone density declines with age and
/// differs by sex; geometry scales with height; soft tissue with BMI.
std::pair<PatientRecord, PhantomSpec> sample_patient(std::uint64_t seed, std::string_view patient_id);

/// Spec with every density zeroed (renders empty maps).
PhantomSpec zero_density(PhantomSpec spec);

/// In-plane rotation (degrees) nominal for each pose, within +-10.
double pose_rotation_deg(Pose pose);

struct VoxelSample {
  double density = 0.0;  // g/cm^3 of bone
  bool pf = false;       // inside the femoral head / neck
};

/// The phantom placed in image space for one side and rotation.
class PhantomGeometry {
 public:
  PhantomGeometry(const PhantomSpec& spec, Side side, double rotation_deg);

  /// Bone density at an image-space point (mm).
  VoxelSample sample(double x_mm, double y_mm, double z_mm) const;
  /// Soft tissue path length through the body along the ray at (x, y), mm.
  double soft_tissue_chord_mm(double x_mm, double y_mm) const;
  /// Whether the ray at (x, y) can hit bone at all.
  bool ray_may_hit_bone(double x_mm, double y_mm) const;
  /// Depth range [-h, h] enclosing every bone primitive.
  double depth_half_range_mm() const { return depth_half_; }

  const PhantomSpec& spec() const { return spec_; }
  double rotation_deg() const { return rotation_deg_; }
  Side side() const { return side_; }

 private:
  Vec3 to_phantom(double x_mm, double y_mm, double z_mm) const;

  PhantomSpec spec_;
  Side side_;
  double rotation_deg_;
  double cos_, sin_;
  double density_scale_;
  double depth_half_;
};

struct RenderOptions {
  double attenuation_mu = 0.5;     // cm^2/g, X-ray g(t) = 1 - exp(-mu t)
  double soft_tissue_weight = 0.1; // soft tissue contribution relative to bone mineral
  double noise_sigma = 0.01;
  double depth_step_mm = 1.0;
  double rotation_jitter_deg = 1.0;
  bool stamp_pose_glyph = true;
};

inline constexpr int kGlyphRows = 8;
inline constexpr int kGlyphCols = 24;

/// 8x24 binary pattern, distinct for each pose.
bool pose_glyph_bit(Pose pose, int row, int col);

struct RenderedScan {
  imaging::QuantImage xray;      // intensity in [0, 1]
  imaging::QuantImage bone_map;  // g/cm^2
  imaging::QuantImage pf_map;    // g/cm^2, zero outside pf_roi
  imaging::RoiMask pf_roi;
  double rotation_deg = 0.0;
  bool valid = false;            // false when the PF region is empty
};

/// Parallel-ray projection at rec.original_w x rec.original_h. Pixel (i, j)
/// integrates voxels centred at ((i+0.5)s, (j+0.5)s, -h + (k+0.5)dz).
RenderedScan render_scan(const PhantomSpec& spec, const ScanRecord& rec, Rng& rng,
                         const RenderOptions& options = {});

/// Per-(seed, scan side) stream used by the dataset builder.
Rng scan_rng(std::uint64_t seed, const ScanRecord& rec);

}  // namespace qis::phantom
