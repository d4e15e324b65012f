#include "qis/phantom/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace qis::phantom {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

double dist(const Vec3& a, const Vec3& b) {
  return std::sqrt((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y) + (a.z - b.z) * (a.z - b.z));
}

double sphere_depth(const Vec3& p, const Vec3& c, double r) { return r - dist(p, c); }

double capsule_depth(const Vec3& p, const Vec3& a, const Vec3& b, double r) {
  const Vec3 ab{b.x - a.x, b.y - a.y, b.z - a.z};
  const Vec3 ap{p.x - a.x, p.y - a.y, p.z - a.z};
  const double len2 = ab.x * ab.x + ab.y * ab.y + ab.z * ab.z;
  const double t = std::clamp((ap.x * ab.x + ap.y * ab.y + ap.z * ab.z) / len2, 0.0, 1.0);
  return r - dist(p, Vec3{a.x + t * ab.x, a.y + t * ab.y, a.z + t * ab.z});
}

// Approximate inward depth of an axis-aligned ellipsoid.
double ellipsoid_depth(const Vec3& p, const Vec3& c, const Vec3& axes) {
  const double qx = (p.x - c.x) / axes.x, qy = (p.y - c.y) / axes.y, qz = (p.z - c.z) / axes.z;
  return (1.0 - std::sqrt(qx * qx + qy * qy + qz * qz)) * std::min({axes.x, axes.y, axes.z});
}

bool in_ellipse(double x, double y, const Vec3& c, const Vec3& axes) {
  const double qx = (x - c.x) / axes.x, qy = (y - c.y) / axes.y;
  return qx * qx + qy * qy < 1.0;
}

double clampd(double v, double lo, double hi) { return std::min(hi, std::max(lo, v)); }

}  // namespace

std::pair<PatientRecord, PhantomSpec> sample_patient(std::uint64_t seed, std::string_view patient_id) {
  Rng rng = Rng::derive(seed, "patient:" + std::string(patient_id));

  PatientRecord p;
  p.patient_id = std::string(patient_id);
  p.sex = rng.bernoulli(0.5) ? Sex::female : Sex::male;
  const bool male = p.sex == Sex::male;
  p.age = clampd(rng.normal(62.0, 14.0), 20.0, 100.0);
  p.height_cm = clampd(male ? rng.normal(168.0, 7.0) : rng.normal(155.0, 6.0), 120.0, 210.0);
  const double bmi = clampd(rng.normal(23.0, 3.5), 15.0, 45.0);
  p.weight_kg = clampd(bmi * (p.height_cm / 100.0) * (p.height_cm / 100.0), 30.0, 150.0);

  PhantomSpec s;
  const double scale = p.height_cm / 165.0;
  s.head_radius = 22.0 * scale * (male ? 1.08 : 1.0) * (1.0 + rng.normal(0.0, 0.03));
  s.head_center = {118.0 + rng.normal(0.0, 3.0), 165.0 + rng.normal(0.0, 3.0), 0.0};

  const double neck_angle = (40.0 + rng.normal(0.0, 3.0)) * kDegToRad;
  const double neck_len = 48.0 * scale;
  s.neck_end = {s.head_center.x - neck_len * std::cos(neck_angle),
                s.head_center.y + neck_len * std::sin(neck_angle), 0.0};
  s.neck_radius = 0.62 * s.head_radius;
  s.shaft_end = {s.neck_end.x + 8.0, s.fov_h_mm + 60.0, 0.0};
  s.shaft_radius = 15.0 * scale;

  s.ilium_center = {s.head_center.x - 10.0, s.head_center.y - 85.0 * scale, 0.0};
  s.ilium_axes = {60.0 * scale, 70.0 * scale, 9.0};
  s.roof_center = {s.head_center.x + 8.0, s.head_center.y - 22.0 * scale, 0.0};
  s.roof_axes = {34.0 * scale, 16.0 * scale, 20.0 * scale};
  s.pubis_center = {s.head_center.x + 48.0 * scale, s.head_center.y + 36.0 * scale, 0.0};
  s.pubis_axes = {30.0 * scale, 20.0 * scale, 12.0};

  // Trabecular density peaks around 30 and declines faster in women.
  const double base = male ? 0.26 : 0.25;
  const double rate = male ? 0.0016 : 0.0028;
  s.trabecular_density = std::max(0.06, base - rate * std::max(0.0, p.age - 30.0) + rng.normal(0.0, 0.012));
  s.cortical_density = 0.9 + 1.5 * s.trabecular_density + rng.normal(0.0, 0.03);
  s.left_side_scale = 1.0 + rng.normal(0.0, 0.02);

  s.body_half_width_mm = 230.0 + 5.0 * (bmi - 23.0);
  s.body_half_depth_mm = 110.0 + 4.5 * (bmi - 23.0);
  return {p, s};
}

PhantomSpec zero_density(PhantomSpec spec) {
  spec.trabecular_density = 0.0;
  spec.cortical_density = 0.0;
  spec.soft_density = 0.0;
  return spec;
}

double pose_rotation_deg(Pose pose) {
  switch (pose) {
    case Pose::standing: return 0.0;
    case Pose::supine: return 3.0;
    case Pose::resting: return -3.0;
    case Pose::abduction: return 8.0;
    case Pose::adduction: return -8.0;
  }
  return 0.0;
}

PhantomGeometry::PhantomGeometry(const PhantomSpec& spec, Side side, double rotation_deg)
    : spec_(spec),
      side_(side),
      rotation_deg_(rotation_deg),
      cos_(std::cos(rotation_deg * kDegToRad)),
      sin_(std::sin(rotation_deg * kDegToRad)),
      density_scale_(side == Side::left ? spec.left_side_scale : 1.0) {
  depth_half_ = std::max({spec.head_radius, spec.neck_radius, spec.shaft_radius, spec.ilium_axes.z,
                          spec.roof_axes.z, spec.pubis_axes.z}) +
                1.0;
}

Vec3 PhantomGeometry::to_phantom(double x_mm, double y_mm, double z_mm) const {
  if (side_ == Side::left) x_mm = spec_.fov_w_mm - x_mm;
  // Inverse in-plane rotation about the femoral head centre.
  const double dx = x_mm - spec_.head_center.x, dy = y_mm - spec_.head_center.y;
  return {spec_.head_center.x + cos_ * dx + sin_ * dy, spec_.head_center.y - sin_ * dx + cos_ * dy, z_mm};
}

VoxelSample PhantomGeometry::sample(double x_mm, double y_mm, double z_mm) const {
  const Vec3 p = to_phantom(x_mm, y_mm, z_mm);
  const double head = sphere_depth(p, spec_.head_center, spec_.head_radius);
  const double neck = capsule_depth(p, spec_.head_center, spec_.neck_end, spec_.neck_radius);
  const double shaft = capsule_depth(p, spec_.neck_end, spec_.shaft_end, spec_.shaft_radius);
  const double femur = std::max({head, neck, shaft});
  const double pelvis = std::max({ellipsoid_depth(p, spec_.ilium_center, spec_.ilium_axes),
                                  ellipsoid_depth(p, spec_.roof_center, spec_.roof_axes),
                                  ellipsoid_depth(p, spec_.pubis_center, spec_.pubis_axes)});
  const double depth = std::max(femur, pelvis);
  if (depth <= 0.0) return {};

  double rho = depth < spec_.cortical_thickness_mm ? spec_.cortical_density : spec_.trabecular_density;
  if (pelvis > femur) rho *= spec_.pelvis_density_scale;
  return {rho * density_scale_, head > 0.0 || neck > 0.0};
}

double PhantomGeometry::soft_tissue_chord_mm(double x_mm, double y_mm) const {
  const Vec3 p = to_phantom(x_mm, y_mm, 0.0);
  const double u = (p.x - spec_.fov_w_mm) / spec_.body_half_width_mm;
  return 2.0 * spec_.body_half_depth_mm * std::sqrt(std::max(0.0, 1.0 - u * u));
}

bool PhantomGeometry::ray_may_hit_bone(double x_mm, double y_mm) const {
  const Vec3 p = to_phantom(x_mm, y_mm, 0.0);
  auto seg2d = [&](const Vec3& a, const Vec3& b, double r) {
    return capsule_depth(p, {a.x, a.y, 0.0}, {b.x, b.y, 0.0}, r) > 0.0;
  };
  return std::hypot(p.x - spec_.head_center.x, p.y - spec_.head_center.y) < spec_.head_radius ||
         seg2d(spec_.head_center, spec_.neck_end, spec_.neck_radius) ||
         seg2d(spec_.neck_end, spec_.shaft_end, spec_.shaft_radius) ||
         in_ellipse(p.x, p.y, spec_.ilium_center, spec_.ilium_axes) ||
         in_ellipse(p.x, p.y, spec_.roof_center, spec_.roof_axes) ||
         in_ellipse(p.x, p.y, spec_.pubis_center, spec_.pubis_axes);
}

bool pose_glyph_bit(Pose pose, int row, int col) {
  std::uint64_t x = 0x51ed2701ULL * (static_cast<std::uint64_t>(pose) + 1) + 977ULL * row + col;
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return ((x >> 17) & 1ULL) != 0;
}

Rng scan_rng(std::uint64_t seed, const ScanRecord& rec) { return Rng::derive(seed, "scan:" + rec.key()); }

RenderedScan render_scan(const PhantomSpec& spec, const ScanRecord& rec, Rng& rng, const RenderOptions& opt) {
  using imaging::QuantImage;
  using imaging::Unit;

  const int w = rec.original_w, h = rec.original_h;
  const double spacing = spec.fov_w_mm / w;

  RenderedScan out;
  const double jitter = std::clamp(rng.normal(0.0, opt.rotation_jitter_deg), -1.5 * opt.rotation_jitter_deg,
                                   1.5 * opt.rotation_jitter_deg);
  out.rotation_deg = std::clamp(pose_rotation_deg(rec.pose) + jitter, -10.0, 10.0);
  const PhantomGeometry geo(spec, rec.side, out.rotation_deg);

  out.bone_map = QuantImage::zeros(w, h, Unit::areal_density, spacing);
  out.pf_map = QuantImage::zeros(w, h, Unit::areal_density, spacing);
  out.xray = QuantImage::zeros(w, h, Unit::intensity, spacing);

  const double dz = opt.depth_step_mm;
  const int nz = static_cast<int>(std::ceil(2.0 * geo.depth_half_range_mm() / dz));
  const double z0 = -0.5 * nz * dz;
  const double dz_cm = dz / 10.0;

  for (int j = 0; j < h; ++j) {
    const double y = (j + 0.5) * spacing;
    for (int i = 0; i < w; ++i) {
      const double x = (i + 0.5) * spacing;
      double bone = 0.0, pf = 0.0;
      if (geo.ray_may_hit_bone(x, y)) {
        for (int k = 0; k < nz; ++k) {
          const VoxelSample v = geo.sample(x, y, z0 + (k + 0.5) * dz);
          bone += v.density * dz_cm;
          if (v.pf) pf += v.density * dz_cm;
        }
      }
      out.bone_map.at(i, j) = static_cast<float>(bone);
      out.pf_map.at(i, j) = static_cast<float>(pf);

      const double soft = spec.soft_density * geo.soft_tissue_chord_mm(x, y) / 10.0;
      const double t = bone + opt.soft_tissue_weight * soft;
      const double intensity = 1.0 - std::exp(-opt.attenuation_mu * t) + opt.noise_sigma * rng.normal();
      out.xray.at(i, j) = static_cast<float>(std::clamp(intensity, 0.0, 1.0));
    }
  }

  if (opt.stamp_pose_glyph) {
    for (int r = 0; r < kGlyphRows && r + 1 < h; ++r)
      for (int c = 0; c < kGlyphCols && c + 1 < w; ++c)
        out.xray.at(c + 1, r + 1) = pose_glyph_bit(rec.pose, r, c) ? 1.0f : 0.0f;
  }

  out.pf_roi = imaging::RoiMask::from_threshold(out.pf_map, 0.0f);
  out.valid = out.pf_roi.count() > 0;
  return out;
}

}  // namespace qis::phantom
