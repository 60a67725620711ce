#include "mapattack/interference.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "mapattack/errors.hpp"

namespace mapattack::interf {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

void FlashlightSpec::validate() const {
  if (lumens <= 0.0) throw ConfigError("flashlight lumens must be > 0");
  if (beam_angle_deg <= 0.0 || beam_angle_deg > 180.0)
    throw ConfigError("flashlight beam angle must be in (0, 180]");
  if (reference_distance <= 0.0 || radius_px <= 0.0 || min_luminance <= 0.0)
    throw ConfigError("flashlight falloff constants must be > 0");
}

double FlashlightSpec::peak_alpha(double distance) const {
  const double d = std::max(distance, 1e-6);
  const double ratio = reference_distance / d;
  return std::min(1.0, ratio * ratio);
}

double FlashlightSpec::blur_sigma_px(double distance) const {
  const double d = std::max(distance, 1e-6);
  return radius_px * std::max(1.0, std::log(lumens / (d * d * min_luminance)));
}

void PatchSpec::validate() const {
  if (width_m <= 0.0 || height_m <= 0.0) throw ConfigError("patch dimensions must be > 0");
  if (pattern.width <= 0 || pattern.height <= 0) throw ConfigError("patch pattern is empty");
  if (!mask.empty() &&
      mask.size() != static_cast<std::size_t>(pattern.width) * pattern.height)
    throw ConfigError("patch mask size does not match the pattern");
}

bool PatchSpec::masked_on(int u, int v) const {
  if (mask.empty()) return true;
  u = std::clamp(u, 0, pattern.width - 1);
  v = std::clamp(v, 0, pattern.height - 1);
  return mask[static_cast<std::size_t>(v) * pattern.width + u] != 0;
}

std::string to_string(AttackKind k) {
  return k == AttackKind::kBlinding ? "blinding" : "patch";
}

AttackKind attack_kind_from_string(const std::string& s) {
  if (s == "blinding") return AttackKind::kBlinding;
  if (s == "patch") return AttackKind::kPatch;
  throw ConfigError("unknown attack kind: " + s);
}

void AttackConfig::validate() const {
  if (kind == AttackKind::kBlinding) {
    if (!flashlight) throw ConfigError("blinding attack needs a flashlight spec");
    flashlight->validate();
  } else {
    if (!patch) throw ConfigError("patch attack needs a patch spec");
    patch->validate();
  }
}

void copy_image_set_into(ImageSet& dst, const ImageSet& src) {
  bool shapes_match = dst.size() == src.size();
  if (shapes_match) {
    auto dit = dst.begin();
    for (auto sit = src.begin(); sit != src.end(); ++sit, ++dit) {
      if (dit->first != sit->first || dit->second.width != sit->second.width ||
          dit->second.height != sit->second.height) {
        shapes_match = false;
        break;
      }
    }
  }
  if (!shapes_match) {
    dst = src;
    return;
  }
  auto dit = dst.begin();
  for (auto sit = src.begin(); sit != src.end(); ++sit, ++dit) dit->second.data = sit->second.data;
}

ImageSet render_flare(const ImageSet& images, const cam::CameraRig& rig, const Vec3& p,
                      const FlashlightSpec& spec) {
  ImageSet out;
  render_flare_into(out, images, rig, p, spec);
  return out;
}

void render_flare_into(ImageSet& out, const ImageSet& images, const cam::CameraRig& rig,
                       const Vec3& p, const FlashlightSpec& spec) {
  spec.validate();
  copy_image_set_into(out, images);
  const double beam_half = 0.5 * spec.beam_angle_deg * kPi / 180.0;

  for (const cam::CameraModel& camera : rig.cameras) {
    auto it = out.find(camera.id);
    if (it == out.end()) continue;

    const Vec3 cam_pos = camera.position();
    const Vec3 to_p = p - cam_pos;
    const double d = to_p.norm();
    if (d < 1e-9) continue;
    const double axis_angle =
        std::acos(std::clamp(to_p.normalized().dot(camera.forward_axis()), -1.0, 1.0));
    if (axis_angle > beam_half + camera.half_hfov()) continue;

    const auto center = camera.project(p);
    if (!center) continue;

    img::Image& view = it->second;
    const double peak = spec.peak_alpha(d);
    const double sigma = spec.blur_sigma_px(d);

    // Low-alpha veiling glare over the whole view at peak/8. Blended rather
    // than clipped-additive so the blob center stays the brightest pixel.
    const float veil = static_cast<float>(peak / 8.0);
    for (std::size_t i = 0; i < view.data.size(); i += 3) {
      view.data[i] = (1.0f - veil) * view.data[i] + veil * spec.color[0];
      view.data[i + 1] = (1.0f - veil) * view.data[i + 1] + veil * spec.color[1];
      view.data[i + 2] = (1.0f - veil) * view.data[i + 2] + veil * spec.color[2];
    }

    // Gaussian blob, evaluated out to where alpha becomes negligible. The
    // kernel is separable, so the exp() factors are precomputed per axis.
    const double reach = sigma * std::sqrt(2.0 * std::log(std::max(peak, 1e-6) * 1024.0));
    if (!(reach > 0.0)) continue;
    const int x0 = std::max(0, static_cast<int>(std::floor(center->x - reach)));
    const int x1 = std::min(view.width - 1, static_cast<int>(std::ceil(center->x + reach)));
    const int y0 = std::max(0, static_cast<int>(std::floor(center->y - reach)));
    const int y1 = std::min(view.height - 1, static_cast<int>(std::ceil(center->y + reach)));
    if (x0 > x1 || y0 > y1) continue;
    const double inv_two_sigma_sq = 1.0 / (2.0 * sigma * sigma);
    std::vector<double> gx(static_cast<std::size_t>(x1 - x0 + 1));
    for (int x = x0; x <= x1; ++x) {
      const double du = x - center->x;
      gx[static_cast<std::size_t>(x - x0)] = std::exp(-du * du * inv_two_sigma_sq);
    }
    for (int y = y0; y <= y1; ++y) {
      const double dv = y - center->y;
      const double row_factor = peak * std::exp(-dv * dv * inv_two_sigma_sq);
      if (row_factor < 1e-4) continue;
      float* row = view.at(x0, y);
      for (int x = x0; x <= x1; ++x) {
        const double alpha = row_factor * gx[static_cast<std::size_t>(x - x0)];
        if (alpha < 1e-4) continue;
        float* px = row + 3 * (x - x0);
        px[0] = static_cast<float>((1.0 - alpha) * px[0] + alpha * spec.color[0]);
        px[1] = static_cast<float>((1.0 - alpha) * px[1] + alpha * spec.color[1]);
        px[2] = static_cast<float>((1.0 - alpha) * px[2] + alpha * spec.color[2]);
      }
    }
  }
}

namespace {

/// Board basis: width axis a at yaw alpha, height axis +z, center at spec.center.
struct PatchFrame {
  Vec3 origin;
  Vec3 a_dir;  // along width
  Vec3 b_dir;  // along height (world up)
  Vec3 normal;

  explicit PatchFrame(const PatchSpec& spec)
      : origin(spec.center),
        a_dir{std::cos(spec.alpha), std::sin(spec.alpha), 0.0},
        b_dir{0.0, 0.0, 1.0},
        normal{std::sin(spec.alpha), -std::cos(spec.alpha), 0.0} {}
};

}  // namespace

Vec3 patch_pixel_to_world(const PatchSpec& spec, double u_p, double v_p) {
  spec.validate();
  if (u_p < 0.0 || u_p >= spec.pattern.width || v_p < 0.0 || v_p >= spec.pattern.height)
    throw BoundsError("patch pixel out of range");
  const PatchFrame frame(spec);
  const double a = spec.width_m * u_p / spec.pattern.width - spec.width_m / 2.0;
  const double b = spec.height_m * v_p / spec.pattern.height - spec.height_m / 2.0;
  return frame.origin + frame.a_dir * a + frame.b_dir * b;
}

ImageSet composite_patch(const ImageSet& images, const cam::CameraRig& rig, const PatchSpec& spec,
                         std::vector<std::string>* log) {
  ImageSet out;
  composite_patch_into(out, images, rig, spec, log);
  return out;
}

void composite_patch_into(ImageSet& out, const ImageSet& images, const cam::CameraRig& rig,
                          const PatchSpec& spec, std::vector<std::string>* log) {
  spec.validate();
  copy_image_set_into(out, images);
  const PatchFrame frame(spec);
  const double half_w = spec.width_m / 2.0;
  const double half_h = spec.height_m / 2.0;
  const Vec3 corners[4] = {
      frame.origin + frame.a_dir * -half_w + frame.b_dir * -half_h,
      frame.origin + frame.a_dir * half_w + frame.b_dir * -half_h,
      frame.origin + frame.a_dir * half_w + frame.b_dir * half_h,
      frame.origin + frame.a_dir * -half_w + frame.b_dir * half_h,
  };

  for (const cam::CameraModel& camera : rig.cameras) {
    auto it = out.find(camera.id);
    if (it == out.end()) continue;
    img::Image& view = it->second;

    int visible = 0;
    bool any_behind = false;
    std::vector<Vec2> proj;
    for (const Vec3& corner : corners) {
      const Vec3 c = camera.rotation * corner + camera.translation;
      if (c.z > cam::kMinDepth) {
        ++visible;
        proj.push_back({camera.fx * (c.x / c.z) + camera.cx, camera.fy * (c.y / c.z) + camera.cy});
      } else {
        any_behind = true;
      }
    }
    if (visible < 3) continue;

    int x0 = 0, x1 = view.width - 1, y0 = 0, y1 = view.height - 1;
    if (!any_behind) {
      double min_u = proj[0].x, max_u = proj[0].x, min_v = proj[0].y, max_v = proj[0].y;
      for (const Vec2& q : proj) {
        min_u = std::min(min_u, q.x);
        max_u = std::max(max_u, q.x);
        min_v = std::min(min_v, q.y);
        max_v = std::max(max_v, q.y);
      }
      // Degenerate projection: skip this camera.
      if ((max_u - min_u) * (max_v - min_v) < 1.0) {
        if (log) log->push_back("patch quad degenerate in camera " + camera.id);
        continue;
      }
      x0 = std::max(0, static_cast<int>(std::floor(min_u)));
      x1 = std::min(view.width - 1, static_cast<int>(std::ceil(max_u)));
      y0 = std::max(0, static_cast<int>(std::floor(min_v)));
      y1 = std::min(view.height - 1, static_cast<int>(std::ceil(max_v)));
    }
    if (x0 > x1 || y0 > y1) continue;

    const Vec3 cam_pos = camera.position();
    const Vec3 right = camera.rotation.transposed() * Vec3{1, 0, 0};
    const Vec3 down = camera.rotation.transposed() * Vec3{0, 1, 0};
    const Vec3 fwd = camera.forward_axis();
    const double denom_origin = (frame.origin - cam_pos).dot(frame.normal);

    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double pa = (x + 0.5 - camera.cx) / camera.fx;
        const double pb = (y + 0.5 - camera.cy) / camera.fy;
        const Vec3 ray{pa * right.x + pb * down.x + fwd.x, pa * right.y + pb * down.y + fwd.y,
                       pa * right.z + pb * down.z + fwd.z};
        const double denom = ray.dot(frame.normal);
        if (std::abs(denom) < 1e-12) continue;
        const double t = denom_origin / denom;  // camera-frame depth of the plane hit
        if (t <= cam::kMinDepth) continue;
        const Vec3 hit = cam_pos + ray * t;
        const Vec3 rel = hit - frame.origin;
        const double a = rel.dot(frame.a_dir);
        const double b = rel.dot(frame.b_dir);
        if (a < -half_w || a >= half_w || b < -half_h || b >= half_h) continue;

        // Never paint over ground features that sit nearer than the board.
        const double ground_t = cam::ground_depth_at_pixel(camera, x + 0.5, y + 0.5);
        if (ground_t < t - 1e-6) continue;

        // Patch-image coordinates per the pixel-to-world mapping: row 0 is the
        // board's bottom edge.
        const double u_p = (a + half_w) / spec.width_m * spec.pattern.width;
        const double v_p = (b + half_h) / spec.height_m * spec.pattern.height;
        if (!spec.masked_on(static_cast<int>(u_p), static_cast<int>(v_p))) continue;
        const img::Color c = img::sample_bilinear(spec.pattern, u_p - 0.5, v_p - 0.5);
        view.set(x, y, c);
      }
    }
  }
}

ImageSet apply_attack(const ImageSet& images, const cam::CameraRig& rig, const AttackConfig& cfg,
                      std::vector<std::string>* log) {
  ImageSet out;
  apply_attack_into(out, images, rig, cfg, log);
  return out;
}

void apply_attack_into(ImageSet& out, const ImageSet& images, const cam::CameraRig& rig,
                       const AttackConfig& cfg, std::vector<std::string>* log) {
  cfg.validate();
  if (cfg.kind == AttackKind::kBlinding) {
    render_flare_into(out, images, rig, cfg.position, *cfg.flashlight);
  } else {
    composite_patch_into(out, images, rig, *cfg.patch, log);
  }
}

void save_patch(const PatchSpec& spec, const std::filesystem::path& png_path) {
  spec.validate();
  img::write_png(png_path, spec.pattern);
  nlohmann::ordered_json sidecar{
      {"W", spec.width_m},
      {"H", spec.height_m},
      {"alpha", spec.alpha},
      {"center", nlohmann::ordered_json::array({spec.center.x, spec.center.y, spec.center.z})},
  };
  std::filesystem::path sidecar_path = png_path;
  sidecar_path.replace_extension(".json");
  std::ofstream out(sidecar_path);
  if (!out) throw IoError("cannot write patch sidecar: " + sidecar_path.string());
  out << sidecar.dump(2) << "\n";
}

PatchSpec load_patch(const std::filesystem::path& png_path) {
  PatchSpec spec;
  spec.pattern = img::read_png(png_path);
  std::filesystem::path sidecar_path = png_path;
  sidecar_path.replace_extension(".json");
  std::ifstream in(sidecar_path);
  if (!in) throw IoError("missing patch sidecar: " + sidecar_path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw DecodeError("bad patch sidecar: " + std::string(e.what()), e.byte);
  }
  spec.width_m = j.at("W").get<double>();
  spec.height_m = j.at("H").get<double>();
  spec.alpha = j.at("alpha").get<double>();
  spec.center = {j.at("center").at(0).get<double>(), j.at("center").at(1).get<double>(),
                 j.at("center").at(2).get<double>()};
  spec.validate();
  return spec;
}

}  // namespace mapattack::interf
