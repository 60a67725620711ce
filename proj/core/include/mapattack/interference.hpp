#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mapattack/camera.hpp"
#include "mapattack/image.hpp"
#include "mapattack/scene.hpp"

namespace mapattack::interf {

using geom::Vec2;
using geom::Vec3;
using scene::ImageSet;

struct FlashlightSpec {
  double lumens = 3000.0;
  double beam_angle_deg = 40.0;
  img::Color color{1.0f, 0.97f, 0.88f};
  /// Distance at which the peak flare alpha saturates to 1.
  double reference_distance = 6.5;
  /// Blur radius scale (pixels); sigma = radius_px * max(1, ln(lumens/(d^2*min_luminance))).
  double radius_px = 26.0;
  double min_luminance = 2.0;

  void validate() const;
  /// Peak blob alpha at source distance d: min(1, (reference_distance/d)^2).
  double peak_alpha(double distance) const;
  double blur_sigma_px(double distance) const;
};

/// Physical patch: vertical board at `center`, yawed by `alpha` about +z.
/// Pattern pixels map to the board through scale (W/w, H/h, -W/2, -H/2) and
/// the yaw+translation transform; the pattern's row 0 is the board's bottom.
struct PatchSpec {
  Vec3 center;
  double width_m = 3.0;
  double height_m = 2.0;
  double alpha = 0.0;  // yaw, radians
  img::Image pattern;  // h x w RGB in [0,1]
  std::vector<std::uint8_t> mask;  // h*w binary; empty means all-ones

  void validate() const;
  bool masked_on(int u, int v) const;
};

enum class AttackKind { kBlinding, kPatch };

std::string to_string(AttackKind k);
AttackKind attack_kind_from_string(const std::string& s);

struct AttackConfig {
  AttackKind kind = AttackKind::kBlinding;
  Vec3 position;
  std::optional<PatchSpec> patch;
  std::optional<FlashlightSpec> flashlight;

  void validate() const;
};

/// Lens-flare compositing for a light source at p: radially Gaussian blob at
/// the projection of p plus an additive veiling term at A/8, per camera that
/// both sees the point and falls inside beam_angle/2 + half-FOV of it.
ImageSet render_flare(const ImageSet& images, const cam::CameraRig& rig, const Vec3& p,
                      const FlashlightSpec& spec);

/// Copies src into dst reusing dst's pixel buffers when shapes match; query
/// loops use this to avoid reallocating 6 camera rasters per evaluation.
void copy_image_set_into(ImageSet& dst, const ImageSet& src);

void render_flare_into(ImageSet& out, const ImageSet& images, const cam::CameraRig& rig,
                       const Vec3& p, const FlashlightSpec& spec);

/// Continuous patch-image coordinates (u_p, v_p) in [0,w) x [0,h) to world
/// meters; the center pixel (w/2, h/2) maps exactly to the board center.
/// Throws BoundsError outside the patch image.
Vec3 patch_pixel_to_world(const PatchSpec& spec, double u_p, double v_p);

/// Perspective-correct patch compositing: per camera with >= 3 board corners
/// at positive depth, every covered image pixel is inverse-mapped to patch
/// coordinates, bilinearly sampled and masked; pixels are depth-tested against
/// the ground plane so boards never paint over nearer ground features.
ImageSet composite_patch(const ImageSet& images, const cam::CameraRig& rig, const PatchSpec& spec,
                         std::vector<std::string>* log = nullptr);

void composite_patch_into(ImageSet& out, const ImageSet& images, const cam::CameraRig& rig,
                          const PatchSpec& spec, std::vector<std::string>* log = nullptr);

ImageSet apply_attack(const ImageSet& images, const cam::CameraRig& rig, const AttackConfig& cfg,
                      std::vector<std::string>* log = nullptr);

void apply_attack_into(ImageSet& out, const ImageSet& images, const cam::CameraRig& rig,
                       const AttackConfig& cfg, std::vector<std::string>* log = nullptr);

/// Patch pattern persistence: PNG plus a JSON sidecar {W, H, alpha, center}.
void save_patch(const PatchSpec& spec, const std::filesystem::path& png_path);
PatchSpec load_patch(const std::filesystem::path& png_path);

}  // namespace mapattack::interf
