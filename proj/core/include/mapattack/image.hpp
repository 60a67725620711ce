#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mapattack::img {

using Color = std::array<float, 3>;

/// Row-major RGB raster, values in [0, 1].
struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> data;  // 3 floats per pixel

  Image() = default;
  Image(int w, int h, const Color& fill = {0.f, 0.f, 0.f});

  bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
  float* at(int x, int y) { return data.data() + 3 * (static_cast<std::size_t>(y) * width + x); }
  const float* at(int x, int y) const {
    return data.data() + 3 * (static_cast<std::size_t>(y) * width + x);
  }
  void set(int x, int y, const Color& c) {
    float* px = at(x, y);
    px[0] = c[0];
    px[1] = c[1];
    px[2] = c[2];
  }

  bool operator==(const Image& o) const {
    return width == o.width && height == o.height && data == o.data;
  }
};

/// Rec.601 luma.
inline float luminance(const float* px) {
  return 0.299f * px[0] + 0.587f * px[1] + 0.114f * px[2];
}
float luminance_at(const Image& im, int x, int y);

/// Snap every channel to the 8-bit grid (round(v*255)/255). Rendering does this
/// as its final step so saved PNGs round-trip losslessly.
void quantize_to_8bit(Image& im);

void clamp01(Image& im);

/// Bilinear sample with clamped edges; u, v in pixel coordinates.
Color sample_bilinear(const Image& im, double u, double v);

/// Filled disk stamp, used by the rasterizer and annotation overlays.
void stamp_disk(Image& im, double u, double v, double radius_px, const Color& c);

/// Straight stroke between two pixel positions (disk-stamped).
void stroke_line(Image& im, double u0, double v0, double u1, double v1, double radius_px,
                 const Color& c);

/// Axis-aligned rectangle outline.
void stroke_rect(Image& im, double u0, double v0, double u1, double v1, double thickness_px,
                 const Color& c);

// --- PNG I/O (8-bit RGB, non-interlaced) -----------------------------------

std::vector<std::uint8_t> encode_png(const Image& im);
Image decode_png(const std::uint8_t* bytes, std::size_t size);
Image decode_png(const std::vector<std::uint8_t>& bytes);

void write_png(const std::filesystem::path& path, const Image& im);
Image read_png(const std::filesystem::path& path);

// --- small codecs shared by the wire formats --------------------------------

std::string base64_encode(const std::uint8_t* bytes, std::size_t size);
std::string base64_encode(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

/// CRC32 (zlib polynomial) of a byte buffer; used for artifact checksums.
std::uint32_t crc32_of(const std::uint8_t* bytes, std::size_t size);
std::uint32_t crc32_of_file(const std::filesystem::path& path);

}  // namespace mapattack::img
