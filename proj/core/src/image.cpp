#include "mapattack/image.hpp"

#include <algorithm>
#include <cmath>

#include "mapattack/errors.hpp"

namespace mapattack::img {

Image::Image(int w, int h, const Color& fill) : width(w), height(h) {
  if (w <= 0 || h <= 0) throw InvalidGeometryError("image dimensions must be positive");
  data.resize(static_cast<std::size_t>(w) * h * 3);
  for (std::size_t i = 0; i < data.size(); i += 3) {
    data[i] = fill[0];
    data[i + 1] = fill[1];
    data[i + 2] = fill[2];
  }
}

float luminance_at(const Image& im, int x, int y) {
  x = std::clamp(x, 0, im.width - 1);
  y = std::clamp(y, 0, im.height - 1);
  return luminance(im.at(x, y));
}

void quantize_to_8bit(Image& im) {
  for (float& v : im.data) {
    const float c = std::clamp(v, 0.0f, 1.0f);
    v = std::round(c * 255.0f) / 255.0f;
  }
}

void clamp01(Image& im) {
  for (float& v : im.data) v = std::clamp(v, 0.0f, 1.0f);
}

Color sample_bilinear(const Image& im, double u, double v) {
  const double x = std::clamp(u, 0.0, static_cast<double>(im.width - 1));
  const double y = std::clamp(v, 0.0, static_cast<double>(im.height - 1));
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, im.width - 1);
  const int y1 = std::min(y0 + 1, im.height - 1);
  const float fx = static_cast<float>(x - x0);
  const float fy = static_cast<float>(y - y0);
  Color out;
  for (int c = 0; c < 3; ++c) {
    const float top = im.at(x0, y0)[c] * (1.f - fx) + im.at(x1, y0)[c] * fx;
    const float bot = im.at(x0, y1)[c] * (1.f - fx) + im.at(x1, y1)[c] * fx;
    out[c] = top * (1.f - fy) + bot * fy;
  }
  return out;
}

void stamp_disk(Image& im, double u, double v, double radius_px, const Color& c) {
  const double r = std::max(radius_px, 0.5);
  const int x0 = std::max(0, static_cast<int>(std::floor(u - r)));
  const int x1 = std::min(im.width - 1, static_cast<int>(std::ceil(u + r)));
  const int y0 = std::max(0, static_cast<int>(std::floor(v - r)));
  const int y1 = std::min(im.height - 1, static_cast<int>(std::ceil(v + r)));
  const double r_sq = r * r;
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double du = x - u;
      const double dv = y - v;
      if (du * du + dv * dv <= r_sq) im.set(x, y, c);
    }
  }
}

void stroke_line(Image& im, double u0, double v0, double u1, double v1, double radius_px,
                 const Color& c) {
  const double len = std::hypot(u1 - u0, v1 - v0);
  const int steps = std::max(1, static_cast<int>(std::ceil(len / std::max(radius_px, 0.5))) * 2);
  for (int i = 0; i <= steps; ++i) {
    const double t = static_cast<double>(i) / steps;
    stamp_disk(im, u0 + (u1 - u0) * t, v0 + (v1 - v0) * t, radius_px, c);
  }
}

void stroke_rect(Image& im, double u0, double v0, double u1, double v1, double thickness_px,
                 const Color& c) {
  stroke_line(im, u0, v0, u1, v0, thickness_px, c);
  stroke_line(im, u1, v0, u1, v1, thickness_px, c);
  stroke_line(im, u1, v1, u0, v1, thickness_px, c);
  stroke_line(im, u0, v1, u0, v0, thickness_px, c);
}

namespace {
constexpr char kB64Table[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(const std::uint8_t* bytes, std::size_t size) {
  std::string out;
  out.reserve((size + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 3 <= size; i += 3) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out.push_back(kB64Table[(v >> 18) & 63]);
    out.push_back(kB64Table[(v >> 12) & 63]);
    out.push_back(kB64Table[(v >> 6) & 63]);
    out.push_back(kB64Table[v & 63]);
  }
  const std::size_t rem = size - i;
  if (rem == 1) {
    const std::uint32_t v = bytes[i] << 16;
    out.push_back(kB64Table[(v >> 18) & 63]);
    out.push_back(kB64Table[(v >> 12) & 63]);
    out.push_back('=');
    out.push_back('=');
  } else if (rem == 2) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8);
    out.push_back(kB64Table[(v >> 18) & 63]);
    out.push_back(kB64Table[(v >> 12) & 63]);
    out.push_back(kB64Table[(v >> 6) & 63]);
    out.push_back('=');
  }
  return out;
}

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
  return base64_encode(bytes.data(), bytes.size());
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  auto value_of = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  std::vector<std::uint8_t> out;
  std::uint32_t acc = 0;
  int bits = 0;
  std::size_t pos = 0;
  for (char c : text) {
    ++pos;
    if (c == '=' || c == '\n' || c == '\r') continue;
    const int v = value_of(c);
    if (v < 0) throw DecodeError("invalid base64 character", pos - 1);
    acc = (acc << 6) | static_cast<std::uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<std::uint8_t>((acc >> bits) & 0xff));
    }
  }
  return out;
}

}  // namespace mapattack::img
