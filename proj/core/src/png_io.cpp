#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "mapattack/errors.hpp"
#include "mapattack/image.hpp"

// Minimal PNG codec for the toolkit's own rasters: 8-bit RGB, non-interlaced.
// The reader handles all five scanline filters so third-party encoders of the
// same pixel format also load.

namespace mapattack::img {

namespace {

constexpr std::uint8_t kSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
         (static_cast<std::uint32_t>(p[2]) << 8) | p[3];
}

void append_chunk(std::vector<std::uint8_t>& out, const char type[4],
                  const std::vector<std::uint8_t>& payload) {
  put_u32(out, static_cast<std::uint32_t>(payload.size()));
  const std::size_t crc_start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), payload.begin(), payload.end());
  const std::uint32_t crc = ::crc32(0, out.data() + crc_start, static_cast<uInt>(out.size() - crc_start));
  put_u32(out, crc);
}

int paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a);
  const int pb = std::abs(p - b);
  const int pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

}  // namespace

std::vector<std::uint8_t> encode_png(const Image& im) {
  if (im.width <= 0 || im.height <= 0) throw InvalidGeometryError("cannot encode empty image");
  const std::size_t stride = static_cast<std::size_t>(im.width) * 3;

  // Filter 0 scanlines.
  std::vector<std::uint8_t> raw((stride + 1) * im.height);
  for (int y = 0; y < im.height; ++y) {
    std::uint8_t* row = raw.data() + y * (stride + 1);
    row[0] = 0;
    for (int x = 0; x < im.width; ++x) {
      const float* px = im.at(x, y);
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp(px[c], 0.0f, 1.0f);
        row[1 + 3 * x + c] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
      }
    }
  }

  uLongf dest_len = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> idat(dest_len);
  if (compress2(idat.data(), &dest_len, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw IoError("PNG deflate failed");
  idat.resize(dest_len);

  std::vector<std::uint8_t> ihdr;
  put_u32(ihdr, static_cast<std::uint32_t>(im.width));
  put_u32(ihdr, static_cast<std::uint32_t>(im.height));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(2);  // truecolor
  ihdr.push_back(0);  // deflate
  ihdr.push_back(0);  // adaptive filtering
  ihdr.push_back(0);  // no interlace

  std::vector<std::uint8_t> out(kSignature, kSignature + 8);
  append_chunk(out, "IHDR", ihdr);
  append_chunk(out, "IDAT", idat);
  append_chunk(out, "IEND", {});
  return out;
}

Image decode_png(const std::uint8_t* bytes, std::size_t size) {
  if (size < 8 || std::memcmp(bytes, kSignature, 8) != 0)
    throw DecodeError("not a PNG file", 0);

  std::size_t pos = 8;
  int width = 0;
  int height = 0;
  bool have_ihdr = false;
  std::vector<std::uint8_t> idat;

  while (pos + 8 <= size) {
    const std::uint32_t len = get_u32(bytes + pos);
    if (pos + 12 + len > size) throw DecodeError("truncated PNG chunk", pos);
    const char* type = reinterpret_cast<const char*>(bytes + pos + 4);
    const std::uint8_t* payload = bytes + pos + 8;
    if (std::memcmp(type, "IHDR", 4) == 0) {
      if (len != 13) throw DecodeError("bad IHDR length", pos);
      width = static_cast<int>(get_u32(payload));
      height = static_cast<int>(get_u32(payload + 4));
      const int bit_depth = payload[8];
      const int color_type = payload[9];
      const int interlace = payload[12];
      if (bit_depth != 8 || color_type != 2 || interlace != 0)
        throw DecodeError("unsupported PNG format (need 8-bit RGB, non-interlaced)", pos);
      have_ihdr = true;
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), payload, payload + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      break;
    }
    pos += 12 + len;
  }
  if (!have_ihdr || width <= 0 || height <= 0) throw DecodeError("PNG missing IHDR", pos);
  if (idat.empty()) throw DecodeError("PNG missing IDAT", pos);

  const std::size_t stride = static_cast<std::size_t>(width) * 3;
  std::vector<std::uint8_t> raw((stride + 1) * height);
  uLongf raw_len = static_cast<uLongf>(raw.size());
  const int rc = uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size()));
  if (rc != Z_OK || raw_len != raw.size()) throw DecodeError("PNG inflate failed", pos);

  Image im(width, height);
  std::vector<std::uint8_t> prev(stride, 0);
  std::vector<std::uint8_t> cur(stride, 0);
  for (int y = 0; y < height; ++y) {
    const std::uint8_t* row = raw.data() + y * (stride + 1);
    const std::uint8_t filter = row[0];
    const std::uint8_t* src = row + 1;
    for (std::size_t i = 0; i < stride; ++i) {
      const int left = i >= 3 ? cur[i - 3] : 0;
      const int up = prev[i];
      const int up_left = i >= 3 ? prev[i - 3] : 0;
      int v = src[i];
      switch (filter) {
        case 0:
          break;
        case 1:
          v += left;
          break;
        case 2:
          v += up;
          break;
        case 3:
          v += (left + up) / 2;
          break;
        case 4:
          v += paeth(left, up, up_left);
          break;
        default:
          throw DecodeError("unknown PNG filter", static_cast<std::size_t>(y));
      }
      cur[i] = static_cast<std::uint8_t>(v & 0xff);
    }
    float* dst = im.at(0, y);
    for (std::size_t i = 0; i < stride; ++i) dst[i] = static_cast<float>(cur[i]) / 255.0f;
    std::swap(prev, cur);
  }
  return im;
}

Image decode_png(const std::vector<std::uint8_t>& bytes) {
  return decode_png(bytes.data(), bytes.size());
}

void write_png(const std::filesystem::path& path, const Image& im) {
  const std::vector<std::uint8_t> bytes = encode_png(im);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

Image read_png(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("missing file: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_png(bytes);
}

std::uint32_t crc32_of(const std::uint8_t* bytes, std::size_t size) {
  return static_cast<std::uint32_t>(::crc32(0, bytes, static_cast<uInt>(size)));
}

std::uint32_t crc32_of_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("missing file: " + path.string());
  std::uint32_t crc = 0;
  char buf[65536];
  while (in) {
    in.read(buf, sizeof(buf));
    const std::streamsize got = in.gcount();
    if (got > 0)
      crc = static_cast<std::uint32_t>(
          ::crc32(crc, reinterpret_cast<const Bytef*>(buf), static_cast<uInt>(got)));
  }
  return crc;
}

}  // namespace mapattack::img
