#pragma once

// Minimal PNG writer: 8-bit RGB, zlib container with stored (uncompressed)
// deflate blocks. No external dependencies; output is deterministic.

#include <array>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "algcp/common.hpp"
#include "algcp/grid.hpp"

namespace algcp {
namespace detail {

inline std::uint32_t crc32_png(const unsigned char* data, std::size_t n,
                               std::uint32_t crc = 0xFFFFFFFFu) {
  static std::array<std::uint32_t, 256> table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  for (std::size_t i = 0; i < n; ++i) crc = table[(crc ^ data[i]) & 0xFF] ^ (crc >> 8);
  return crc;
}

inline void put_u32(std::vector<unsigned char>& v, std::uint32_t x) {
  v.push_back(static_cast<unsigned char>(x >> 24));
  v.push_back(static_cast<unsigned char>(x >> 16));
  v.push_back(static_cast<unsigned char>(x >> 8));
  v.push_back(static_cast<unsigned char>(x));
}

inline void png_chunk(std::vector<unsigned char>& out, const char type[5],
                      const std::vector<unsigned char>& payload) {
  put_u32(out, static_cast<std::uint32_t>(payload.size()));
  std::vector<unsigned char> body(type, type + 4);
  body.insert(body.end(), payload.begin(), payload.end());
  out.insert(out.end(), body.begin(), body.end());
  put_u32(out, crc32_png(body.data(), body.size()) ^ 0xFFFFFFFFu);
}

}  // namespace detail

inline void write_png_rgb(const std::string& path, int width, int height,
                          const std::vector<std::array<unsigned char, 3>>& pixels) {
  require(static_cast<std::size_t>(width) * height == pixels.size(), "bad_params",
          "pixel buffer size mismatch");
  std::vector<unsigned char> out{0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
  std::vector<unsigned char> ihdr;
  detail::put_u32(ihdr, static_cast<std::uint32_t>(width));
  detail::put_u32(ihdr, static_cast<std::uint32_t>(height));
  ihdr.push_back(8);   // bit depth
  ihdr.push_back(2);   // truecolor
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  detail::png_chunk(out, "IHDR", ihdr);

  // raw scanlines with filter byte 0
  std::vector<unsigned char> raw;
  raw.reserve(static_cast<std::size_t>(height) * (1 + 3 * static_cast<std::size_t>(width)));
  for (int r = 0; r < height; ++r) {
    raw.push_back(0);
    for (int c = 0; c < width; ++c) {
      const auto& px = pixels[static_cast<std::size_t>(r) * width + c];
      raw.push_back(px[0]);
      raw.push_back(px[1]);
      raw.push_back(px[2]);
    }
  }
  // zlib stream with stored deflate blocks
  std::vector<unsigned char> z{0x78, 0x01};
  std::uint32_t s1 = 1, s2 = 0;
  for (unsigned char b : raw) {
    s1 = (s1 + b) % 65521;
    s2 = (s2 + s1) % 65521;
  }
  std::size_t off = 0;
  while (off < raw.size()) {
    const std::size_t len = std::min<std::size_t>(65535, raw.size() - off);
    z.push_back(off + len == raw.size() ? 1 : 0);  // BFINAL + stored
    z.push_back(static_cast<unsigned char>(len & 0xFF));
    z.push_back(static_cast<unsigned char>(len >> 8));
    z.push_back(static_cast<unsigned char>(~len & 0xFF));
    z.push_back(static_cast<unsigned char>((~len >> 8) & 0xFF));
    z.insert(z.end(), raw.begin() + static_cast<long>(off), raw.begin() + static_cast<long>(off + len));
    off += len;
  }
  detail::put_u32(z, (s2 << 16) | s1);
  detail::png_chunk(out, "IDAT", z);
  detail::png_chunk(out, "IEND", {});

  std::ofstream f(path, std::ios::binary);
  require(static_cast<bool>(f), "io_error", "cannot write " + path);
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
}

/// Renders a raster as a map with five equal bins over [lo, hi] (the
/// standard presentation for probability surfaces); missing cells are grey.
/// North is the top row. Presentation only, excluded from numeric checks.
inline void render_binned_png(const std::string& path, const Raster& r, double lo = 0.0,
                              double hi = 1.0) {
  static const std::array<std::array<unsigned char, 3>, 5> ramp{{{239, 243, 255},
                                                                 {189, 215, 231},
                                                                 {107, 174, 214},
                                                                 {49, 130, 189},
                                                                 {8, 81, 156}}};
  std::vector<std::array<unsigned char, 3>> pixels(r.size());
  for (int row = 0; row < r.spec.nrows; ++row) {
    for (int col = 0; col < r.spec.ncols; ++col) {
      const std::size_t src = r.spec.index(col, r.spec.nrows - 1 - row);
      const std::size_t dst = static_cast<std::size_t>(row) * r.spec.ncols + col;
      if (r.missing[src]) {
        pixels[dst] = {200, 200, 200};
        continue;
      }
      double frac = (r.values[src] - lo) / (hi - lo);
      frac = std::min(1.0, std::max(0.0, frac));
      const int bin = std::min(4, static_cast<int>(frac * 5.0));
      pixels[dst] = ramp[static_cast<std::size_t>(bin)];
    }
  }
  write_png_rgb(path, r.spec.ncols, r.spec.nrows, pixels);
}

}  // namespace algcp
