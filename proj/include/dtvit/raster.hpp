#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "dtvit/common.hpp"

namespace dtvit {

// Raw 16-bit scan (CT-attenuation stand-in), row-major.
struct RawScan {
  int64_t h = 0, w = 0;
  std::vector<int16_t> px;

  int16_t& at(int64_t y, int64_t x) { return px[static_cast<size_t>(y * w + x)]; }
  int16_t at(int64_t y, int64_t x) const { return px[static_cast<size_t>(y * w + x)]; }
};

// 8-bit grayscale image, row-major.
struct Image8 {
  int64_t h = 0, w = 0;
  std::vector<uint8_t> px;

  uint8_t& at(int64_t y, int64_t x) { return px[static_cast<size_t>(y * w + x)]; }
  uint8_t at(int64_t y, int64_t x) const { return px[static_cast<size_t>(y * w + x)]; }
};

namespace detail {

inline void put_u32le(std::ostream& os, uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  os.write(b, 4);
}

inline uint32_t get_u32le(std::istream& is, const std::string& path) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) failf("raster: truncated header in '", path, "'");
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace detail

// DTR1 container: magic "DTR1", h and w as 32-bit little-endian, then h*w
// little-endian signed 16-bit pixel values.
inline void write_dtr1(const std::string& path, const RawScan& s) {
  std::ofstream f(path, std::ios::binary);
  if (!f) failf("raster: cannot open '", path, "' for writing");
  f.write("DTR1", 4);
  detail::put_u32le(f, static_cast<uint32_t>(s.h));
  detail::put_u32le(f, static_cast<uint32_t>(s.w));
  for (int16_t v : s.px) {
    uint16_t u = static_cast<uint16_t>(v);
    char b[2] = {static_cast<char>(u & 0xff), static_cast<char>((u >> 8) & 0xff)};
    f.write(b, 2);
  }
  if (!f) failf("raster: write failed for '", path, "'");
}

inline RawScan read_dtr1(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) failf("raster: cannot open '", path, "'");
  char magic[4];
  f.read(magic, 4);
  if (!f || std::string(magic, 4) != "DTR1")
    failf("raster: '", path, "' is not a DTR1 file (bad magic)");
  RawScan s;
  s.h = detail::get_u32le(f, path);
  s.w = detail::get_u32le(f, path);
  if (s.h <= 0 || s.w <= 0 || s.h > 1 << 20 || s.w > 1 << 20)
    failf("raster: implausible extents ", s.h, "x", s.w, " in '", path, "'");
  s.px.resize(static_cast<size_t>(s.h * s.w));
  for (size_t i = 0; i < s.px.size(); ++i) {
    unsigned char b[2];
    f.read(reinterpret_cast<char*>(b), 2);
    if (!f) failf("raster: truncated pixel data in '", path, "'");
    s.px[i] = static_cast<int16_t>(static_cast<uint16_t>(b[0]) |
                                   (static_cast<uint16_t>(b[1]) << 8));
  }
  return s;
}

// binary PGM ("P5"), maxval 255
inline void write_pgm8(const std::string& path, const Image8& img) {
  std::ofstream f(path, std::ios::binary);
  if (!f) failf("raster: cannot open '", path, "' for writing");
  f << "P5\n" << img.w << " " << img.h << "\n255\n";
  f.write(reinterpret_cast<const char*>(img.px.data()), static_cast<std::streamsize>(img.px.size()));
  if (!f) failf("raster: write failed for '", path, "'");
}

namespace detail {

inline int pgm_token(std::istream& is, const std::string& path) {
  // skips whitespace and '#' comments per the PGM grammar
  int c = is.get();
  for (;;) {
    while (c == ' ' || c == '\t' || c == '\r' || c == '\n') c = is.get();
    if (c == '#') {
      while (c != '\n' && c != EOF) c = is.get();
      continue;
    }
    break;
  }
  if (c == EOF || c < '0' || c > '9') failf("raster: malformed PGM header in '", path, "'");
  int v = 0;
  while (c >= '0' && c <= '9') {
    v = v * 10 + (c - '0');
    c = is.get();
  }
  return v;
}

}  // namespace detail

// reads binary PGM with maxval 255 or 65535 (16-bit samples are big-endian
// per the format definition); values returned widened to int32
struct PgmImage {
  int64_t h = 0, w = 0;
  int maxval = 0;
  std::vector<int32_t> px;
};

inline PgmImage read_pgm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) failf("raster: cannot open '", path, "'");
  char m0 = static_cast<char>(f.get());
  char m1 = static_cast<char>(f.get());
  if (m0 != 'P' || m1 != '5') failf("raster: '", path, "' is not a binary PGM (P5) file");
  PgmImage img;
  img.w = detail::pgm_token(f, path);
  img.h = detail::pgm_token(f, path);
  img.maxval = detail::pgm_token(f, path);
  if (img.maxval != 255 && img.maxval != 65535)
    failf("raster: unsupported PGM maxval ", img.maxval, " in '", path, "'");
  img.px.resize(static_cast<size_t>(img.h * img.w));
  if (img.maxval == 255) {
    for (auto& v : img.px) {
      int c = f.get();
      if (c == EOF) failf("raster: truncated pixel data in '", path, "'");
      v = c;
    }
  } else {
    for (auto& v : img.px) {
      int hi = f.get(), lo = f.get();
      if (hi == EOF || lo == EOF) failf("raster: truncated pixel data in '", path, "'");
      v = (hi << 8) | lo;
    }
  }
  return img;
}

inline Image8 read_image8(const std::string& path) {
  PgmImage p = read_pgm(path);
  check(p.maxval == 255, "raster: expected an 8-bit image");
  Image8 img;
  img.h = p.h;
  img.w = p.w;
  img.px.resize(p.px.size());
  for (size_t i = 0; i < p.px.size(); ++i) img.px[i] = static_cast<uint8_t>(p.px[i]);
  return img;
}

// reads a raw scan from either container, dispatching on the magic bytes
inline RawScan read_scan(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) failf("raster: cannot open '", path, "'");
  char m0 = static_cast<char>(f.get());
  char m1 = static_cast<char>(f.get());
  f.close();
  if (m0 == 'D' && m1 == 'T') return read_dtr1(path);
  if (m0 == 'P' && m1 == '5') {
    PgmImage p = read_pgm(path);
    RawScan s;
    s.h = p.h;
    s.w = p.w;
    s.px.resize(p.px.size());
    for (size_t i = 0; i < p.px.size(); ++i) {
      if (p.px[i] > 32767) failf("raster: sample ", p.px[i], " exceeds the signed 16-bit range");
      s.px[i] = static_cast<int16_t>(p.px[i]);
    }
    return s;
  }
  failf("raster: '", path, "' is neither DTR1 nor PGM");
}

}  // namespace dtvit
