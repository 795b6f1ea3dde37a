#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "dtvit/common.hpp"
#include "dtvit/raster.hpp"

namespace dtvit {

struct BinaryMask {
  int64_t h = 0, w = 0;
  std::vector<uint8_t> px;  // 0 or 1

  static BinaryMask zeros(int64_t h, int64_t w) {
    BinaryMask m;
    m.h = h;
    m.w = w;
    m.px.assign(static_cast<size_t>(h * w), 0);
    return m;
  }

  bool at(int64_t y, int64_t x) const { return px[static_cast<size_t>(y * w + x)] != 0; }
  void set(int64_t y, int64_t x, bool v) { px[static_cast<size_t>(y * w + x)] = v ? 1 : 0; }
  int64_t count() const {
    int64_t c = 0;
    for (uint8_t v : px) c += v;
    return c;
  }
};

struct MorphParams {
  // negative threshold means "auto": 10% of the scan's max value
  double binarize_threshold = -1;
  int erosion_radius = 3;
  int edge_columns = 2;
  int fill_connectivity = 4;
  // optional export window (center, width); min-max over the mask otherwise
  std::optional<std::pair<double, double>> window;
};

inline double auto_threshold(const RawScan& s) {
  int16_t mx = 0;
  for (int16_t v : s.px) mx = std::max(mx, v);
  return 0.10 * static_cast<double>(mx);
}

// mask[i,j] = pixels[i,j] > threshold (strict)
inline BinaryMask binarize(const RawScan& s, double threshold) {
  BinaryMask m = BinaryMask::zeros(s.h, s.w);
  for (size_t i = 0; i < s.px.size(); ++i)
    m.px[i] = static_cast<double>(s.px[i]) > threshold ? 1 : 0;
  return m;
}

// erosion by the disk {(dx,dy): dx^2+dy^2 <= r^2}; out-of-bounds counts false
inline BinaryMask erode_disk(const BinaryMask& m, int radius) {
  check(radius >= 0, "erode_disk: radius must be nonnegative");
  if (radius == 0) return m;
  std::vector<std::pair<int, int>> offs;
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx)
      if (dx * dx + dy * dy <= radius * radius) offs.push_back({dy, dx});
  BinaryMask out = BinaryMask::zeros(m.h, m.w);
  for (int64_t y = 0; y < m.h; ++y)
    for (int64_t x = 0; x < m.w; ++x) {
      bool keep = true;
      for (auto [dy, dx] : offs) {
        int64_t ny = y + dy, nx = x + dx;
        if (ny < 0 || ny >= m.h || nx < 0 || nx >= m.w || !m.at(ny, nx)) {
          keep = false;
          break;
        }
      }
      out.set(y, x, keep);
    }
  return out;
}

inline BinaryMask zero_edge_columns(const BinaryMask& m, int k) {
  check(k >= 0, "zero_edge_columns: k must be nonnegative");
  if (2 * static_cast<int64_t>(k) > m.w)
    failf("zero_edge_columns: 2k = ", 2 * k, " exceeds width ", m.w);
  BinaryMask out = m;
  for (int64_t y = 0; y < m.h; ++y)
    for (int64_t x = 0; x < k; ++x) {
      out.set(y, x, false);
      out.set(y, m.w - 1 - x, false);
    }
  return out;
}

// flood-fill the border-reachable false region; unreached false pixels become
// true (interior holes filled), foreground unchanged
inline BinaryMask fill_holes(const BinaryMask& m, int connectivity) {
  check(connectivity == 4 || connectivity == 8, "fill_holes: connectivity must be 4 or 8");
  std::vector<uint8_t> outside(m.px.size(), 0);
  std::vector<int64_t> stack;
  auto push = [&](int64_t y, int64_t x) {
    size_t i = static_cast<size_t>(y * m.w + x);
    if (!outside[i] && !m.px[i]) {
      outside[i] = 1;
      stack.push_back(y * m.w + x);
    }
  };
  for (int64_t x = 0; x < m.w; ++x) {
    push(0, x);
    push(m.h - 1, x);
  }
  for (int64_t y = 0; y < m.h; ++y) {
    push(y, 0);
    push(y, m.w - 1);
  }
  static const int d4[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
  static const int d8[8][2] = {{1, 0},  {-1, 0}, {0, 1},  {0, -1},
                               {1, 1},  {1, -1}, {-1, 1}, {-1, -1}};
  int nd = connectivity == 4 ? 4 : 8;
  const int(*dirs)[2] = connectivity == 4 ? d4 : d8;
  while (!stack.empty()) {
    int64_t v = stack.back();
    stack.pop_back();
    int64_t y = v / m.w, x = v % m.w;
    for (int i = 0; i < nd; ++i) {
      int64_t ny = y + dirs[i][0], nx = x + dirs[i][1];
      if (ny >= 0 && ny < m.h && nx >= 0 && nx < m.w) push(ny, nx);
    }
  }
  BinaryMask out = m;
  for (size_t i = 0; i < m.px.size(); ++i)
    if (!m.px[i] && !outside[i]) out.px[i] = 1;
  return out;
}

// pixels outside the mask -> 0; inside linearly mapped to [0,255] from either
// the given (center,width) window or the masked min-max range; rounding is
// half-away-from-zero; a constant masked region maps to 0
inline Image8 mask_and_export(const RawScan& s, const BinaryMask& m,
                              std::optional<std::pair<double, double>> window = {}) {
  check(s.h == m.h && s.w == m.w, "mask_and_export: extents mismatch");
  Image8 out;
  out.h = s.h;
  out.w = s.w;
  out.px.assign(s.px.size(), 0);
  double lo, hi;
  if (window) {
    lo = window->first - window->second / 2.0;
    hi = window->first + window->second / 2.0;
  } else {
    lo = 1e300;
    hi = -1e300;
    for (size_t i = 0; i < s.px.size(); ++i)
      if (m.px[i]) {
        lo = std::min(lo, static_cast<double>(s.px[i]));
        hi = std::max(hi, static_cast<double>(s.px[i]));
      }
    if (hi <= lo) return out;  // empty or constant masked region
  }
  check(hi > lo, "mask_and_export: window width must be positive");
  for (size_t i = 0; i < s.px.size(); ++i) {
    if (!m.px[i]) continue;
    double t = (static_cast<double>(s.px[i]) - lo) / (hi - lo);
    t = std::min(1.0, std::max(0.0, t));
    out.px[i] = static_cast<uint8_t>(std::llround(t * 255.0));
  }
  return out;
}

// the full pipeline: the mask is built from one duplicate of the scan and
// applied to the untouched duplicate
inline Image8 preprocess(const RawScan& s, const MorphParams& p = {}) {
  double thr = p.binarize_threshold < 0 ? auto_threshold(s) : p.binarize_threshold;
  BinaryMask m = binarize(s, thr);
  m = erode_disk(m, p.erosion_radius);
  m = zero_edge_columns(m, p.edge_columns);
  m = fill_holes(m, p.fill_connectivity);
  return mask_and_export(s, m, p.window);
}

}  // namespace dtvit
