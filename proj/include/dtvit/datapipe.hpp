#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dtvit/common.hpp"
#include "dtvit/dual_head.hpp"
#include "dtvit/raster.hpp"
#include "dtvit/rng.hpp"
#include "dtvit/tensor.hpp"

namespace dtvit {

struct Record {
  std::string id;
  std::string path;     // relative to the index file's directory
  int presence = kNormal;
  int location = -1;    // present iff presence == ICH
  std::string patient;
};

inline void validate_record(const Record& r) {
  if (r.presence == kNormal && r.location >= 0)
    failf("record '", r.id, "': Normal sample carries a location label");
  if (r.presence == kIch && r.location < 0)
    failf("record '", r.id, "': ICH sample lacks a location label");
}

// index file: one record per line — id, relative path, presence, location
// (or "-"), patient id — whitespace separated, '#' starts a comment
inline std::vector<Record> read_index(const std::string& path) {
  std::ifstream f(path);
  if (!f) failf("index: cannot open '", path, "'");
  std::vector<Record> out;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    std::string stripped = line.substr(0, line.find('#'));
    std::istringstream is(stripped);
    Record r;
    std::string presence, location;
    if (!(is >> r.id)) continue;  // blank line
    if (!(is >> r.path >> presence >> location >> r.patient))
      failf("index: malformed line ", lineno, " in '", path, "'");
    if (presence == "normal") r.presence = kNormal;
    else if (presence == "ich") r.presence = kIch;
    else failf("index: bad presence token '", presence, "' at line ", lineno);
    if (location == "-") r.location = -1;
    else if (location == "deep") r.location = kDeep;
    else if (location == "lobar") r.location = kLobar;
    else if (location == "subtentorial") r.location = kSubtentorial;
    else failf("index: bad location token '", location, "' at line ", lineno);
    validate_record(r);
    out.push_back(std::move(r));
  }
  return out;
}

inline void write_index(const std::string& path, const std::vector<Record>& recs) {
  std::ofstream f(path);
  if (!f) failf("index: cannot open '", path, "' for writing");
  for (const Record& r : recs) {
    const char* loc = r.location == kDeep            ? "deep"
                      : r.location == kLobar         ? "lobar"
                      : r.location == kSubtentorial  ? "subtentorial"
                                                     : "-";
    f << r.id << " " << r.path << " " << (r.presence == kIch ? "ich" : "normal") << " " << loc
      << " " << r.patient << "\n";
  }
  if (!f) failf("index: write failed for '", path, "'");
}

// Deterministic replication rule: with T = max location-class count, every
// record of a class with n members appears floor(T/n) times, and the first
// T mod n records once more, giving exactly T per location class; Normal
// records are then replicated by the same rule up to the total ICH count.
// Replicas are appended after the original list so an already-balanced input
// passes through unchanged. Returns indices into the input.
inline std::vector<size_t> balance_order(const std::vector<int>& presence,
                                         const std::vector<int>& location) {
  check(presence.size() == location.size(), "balance: label lists must match");
  std::array<std::vector<size_t>, 3> by_loc;
  std::vector<size_t> normals;
  for (size_t i = 0; i < presence.size(); ++i) {
    if (presence[i] == kIch) by_loc[static_cast<size_t>(location[i])].push_back(i);
    else normals.push_back(i);
  }
  for (int c = 0; c < 3; ++c)
    if (by_loc[static_cast<size_t>(c)].empty())
      failf("balance: location class '", location_name(c), "' has no records");
  check(!normals.empty(), "balance: presence class 'Normal' has no records");
  int64_t T = 0;
  for (const auto& v : by_loc) T = std::max<int64_t>(T, static_cast<int64_t>(v.size()));
  std::vector<size_t> out;
  for (size_t i = 0; i < presence.size(); ++i) out.push_back(i);
  auto replicate_to = [&](const std::vector<size_t>& idx, int64_t target) {
    int64_t n = static_cast<int64_t>(idx.size());
    int64_t base = target / n, rem = target % n;
    for (int64_t r = 0; r < n; ++r) {
      int64_t copies = base - 1 + (r < rem ? 1 : 0);
      for (int64_t c = 0; c < copies; ++c) out.push_back(idx[static_cast<size_t>(r)]);
    }
  };
  for (int c = 0; c < 3; ++c) replicate_to(by_loc[static_cast<size_t>(c)], T);
  replicate_to(normals, 3 * T);
  return out;
}

inline std::vector<Record> balance(const std::vector<Record>& recs) {
  std::vector<int> presence, location;
  for (const Record& r : recs) {
    presence.push_back(r.presence);
    location.push_back(r.location);
  }
  std::vector<Record> out;
  for (size_t i : balance_order(presence, location)) out.push_back(recs[i]);
  return out;
}

// float grayscale image in the 8-bit value range [0, 255]
struct ImageF {
  int64_t h = 0, w = 0;
  std::vector<double> px;

  double at(int64_t y, int64_t x) const { return px[static_cast<size_t>(y * w + x)]; }
  double& at(int64_t y, int64_t x) { return px[static_cast<size_t>(y * w + x)]; }
};

inline ImageF to_float(const Image8& img) {
  ImageF f;
  f.h = img.h;
  f.w = img.w;
  f.px.assign(img.px.begin(), img.px.end());
  return f;
}

// centered size x size window; for odd margins the extra pixel is dropped on
// the right/bottom (i.e. the window is biased toward the left/top)
inline ImageF center_crop(const ImageF& img, int64_t size) {
  if (img.h < size || img.w < size)
    failf("center_crop: source ", img.h, "x", img.w, " smaller than crop ", size);
  int64_t y0 = (img.h - size) / 2, x0 = (img.w - size) / 2;
  ImageF out;
  out.h = size;
  out.w = size;
  out.px.resize(static_cast<size_t>(size * size));
  for (int64_t y = 0; y < size; ++y)
    for (int64_t x = 0; x < size; ++x) out.at(y, x) = img.at(y0 + y, x0 + x);
  return out;
}

// rotation about the image center, zero fill outside the support; bilinear
// interpolation by default, nearest-neighbor mode for exact-oracle tests
inline ImageF rotate(const ImageF& img, double degrees, bool nearest = false) {
  double a = degrees * M_PI / 180.0;
  double ca = std::cos(a), sa = std::sin(a);
  double cy = (static_cast<double>(img.h) - 1.0) / 2.0;
  double cx = (static_cast<double>(img.w) - 1.0) / 2.0;
  ImageF out;
  out.h = img.h;
  out.w = img.w;
  out.px.assign(img.px.size(), 0.0);
  for (int64_t y = 0; y < img.h; ++y)
    for (int64_t x = 0; x < img.w; ++x) {
      double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
      double sx = cx + ca * dx + sa * dy;
      double sy = cy - sa * dx + ca * dy;
      if (nearest) {
        int64_t ix = static_cast<int64_t>(std::llround(sx));
        int64_t iy = static_cast<int64_t>(std::llround(sy));
        if (ix >= 0 && ix < img.w && iy >= 0 && iy < img.h) out.at(y, x) = img.at(iy, ix);
        continue;
      }
      int64_t x0 = static_cast<int64_t>(std::floor(sx));
      int64_t y0 = static_cast<int64_t>(std::floor(sy));
      double fx = sx - static_cast<double>(x0), fy = sy - static_cast<double>(y0);
      double acc = 0.0;
      for (int dyi = 0; dyi <= 1; ++dyi)
        for (int dxi = 0; dxi <= 1; ++dxi) {
          int64_t yy = y0 + dyi, xx = x0 + dxi;
          if (yy < 0 || yy >= img.h || xx < 0 || xx >= img.w) continue;
          double wgt = (dxi ? fx : 1.0 - fx) * (dyi ? fy : 1.0 - fy);
          acc += wgt * img.at(yy, xx);
        }
      out.at(y, x) = acc;
    }
  return out;
}

// out = smooth + factor * (orig - smooth) with the 3x3 kernel
// [[1,1,1],[1,5,1],[1,1,1]]/13; border pixels keep their original value in
// the smoothed image; result clamped to [0, 255]
inline ImageF adjust_sharpness(const ImageF& img, double factor) {
  check(factor >= 0, "adjust_sharpness: factor must be nonnegative");
  ImageF smooth = img;
  for (int64_t y = 1; y + 1 < img.h; ++y)
    for (int64_t x = 1; x + 1 < img.w; ++x) {
      double s = 5.0 * img.at(y, x);
      s += img.at(y - 1, x - 1) + img.at(y - 1, x) + img.at(y - 1, x + 1);
      s += img.at(y, x - 1) + img.at(y, x + 1);
      s += img.at(y + 1, x - 1) + img.at(y + 1, x) + img.at(y + 1, x + 1);
      smooth.at(y, x) = s / 13.0;
    }
  ImageF out = img;
  for (size_t i = 0; i < img.px.size(); ++i) {
    double v = smooth.px[i] + factor * (img.px[i] - smooth.px[i]);
    out.px[i] = std::min(255.0, std::max(0.0, v));
  }
  return out;
}

struct AugmentConfig {
  int64_t crop_size = 224;
  double max_rotation_degrees = 15.0;
  double sharpness_factor = 2.0;
  double sharpness_probability = 0.5;
  std::array<double, 3> channel_mean = {0.485, 0.456, 0.406};
  std::array<double, 3> channel_std = {0.229, 0.224, 0.225};
};

// scale to [0,1], replicate to 3 channels, normalize per channel
template <typename S>
Tensor<S> to_model_input(const ImageF& img, const AugmentConfig& cfg) {
  for (double sd : cfg.channel_std) check(sd > 0, "to_model_input: std must be positive");
  Tensor<S> t = Tensor<S>::zeros({3, img.h, img.w});
  int64_t hw = img.h * img.w;
  for (int c = 0; c < 3; ++c) {
    double mean = cfg.channel_mean[static_cast<size_t>(c)];
    double sd = cfg.channel_std[static_cast<size_t>(c)];
    for (int64_t i = 0; i < hw; ++i)
      t.data[static_cast<size_t>(c * hw + i)] =
          static_cast<S>((img.px[static_cast<size_t>(i)] / 255.0 - mean) / sd);
  }
  return t;
}

struct SplitResult {
  std::vector<Record> train, val, test;
};

// patient-grouped split: patients (in order of first appearance) are shuffled
// with the seeded RNG and partitioned by cumulative ratio; a split whose
// requested ratio is positive but receives zero patients is an error
inline SplitResult split(const std::vector<Record>& recs, std::array<double, 3> ratios,
                         uint64_t seed) {
  double sum = ratios[0] + ratios[1] + ratios[2];
  if (std::fabs(sum - 1.0) > 1e-6) failf("split: ratios sum to ", sum, ", expected 1");
  for (double r : ratios) check(r >= 0, "split: ratios must be nonnegative");
  std::vector<std::string> patients;
  for (const Record& r : recs)
    if (std::find(patients.begin(), patients.end(), r.patient) == patients.end())
      patients.push_back(r.patient);
  check(!patients.empty(), "split: no records");
  Rng rng = Rng(seed).derive("split");
  rng.shuffle(patients);
  int64_t n = static_cast<int64_t>(patients.size());
  int64_t b1 = static_cast<int64_t>(std::floor(ratios[0] * static_cast<double>(n) + 1e-9));
  int64_t b2 = static_cast<int64_t>(
      std::floor((ratios[0] + ratios[1]) * static_cast<double>(n) + 1e-9));
  auto split_of = [&](const std::string& patient) {
    for (int64_t i = 0; i < n; ++i)
      if (patients[static_cast<size_t>(i)] == patient) return i < b1 ? 0 : (i < b2 ? 1 : 2);
    return 0;
  };
  SplitResult out;
  for (const Record& r : recs) {
    int s = split_of(r.patient);
    (s == 0 ? out.train : s == 1 ? out.val : out.test).push_back(r);
  }
  int64_t counts[3] = {b1, b2 - b1, n - b2};
  const char* names[3] = {"train", "val", "test"};
  for (int i = 0; i < 3; ++i)
    if (ratios[static_cast<size_t>(i)] > 0 && counts[i] == 0)
      failf("split: requested ratio ", ratios[static_cast<size_t>(i)], " for '", names[i],
            "' but no patients were assigned (", n, " patients total)");
  return out;
}

}  // namespace dtvit
