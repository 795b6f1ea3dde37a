#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "dtvit/common.hpp"
#include "dtvit/datapipe.hpp"
#include "dtvit/morphology.hpp"
#include "dtvit/raster.hpp"
#include "dtvit/rng.hpp"

namespace dtvit {

// synthetic "head CT": skull ellipse around noisy brain tissue, optional
// hyperdense hemorrhage blob placed per class geometry, and a fixation-brace
// arc pair strictly outside the head. Intensities live on the signed 16-bit
// raw scale so the same files exercise the thresholding pipeline.
struct PhantomSpec {
  int64_t h = 256, w = 256;
  double head_ax_frac = 0.38;    // head semi-axis x, fraction of width
  double head_by_frac = 0.45;    // head semi-axis y, fraction of height
  double jitter = 0.03;          // relative axis jitter, +-
  double brain_scale = 0.88;     // brain ellipse relative to head
  double background = 0.0;
  double skull_level = 2000.0;
  double brain_level = 1000.0;
  double noise_amp = 60.0;       // uniform +- on brain pixels
  double blob_delta = 1100.0;    // blob = brain_level + blob_delta
  double blob_rmin_frac = 0.06;  // blob radius range, fraction of min extent
  double blob_rmax_frac = 0.10;
  // class geometry: center position as a fraction of the brain semi-axes
  double deep_rr_max = 0.30;            // central region
  double lobar_rr_min = 0.75;           // peripheral cortical band
  double lobar_rr_max = 0.84;
  double lobar_half_angle_deg = 55.0;   // around straight up
  double sub_rr_min = 0.52;
  double sub_rr_max = 0.78;
  double sub_half_angle_deg = 40.0;     // around straight down
  double sub_min_drop = 0.40;           // blob center at least this far down, x head by
  double brace_scale = 1.12;            // brace ellipse relative to head
  double brace_level = 2600.0;
  double brace_thickness_frac = 0.012;  // of width, min 1 px
  double brace_half_angle_deg = 30.0;   // lateral arcs at 0 and 180 degrees
  int retries = 200;

  void validate() const {
    check(h >= 16 && w >= 16, "phantom: extents must be at least 16");
    check(jitter >= 0 && jitter < 0.5, "phantom: jitter out of range");
    check(brain_scale > 0 && brain_scale < 1, "phantom: brain_scale must be in (0,1)");
    check(blob_rmin_frac > 0 && blob_rmax_frac >= blob_rmin_frac,
          "phantom: bad blob radius range");
    check(blob_delta >= 4.0 * noise_amp,
          "phantom: blob contrast below 4x noise amplitude");
    check(retries > 0, "phantom: retries must be positive");
  }
};

struct Phantom {
  RawScan scan;
  int presence = kNormal;
  int location = -1;
  BinaryMask blob;
  BinaryMask brace;
  BinaryMask brain;  // brain-tissue ellipse, for retention tests
};

// classes: 0 Normal, 1 Deep, 2 Lobar, 3 Subtentorial
inline Phantom generate(int cls, const PhantomSpec& spec, Rng rng) {
  spec.validate();
  check(cls >= 0 && cls <= 3, "phantom: class must be in [0,3]");
  int64_t h = spec.h, w = spec.w;
  double cy = static_cast<double>(h) / 2.0, cx = static_cast<double>(w) / 2.0;
  double ax = spec.head_ax_frac * static_cast<double>(w) *
              (1.0 + rng.uniform(-spec.jitter, spec.jitter));
  double by = spec.head_by_frac * static_cast<double>(h) *
              (1.0 + rng.uniform(-spec.jitter, spec.jitter));
  double bax = ax * spec.brain_scale, bby = by * spec.brain_scale;

  std::vector<double> img(static_cast<size_t>(h * w), spec.background);
  std::vector<double> en(static_cast<size_t>(h * w)), ebn(static_cast<size_t>(h * w));
  Phantom out;
  out.blob = BinaryMask::zeros(h, w);
  out.brace = BinaryMask::zeros(h, w);
  out.brain = BinaryMask::zeros(h, w);
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      double dx = (static_cast<double>(x) - cx), dy = (static_cast<double>(y) - cy);
      size_t i = static_cast<size_t>(y * w + x);
      en[i] = (dx / ax) * (dx / ax) + (dy / by) * (dy / by);
      ebn[i] = (dx / bax) * (dx / bax) + (dy / bby) * (dy / bby);
      if (en[i] <= 1.0) img[i] = spec.skull_level;
    }
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      size_t i = static_cast<size_t>(y * w + x);
      if (ebn[i] <= 1.0) {
        img[i] = spec.brain_level + rng.uniform(-spec.noise_amp, spec.noise_amp);
        out.brain.set(y, x, true);
      }
    }

  // lateral brace arcs on an ellipse strictly outside the head
  double sb = spec.brace_scale;
  double tb = std::max(1.0, spec.brace_thickness_frac * static_cast<double>(w));
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      size_t i = static_cast<size_t>(y * w + x);
      if (en[i] <= 1.05) continue;
      double dx = (static_cast<double>(x) - cx), dy = (static_cast<double>(y) - cy);
      double ang = std::atan2(dy, dx) * 180.0 / M_PI;
      bool lateral = std::fabs(ang) < spec.brace_half_angle_deg ||
                     std::fabs(std::fabs(ang) - 180.0) < spec.brace_half_angle_deg;
      if (!lateral) continue;
      double rad = std::sqrt((dx / (ax * sb)) * (dx / (ax * sb)) +
                             (dy / (by * sb)) * (dy / (by * sb)));
      // tb is the full band thickness; the radial test sees half of it per side
      if (std::fabs(rad - 1.0) * std::min(ax, by) * sb <= tb / 2.0) {
        img[i] = spec.brace_level;
        out.brace.set(y, x, true);
      }
    }

  if (cls != 0) {
    double rmin = spec.blob_rmin_frac * static_cast<double>(std::min(h, w));
    double rmax = spec.blob_rmax_frac * static_cast<double>(std::min(h, w));
    bool placed = false;
    for (int attempt = 0; attempt < spec.retries && !placed; ++attempt) {
      double rr, th;
      if (cls == 1) {
        rr = rng.uniform(0.0, spec.deep_rr_max);
        th = rng.uniform(0.0, 2.0 * M_PI);
      } else if (cls == 2) {
        rr = rng.uniform(spec.lobar_rr_min, spec.lobar_rr_max);
        th = (-90.0 + rng.uniform(-spec.lobar_half_angle_deg, spec.lobar_half_angle_deg)) *
             M_PI / 180.0;
      } else {
        rr = rng.uniform(spec.sub_rr_min, spec.sub_rr_max);
        th = (90.0 + rng.uniform(-spec.sub_half_angle_deg, spec.sub_half_angle_deg)) *
             M_PI / 180.0;
      }
      double r = rng.uniform(rmin, rmax);
      double rfit = (0.97 - rr) * std::min(bax, bby) - 0.5;
      double bx = cx + rr * bax * std::cos(th);
      double byy = cy + rr * bby * std::sin(th);
      if (cls == 3 && byy - cy < spec.sub_min_drop * by) continue;
      BinaryMask cand = BinaryMask::zeros(h, w);
      int64_t count = 0;
      bool inside = true;
      if (cls >= 2) {
        // cortical/tentorial blobs elongate along the local tangent
        double rt = std::max(r, 2.5);
        double rn = std::max(1.0, std::min(r, rfit));
        double tx = -std::sin(th), ty = std::cos(th);
        double nx = std::cos(th), ny = std::sin(th);
        for (int64_t y = 0; y < h; ++y)
          for (int64_t x = 0; x < w; ++x) {
            double u = (static_cast<double>(x) - bx) * tx + (static_cast<double>(y) - byy) * ty;
            double v = (static_cast<double>(x) - bx) * nx + (static_cast<double>(y) - byy) * ny;
            if ((u / rt) * (u / rt) + (v / rn) * (v / rn) <= 1.0) {
              cand.set(y, x, true);
              ++count;
              if (ebn[static_cast<size_t>(y * w + x)] >= 0.985) inside = false;
            }
          }
      } else {
        double rc = std::max(1.0, std::min(r, rfit));
        for (int64_t y = 0; y < h; ++y)
          for (int64_t x = 0; x < w; ++x) {
            double dx = static_cast<double>(x) - bx, dy = static_cast<double>(y) - byy;
            if (dx * dx + dy * dy <= rc * rc) {
              cand.set(y, x, true);
              ++count;
              if (ebn[static_cast<size_t>(y * w + x)] >= 0.985) inside = false;
            }
          }
      }
      if (count == 0 || !inside) continue;
      out.blob = cand;
      for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
          if (cand.at(y, x))
            img[static_cast<size_t>(y * w + x)] = spec.brain_level + spec.blob_delta;
      placed = true;
    }
    if (!placed)
      failf("phantom: infeasible geometry, no blob placement found in ", spec.retries,
            " attempts (class ", cls, ")");
  }

  out.scan.h = h;
  out.scan.w = w;
  out.scan.px.resize(static_cast<size_t>(h * w));
  for (size_t i = 0; i < img.size(); ++i) {
    double v = img[i];
    check(v >= -32768.0 && v <= 32767.0, "phantom: intensity outside int16 range");
    out.scan.px[i] = static_cast<int16_t>(std::llround(v));
  }
  out.presence = cls == 0 ? kNormal : kIch;
  out.location = cls == 0 ? -1 : cls - 1;
  return out;
}

// centroid of a mask in pixel coordinates (y, x); error on empty mask
inline std::pair<double, double> blob_centroid(const BinaryMask& m) {
  double sy = 0, sx = 0;
  int64_t n = 0;
  for (int64_t y = 0; y < m.h; ++y)
    for (int64_t x = 0; x < m.w; ++x)
      if (m.at(y, x)) {
        sy += static_cast<double>(y);
        sx += static_cast<double>(x);
        ++n;
      }
  check(n > 0, "blob_centroid: empty mask");
  return {sy / static_cast<double>(n), sx / static_cast<double>(n)};
}

inline const char* phantom_class_name(int cls) {
  switch (cls) {
    case 0: return "normal";
    case 1: return "deep";
    case 2: return "lobar";
    case 3: return "subtentorial";
    default: fail("phantom: class must be in [0,3]");
  }
}

// Emits DTR1 scans plus an index file; synthetic patient ids group 64
// consecutive slices of a class. Ground-truth blob masks go to masks/ for
// white-box tests; the index never references them. Sample i draws from the
// child stream derive("phantom").derive(i), i counted across the whole run.
inline std::vector<Record> generate_dataset(const std::array<int64_t, 4>& counts,
                                            const PhantomSpec& spec, uint64_t seed,
                                            const std::string& outdir) {
  spec.validate();
  int64_t total = counts[0] + counts[1] + counts[2] + counts[3];
  for (int64_t c : counts) check(c >= 0, "generate_dataset: counts must be nonnegative");
  check(total > 0, "generate_dataset: empty dataset");
  namespace fs = std::filesystem;
  fs::create_directories(outdir);
  fs::create_directories(fs::path(outdir) / "masks");
  Rng base = Rng(seed).derive("phantom");
  std::vector<Record> recs;
  uint64_t gi = 0;
  for (int cls = 0; cls < 4; ++cls) {
    for (int64_t j = 0; j < counts[static_cast<size_t>(cls)]; ++j, ++gi) {
      Phantom ph = generate(cls, spec, base.derive(gi));
      char name[64];
      std::snprintf(name, sizeof name, "%s_%05lld", phantom_class_name(cls),
                    static_cast<long long>(j));
      Record r;
      r.id = name;
      r.path = std::string(name) + ".dtr";
      r.presence = ph.presence;
      r.location = ph.location;
      r.patient = std::string(phantom_class_name(cls)) + "_p" + std::to_string(j / 64);
      write_dtr1((fs::path(outdir) / r.path).string(), ph.scan);
      Image8 mask{ph.blob.h, ph.blob.w, {}};
      mask.px.resize(static_cast<size_t>(ph.blob.h * ph.blob.w));
      for (size_t k = 0; k < mask.px.size(); ++k) mask.px[k] = ph.blob.px[k] ? 255 : 0;
      write_pgm8((fs::path(outdir) / "masks" / (std::string(name) + ".pgm")).string(), mask);
      recs.push_back(std::move(r));
    }
  }
  write_index((fs::path(outdir) / "index.txt").string(), recs);
  return recs;
}

}  // namespace dtvit
