#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "dtvit/phantom.hpp"

using namespace dtvit;
namespace fs = std::filesystem;

namespace {

PhantomSpec small_spec() {
  PhantomSpec s;
  s.h = 96;
  s.w = 96;
  return s;
}

std::string what_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::runtime_error& e) {
    return e.what();
  }
  return "";
}

std::vector<char> slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  EXPECT_TRUE(f.good()) << path;
  return std::vector<char>((std::istreambuf_iterator<char>(f)),
                           std::istreambuf_iterator<char>());
}

struct BrainGeom {
  double cx, cy, bax, bby;
};

// the brain ellipse axes are not exposed, so estimate them from the mask
BrainGeom estimate_brain(const BinaryMask& brain) {
  int64_t min_x = brain.w, max_x = -1, min_y = brain.h, max_y = -1;
  for (int64_t y = 0; y < brain.h; ++y)
    for (int64_t x = 0; x < brain.w; ++x)
      if (brain.at(y, x)) {
        min_x = std::min(min_x, x);
        max_x = std::max(max_x, x);
        min_y = std::min(min_y, y);
        max_y = std::max(max_y, y);
      }
  EXPECT_GE(max_x, 0);
  BrainGeom g;
  g.cx = 0.5 * static_cast<double>(min_x + max_x);
  g.cy = 0.5 * static_cast<double>(min_y + max_y);
  g.bax = 0.5 * static_cast<double>(max_x - min_x);
  g.bby = 0.5 * static_cast<double>(max_y - min_y);
  return g;
}

struct Centroid {
  double dxn, dyn, rho;  // blob centroid in brain-normalized coordinates
};

Centroid normalized_centroid(const Phantom& ph) {
  BrainGeom g = estimate_brain(ph.brain);
  auto [ym, xm] = blob_centroid(ph.blob);
  Centroid c;
  c.dxn = (xm - g.cx) / g.bax;
  c.dyn = (ym - g.cy) / g.bby;
  c.rho = std::sqrt(c.dxn * c.dxn + c.dyn * c.dyn);
  return c;
}

}  // namespace

TEST(Phantom, DeterministicForSameStream) {
  PhantomSpec sp = small_spec();
  Phantom a = generate(2, sp, Rng(7).derive("t"));
  Phantom b = generate(2, sp, Rng(7).derive("t"));
  EXPECT_EQ(a.scan.px, b.scan.px);
  EXPECT_EQ(a.blob.px, b.blob.px);
  EXPECT_EQ(a.brace.px, b.brace.px);
  EXPECT_EQ(a.brain.px, b.brain.px);
}

TEST(Phantom, SeedChangesScan) {
  PhantomSpec sp = small_spec();
  Phantom a = generate(1, sp, Rng(1));
  Phantom b = generate(1, sp, Rng(2));
  EXPECT_NE(a.scan.px, b.scan.px);
}

TEST(Phantom, NormalHasNoBlob) {
  Phantom ph = generate(0, small_spec(), Rng(3));
  EXPECT_EQ(ph.presence, kNormal);
  EXPECT_EQ(ph.location, -1);
  EXPECT_EQ(ph.blob.count(), 0);
  EXPECT_GT(ph.brace.count(), 0);
  EXPECT_GT(ph.brain.count(), 0);
}

TEST(Phantom, ClassLabels) {
  PhantomSpec sp = small_spec();
  for (int cls = 1; cls <= 3; ++cls) {
    Phantom ph = generate(cls, sp, Rng(10 + static_cast<uint64_t>(cls)));
    EXPECT_EQ(ph.presence, kIch);
    EXPECT_EQ(ph.location, cls - 1);
    EXPECT_GT(ph.blob.count(), 0);
  }
}

TEST(Phantom, IntensityLevelsArePure) {
  PhantomSpec sp = small_spec();
  for (int cls = 0; cls <= 3; ++cls) {
    Phantom ph = generate(cls, sp, Rng(40 + static_cast<uint64_t>(cls)));
    int64_t skull_px = 0;
    for (int64_t y = 0; y < sp.h; ++y)
      for (int64_t x = 0; x < sp.w; ++x) {
        int16_t v = ph.scan.px[static_cast<size_t>(y * sp.w + x)];
        if (ph.blob.at(y, x)) {
          EXPECT_EQ(v, 2100);
        } else if (ph.brace.at(y, x)) {
          EXPECT_EQ(v, 2600);
        } else if (ph.brain.at(y, x)) {
          EXPECT_GE(v, 940);
          EXPECT_LE(v, 1060);
        } else {
          EXPECT_TRUE(v == 0 || v == 2000) << "stray value " << v;
          skull_px += v == 2000;
        }
      }
    EXPECT_GT(skull_px, 0);
  }
}

TEST(Phantom, MasksAreDisjointAndNested) {
  PhantomSpec sp = small_spec();
  for (uint64_t seed = 0; seed < 30; ++seed)
    for (int cls = 1; cls <= 3; ++cls) {
      Phantom ph = generate(cls, sp, Rng(100 + seed * 3 + static_cast<uint64_t>(cls)));
      for (size_t i = 0; i < ph.blob.px.size(); ++i) {
        if (ph.blob.px[i]) {
          EXPECT_TRUE(ph.brain.px[i]) << "blob pixel outside brain";
          EXPECT_FALSE(ph.brace.px[i]);
        }
        if (ph.brace.px[i]) EXPECT_FALSE(ph.brain.px[i]) << "brace touches brain";
      }
    }
}

TEST(Phantom, DeepCentroidsAreCentral) {
  PhantomSpec sp = small_spec();
  for (uint64_t i = 0; i < 40; ++i) {
    Centroid c = normalized_centroid(generate(1, sp, Rng(9000 + i)));
    EXPECT_LT(c.rho, 0.45) << "seed " << i;
  }
}

TEST(Phantom, LobarCentroidsSitInUpperCorticalBand) {
  PhantomSpec sp = small_spec();
  for (uint64_t i = 0; i < 40; ++i) {
    Centroid c = normalized_centroid(generate(2, sp, Rng(10000 + i)));
    EXPECT_GT(c.rho, 0.55) << "seed " << i;
    EXPECT_LT(c.rho, 1.0) << "seed " << i;
    EXPECT_LT(c.dyn, -0.30) << "seed " << i;  // image y grows downward
  }
}

TEST(Phantom, SubtentorialCentroidsDropLow) {
  PhantomSpec sp = small_spec();
  for (uint64_t i = 0; i < 40; ++i) {
    Centroid c = normalized_centroid(generate(3, sp, Rng(11000 + i)));
    EXPECT_GT(c.dyn, 0.35) << "seed " << i;
    EXPECT_GT(c.rho, 0.40) << "seed " << i;
  }
}

TEST(Phantom, CentroidsSeparateClassesPerfectly) {
  PhantomSpec sp = small_spec();
  std::vector<Centroid> pts;
  std::vector<int> labels;
  for (int cls = 1; cls <= 3; ++cls)
    for (uint64_t i = 0; i < 40; ++i) {
      pts.push_back(normalized_centroid(
          generate(cls, sp, Rng(static_cast<uint64_t>(cls) * 1000 + i))));
      labels.push_back(cls);
    }
  // a fixed decision rule classifies every sample correctly
  for (size_t i = 0; i < pts.size(); ++i) {
    int pred;
    if (pts[i].rho < 0.45) pred = 1;
    else if (pts[i].dyn < 0) pred = 2;
    else pred = 3;
    EXPECT_EQ(pred, labels[i]) << "sample " << i;
  }
  // so does nearest class mean
  double mx[4] = {0, 0, 0, 0}, my[4] = {0, 0, 0, 0};
  for (size_t i = 0; i < pts.size(); ++i) {
    mx[labels[i]] += pts[i].dxn / 40.0;
    my[labels[i]] += pts[i].dyn / 40.0;
  }
  for (size_t i = 0; i < pts.size(); ++i) {
    int best = 0;
    double bd = 1e300;
    for (int cls = 1; cls <= 3; ++cls) {
      double dx = pts[i].dxn - mx[cls], dy = pts[i].dyn - my[cls];
      double d = dx * dx + dy * dy;
      if (d < bd) {
        bd = d;
        best = cls;
      }
    }
    EXPECT_EQ(best, labels[i]) << "sample " << i;
  }
}

TEST(Phantom, InfeasibleGeometryThrows) {
  PhantomSpec sp = small_spec();
  sp.sub_min_drop = 5.0;  // no candidate can ever drop that far
  sp.retries = 10;
  std::string msg = what_of([&] { generate(3, sp, Rng(1)); });
  EXPECT_NE(msg.find("infeasible geometry"), std::string::npos);
  EXPECT_NE(msg.find("10"), std::string::npos);
  EXPECT_NE(msg.find("class 3"), std::string::npos);
}

TEST(Phantom, SpecValidation) {
  auto bad = [](auto mut) {
    PhantomSpec s;
    s.h = s.w = 96;
    mut(s);
    return what_of([&] { s.validate(); });
  };
  EXPECT_NE(bad([](PhantomSpec& s) { s.blob_delta = 200.0; }).find("contrast"),
            std::string::npos);
  EXPECT_NE(bad([](PhantomSpec& s) { s.jitter = 0.5; }).find("jitter"), std::string::npos);
  EXPECT_NE(bad([](PhantomSpec& s) { s.h = 8; }).find("16"), std::string::npos);
  EXPECT_NE(bad([](PhantomSpec& s) { s.brain_scale = 1.0; }).find("brain_scale"),
            std::string::npos);
  EXPECT_NE(bad([](PhantomSpec& s) { s.blob_rmax_frac = 0.01; }).find("radius"),
            std::string::npos);
  EXPECT_NE(bad([](PhantomSpec& s) { s.retries = 0; }).find("retries"), std::string::npos);
  EXPECT_THROW(generate(4, small_spec(), Rng(0)), std::runtime_error);
  EXPECT_THROW(generate(-1, small_spec(), Rng(0)), std::runtime_error);
}

TEST(Phantom, BlobCentroidHandCase) {
  BinaryMask m = BinaryMask::zeros(3, 5);
  m.set(1, 1, true);
  m.set(1, 3, true);
  auto [y, x] = blob_centroid(m);
  EXPECT_DOUBLE_EQ(y, 1.0);
  EXPECT_DOUBLE_EQ(x, 2.0);
  EXPECT_THROW(blob_centroid(BinaryMask::zeros(2, 2)), std::runtime_error);
}

TEST(Phantom, ClassNames) {
  EXPECT_STREQ(phantom_class_name(0), "normal");
  EXPECT_STREQ(phantom_class_name(1), "deep");
  EXPECT_STREQ(phantom_class_name(2), "lobar");
  EXPECT_STREQ(phantom_class_name(3), "subtentorial");
  EXPECT_THROW(phantom_class_name(4), std::runtime_error);
}

TEST(Phantom, PreprocessDropsBraceAndKeepsBrain) {
  PhantomSpec sp;  // full-size defaults; the pipeline defaults are tuned for these
  for (uint64_t seed = 0; seed < 5; ++seed) {
    Phantom ph = generate(1, sp, Rng(500 + seed));
    Image8 out = preprocess(ph.scan);
    int64_t brace_kept = 0, brain_kept = 0;
    for (size_t i = 0; i < out.px.size(); ++i) {
      if (ph.brace.px[i] && out.px[i] != 0) ++brace_kept;
      if (ph.brain.px[i] && out.px[i] != 0) ++brain_kept;
    }
    double brain_total = static_cast<double>(ph.brain.count());
    EXPECT_GT(ph.brace.count(), 0);
    EXPECT_EQ(brace_kept, 0) << "seed " << seed;  // arcs sit clear of the head
    EXPECT_GT(static_cast<double>(brain_kept), 0.95 * brain_total) << "seed " << seed;
  }
}

TEST(Dataset, RoundTripThroughIndex) {
  std::string dir = ::testing::TempDir() + "/phantom_ds_a";
  fs::remove_all(dir);
  std::array<int64_t, 4> counts = {2, 1, 1, 1};
  std::vector<Record> recs = generate_dataset(counts, small_spec(), 5, dir);
  ASSERT_EQ(recs.size(), 5u);
  EXPECT_EQ(recs[0].id, "normal_00000");
  EXPECT_EQ(recs[1].id, "normal_00001");
  EXPECT_EQ(recs[2].id, "deep_00000");
  EXPECT_EQ(recs[3].id, "lobar_00000");
  EXPECT_EQ(recs[4].id, "subtentorial_00000");
  EXPECT_EQ(recs[0].presence, kNormal);
  EXPECT_EQ(recs[0].location, -1);
  EXPECT_EQ(recs[2].presence, kIch);
  EXPECT_EQ(recs[2].location, 0);
  EXPECT_EQ(recs[3].location, 1);
  EXPECT_EQ(recs[4].location, 2);
  EXPECT_EQ(recs[0].patient, "normal_p0");
  EXPECT_EQ(recs[2].patient, "deep_p0");
  std::vector<Record> back = read_index(dir + "/index.txt");
  ASSERT_EQ(back.size(), recs.size());
  for (size_t i = 0; i < recs.size(); ++i) {
    EXPECT_EQ(back[i].id, recs[i].id);
    EXPECT_EQ(back[i].path, recs[i].path);
    EXPECT_EQ(back[i].presence, recs[i].presence);
    EXPECT_EQ(back[i].location, recs[i].location);
    EXPECT_EQ(back[i].patient, recs[i].patient);
    EXPECT_TRUE(fs::exists(fs::path(dir) / recs[i].path));
    EXPECT_TRUE(fs::exists(fs::path(dir) / "masks" / (recs[i].id + ".pgm")));
  }
}

TEST(Dataset, MaskMatchesBlobPixels) {
  std::string dir = ::testing::TempDir() + "/phantom_ds_mask";
  fs::remove_all(dir);
  generate_dataset({0, 1, 0, 0}, small_spec(), 21, dir);
  RawScan scan = read_dtr1(dir + "/deep_00000.dtr");
  Image8 mask = read_image8(dir + "/masks/deep_00000.pgm");
  ASSERT_EQ(mask.px.size(), scan.px.size());
  int64_t on = 0;
  for (size_t i = 0; i < mask.px.size(); ++i) {
    EXPECT_TRUE(mask.px[i] == 0 || mask.px[i] == 255);
    EXPECT_EQ(mask.px[i] == 255, scan.px[i] == 2100);
    on += mask.px[i] == 255;
  }
  EXPECT_GT(on, 0);
}

TEST(Dataset, RegenerationIsByteIdentical) {
  std::string a = ::testing::TempDir() + "/phantom_ds_b1";
  std::string b = ::testing::TempDir() + "/phantom_ds_b2";
  fs::remove_all(a);
  fs::remove_all(b);
  std::array<int64_t, 4> counts = {1, 1, 1, 1};
  generate_dataset(counts, small_spec(), 77, a);
  generate_dataset(counts, small_spec(), 77, b);
  for (const char* f : {"index.txt", "deep_00000.dtr", "subtentorial_00000.dtr",
                        "masks/lobar_00000.pgm"})
    EXPECT_EQ(slurp(a + "/" + f), slurp(b + "/" + f)) << f;
}

TEST(Dataset, SampleStreamIsIndexedAcrossClasses) {
  // the second emitted sample (class deep, j = 0) draws from child stream 1
  std::string dir = ::testing::TempDir() + "/phantom_ds_gi";
  fs::remove_all(dir);
  PhantomSpec sp = small_spec();
  generate_dataset({1, 1, 0, 0}, sp, 9, dir);
  Phantom ph = generate(1, sp, Rng(9).derive("phantom").derive(static_cast<uint64_t>(1)));
  RawScan got = read_dtr1(dir + "/deep_00000.dtr");
  EXPECT_EQ(got.px, ph.scan.px);
}

TEST(Dataset, PatientsGroupSixtyFourSlices) {
  std::string dir = ::testing::TempDir() + "/phantom_ds_pat";
  fs::remove_all(dir);
  std::vector<Record> recs = generate_dataset({70, 0, 0, 0}, small_spec(), 13, dir);
  ASSERT_EQ(recs.size(), 70u);
  EXPECT_EQ(recs[0].patient, "normal_p0");
  EXPECT_EQ(recs[63].patient, "normal_p0");
  EXPECT_EQ(recs[64].patient, "normal_p1");
  EXPECT_EQ(recs[69].patient, "normal_p1");
}

TEST(Dataset, Validation) {
  std::string dir = ::testing::TempDir() + "/phantom_ds_bad";
  std::string msg =
      what_of([&] { generate_dataset({0, 0, 0, 0}, small_spec(), 1, dir); });
  EXPECT_NE(msg.find("empty dataset"), std::string::npos);
  EXPECT_THROW(generate_dataset({-1, 1, 0, 0}, small_spec(), 1, dir), std::runtime_error);
}
