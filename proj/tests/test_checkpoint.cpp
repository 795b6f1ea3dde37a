#include <gtest/gtest.h>

#include <bit>
#include <cstdint>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "dtvit/checkpoint.hpp"

using namespace dtvit;

namespace {

std::string tmp(const std::string& name) { return ::testing::TempDir() + "/" + name; }

std::string what_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::runtime_error& e) {
    return e.what();
  }
  return "";
}

void put_u64(std::ofstream& f, uint64_t v) {
  for (int i = 0; i < 8; ++i) f.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::ofstream& f, float x) {
  uint32_t v = std::bit_cast<uint32_t>(x);
  for (int i = 0; i < 4; ++i) f.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

// hand-rolled DTV1 writer for malformed-file tests
void write_raw(const std::string& path, const std::string& manifest, size_t payload_floats) {
  std::ofstream f(path, std::ios::binary);
  f.write("DTV1", 4);
  put_u64(f, manifest.size());
  f.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
  for (size_t i = 0; i < payload_floats; ++i) put_f32(f, static_cast<float>(i) * 0.5f);
}

std::vector<std::pair<std::string, std::string>> tiny_meta(const ModelConfig& cfg) {
  auto s = [](int64_t v) { return std::to_string(v); };
  return {{"model.channels", s(cfg.channels)}, {"model.image", s(cfg.image)},
          {"model.patch", s(cfg.patch)},       {"model.dim", s(cfg.dim)},
          {"model.heads", s(cfg.heads)},       {"model.mlp_dim", s(cfg.mlp_dim)},
          {"model.layers", s(cfg.layers)},     {"model.head_hidden", s(cfg.head_hidden)}};
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitwise) {
  ModelConfig cfg = ModelConfig::tiny();
  Params<float> saved = init_params<float>(cfg, 3);
  std::string path = tmp("ckpt_rt.dtv");
  save_checkpoint(path, saved, tiny_meta(cfg));
  Params<float> loaded = init_params<float>(cfg, 99);
  CheckpointInfo info = load_checkpoint(path, loaded);
  ASSERT_EQ(loaded.tensors.size(), saved.tensors.size());
  for (size_t i = 0; i < saved.tensors.size(); ++i)
    EXPECT_EQ(loaded.tensors[i].data, saved.tensors[i].data) << saved.names[i];
  EXPECT_EQ(info.tensors.size(), saved.names.size());
  EXPECT_EQ(info.payload_bytes, static_cast<uint64_t>(saved.total_count()) * 4);
  ASSERT_NE(info.meta_value("model.dim"), nullptr);
  EXPECT_EQ(*info.meta_value("model.dim"), "64");
  EXPECT_EQ(info.meta_value("model.missing"), nullptr);
}

TEST(Checkpoint, MissingParameterNamed) {
  ModelConfig cfg = ModelConfig::tiny();
  Params<float> p = init_params<float>(cfg, 1);
  int idx = p.find("embed.cls");
  ASSERT_GE(idx, 0);
  Params<float> partial = p;
  partial.names.erase(partial.names.begin() + idx);
  partial.tensors.erase(partial.tensors.begin() + idx);
  std::string path = tmp("ckpt_missing.dtv");
  save_checkpoint(path, partial, {});
  Params<float> dst = init_params<float>(cfg, 2);
  std::string msg = what_of([&] { load_checkpoint(path, dst); });
  EXPECT_NE(msg.find("missing parameter 'embed.cls'"), std::string::npos) << msg;
}

TEST(Checkpoint, UnexpectedTensorNamed) {
  ModelConfig cfg = ModelConfig::tiny();
  Params<float> p = init_params<float>(cfg, 1);
  Params<float> extra = p;
  extra.names.push_back("extra.w");
  extra.tensors.push_back(Tensor<float>::zeros({2, 2}));
  std::string path = tmp("ckpt_extra.dtv");
  save_checkpoint(path, extra, {});
  Params<float> dst = init_params<float>(cfg, 2);
  std::string msg = what_of([&] { load_checkpoint(path, dst); });
  EXPECT_NE(msg.find("unexpected tensor 'extra.w'"), std::string::npos) << msg;
}

TEST(Checkpoint, ShapeMismatchNamesBothShapes) {
  ModelConfig a = ModelConfig::tiny();  // patch 8 -> embed.w is 64x192
  ModelConfig b = ModelConfig::tiny();
  b.patch = 16;  // -> 64x768
  Params<float> pa = init_params<float>(a, 1);
  std::string path = tmp("ckpt_shape.dtv");
  save_checkpoint(path, pa, {});
  Params<float> pb = init_params<float>(b, 1);
  std::string msg = what_of([&] { load_checkpoint(path, pb); });
  EXPECT_NE(msg.find("64x192"), std::string::npos) << msg;
  EXPECT_NE(msg.find("64x768"), std::string::npos) << msg;
}

TEST(Checkpoint, TruncatedPayloadRejected) {
  ModelConfig cfg = ModelConfig::tiny();
  Params<float> p = init_params<float>(cfg, 1);
  std::string path = tmp("ckpt_trunc.dtv");
  save_checkpoint(path, p, {});
  std::ifstream in(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  bytes.resize(bytes.size() - 8);
  std::ofstream out(path, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.close();
  std::string msg = what_of([&] { read_checkpoint_info(path); });
  EXPECT_NE(msg.find("extends past the payload"), std::string::npos) << msg;
}

TEST(Checkpoint, BadMagicAndTruncatedHeader) {
  std::string path = tmp("ckpt_magic.dtv");
  {
    std::ofstream f(path, std::ios::binary);
    f.write("NOPE1234", 8);
  }
  std::string msg = what_of([&] { read_checkpoint_info(path); });
  EXPECT_NE(msg.find("not a DTV1 file"), std::string::npos) << msg;
  {
    std::ofstream f(path, std::ios::binary);
    f.write("DTV1\x01\x02", 6);
  }
  msg = what_of([&] { read_checkpoint_info(path); });
  EXPECT_NE(msg.find("truncated header"), std::string::npos) << msg;
  EXPECT_THROW(read_checkpoint_info(tmp("ckpt_nofile.dtv")), std::runtime_error);
}

TEST(Checkpoint, ManifestLengthPastEndRejected) {
  std::string path = tmp("ckpt_mlen.dtv");
  {
    std::ofstream f(path, std::ios::binary);
    f.write("DTV1", 4);
    put_u64(f, 1u << 20);
    f.write("x", 1);
  }
  std::string msg = what_of([&] { read_checkpoint_info(path); });
  EXPECT_NE(msg.find("manifest length"), std::string::npos) << msg;
}

TEST(Checkpoint, OverlappingSpansRejected) {
  std::string path = tmp("ckpt_overlap.dtv");
  write_raw(path, "[meta]\n[tensors]\na f32 2 0\nb f32 2 4\n", 4);
  std::string msg = what_of([&] { read_checkpoint_info(path); });
  EXPECT_NE(msg.find("overlapping"), std::string::npos) << msg;
  // adjacent spans are fine
  write_raw(path, "[meta]\n[tensors]\na f32 2 0\nb f32 2 8\n", 4);
  CheckpointInfo info = read_checkpoint_info(path);
  EXPECT_EQ(info.tensors.size(), 2u);
}

TEST(Checkpoint, ManifestParseErrors) {
  std::string path = tmp("ckpt_manifest.dtv");
  write_raw(path, "stray = line\n[meta]\n", 0);
  EXPECT_NE(what_of([&] { read_checkpoint_info(path); }).find("outside any section"),
            std::string::npos);
  write_raw(path, "[meta]\nnot a pair\n", 0);
  EXPECT_NE(what_of([&] { read_checkpoint_info(path); }).find("bad meta line"),
            std::string::npos);
  write_raw(path, "[tensors]\na f64 2 0\n", 2);
  EXPECT_NE(what_of([&] { read_checkpoint_info(path); }).find("unsupported dtype"),
            std::string::npos);
  write_raw(path, "[tensors]\na f32 2xq 0\n", 2);
  EXPECT_NE(what_of([&] { read_checkpoint_info(path); }).find("bad shape token"),
            std::string::npos);
  write_raw(path, "[tensors]\na f32\n", 2);
  EXPECT_NE(what_of([&] { read_checkpoint_info(path); }).find("bad tensor line"),
            std::string::npos);
}

TEST(Pretrained, EncoderLoadsHeadsStayFresh) {
  ModelConfig cfg = ModelConfig::tiny();
  Params<float> backbone = init_params<float>(cfg, 11, /*dual_heads=*/false,
                                              /*reference_head=*/5);
  std::string path = tmp("ckpt_pretrain.dtv");
  save_checkpoint(path, backbone, tiny_meta(cfg));
  Params<float> model = init_params<float>(cfg, 22);
  Params<float> fresh = model;
  PretrainReport rep = load_pretrained(path, model);
  size_t encoder_count = shape_manifest(cfg, false, 0).size();
  EXPECT_EQ(rep.loaded.size(), encoder_count);
  EXPECT_EQ(rep.initialized.size(), 8u);
  ASSERT_EQ(rep.ignored.size(), 2u);
  EXPECT_EQ(rep.ignored[0], "head.w");
  EXPECT_EQ(rep.ignored[1], "head.b");
  for (size_t i = 0; i < model.names.size(); ++i) {
    const std::string& n = model.names[i];
    if (n.rfind("head1.", 0) == 0 || n.rfind("head2.", 0) == 0)
      EXPECT_EQ(model.tensors[i].data, fresh.tensors[i].data) << n;
    else
      EXPECT_EQ(model.tensors[i].data, backbone.at(n).data) << n;
  }
}

TEST(Pretrained, DimensionMismatchNamesShapes) {
  ModelConfig big = ModelConfig::tiny();
  Params<float> backbone = init_params<float>(big, 1, false, 5);
  std::string path = tmp("ckpt_pretrain_dim.dtv");
  save_checkpoint(path, backbone, {});
  ModelConfig small = ModelConfig::tiny();
  small.dim = 32;
  small.head_hidden = 32;
  Params<float> model = init_params<float>(small, 2);
  std::string msg = what_of([&] { load_pretrained(path, model); });
  EXPECT_NE(msg.find("shape"), std::string::npos) << msg;
  EXPECT_NE(msg.find("32x"), std::string::npos) << msg;
}

TEST(Pretrained, HeadOnlyModelHasNoEncoderToLoad) {
  ModelConfig cfg = ModelConfig::tiny();
  Params<float> full = init_params<float>(cfg, 7);
  Params<float> heads;
  heads.cfg = cfg;
  for (size_t i = 0; i < full.names.size(); ++i)
    if (is_head_param(full.names[i])) {
      heads.names.push_back(full.names[i]);
      heads.tensors.push_back(full.tensors[i]);
    }
  ASSERT_EQ(heads.names.size(), 8u);
  std::string path = tmp("ckpt_pretrain_empty.dtv");
  save_checkpoint(path, full, {});
  std::string msg = what_of([&] { load_pretrained(path, heads); });
  EXPECT_NE(msg.find("no encoder parameters found"), std::string::npos) << msg;
}

TEST(Checkpoint, ModelConfigFromMetaRoundTrip) {
  ModelConfig cfg = ModelConfig::tiny();
  cfg.layers = 3;
  Params<float> p = init_params<float>(cfg, 1);
  std::string path = tmp("ckpt_meta.dtv");
  save_checkpoint(path, p, tiny_meta(cfg));
  CheckpointInfo info = read_checkpoint_info(path);
  ModelConfig got = model_config_from_meta(info);
  EXPECT_EQ(got.channels, cfg.channels);
  EXPECT_EQ(got.image, cfg.image);
  EXPECT_EQ(got.patch, cfg.patch);
  EXPECT_EQ(got.dim, cfg.dim);
  EXPECT_EQ(got.heads, cfg.heads);
  EXPECT_EQ(got.mlp_dim, cfg.mlp_dim);
  EXPECT_EQ(got.layers, cfg.layers);
  EXPECT_EQ(got.head_hidden, cfg.head_hidden);
}

TEST(Checkpoint, ModelConfigFromMetaErrors) {
  CheckpointInfo info;
  info.meta = {{"model.channels", "3"}, {"model.image", "32"}, {"model.patch", "8"},
               {"model.dim", "64"},     {"model.heads", "4"},  {"model.mlp_dim", "128"},
               {"model.head_hidden", "64"}};  // model.layers missing
  std::string msg = what_of([&] { model_config_from_meta(info); });
  EXPECT_NE(msg.find("'model.layers' missing"), std::string::npos) << msg;
  info.meta.emplace_back("model.layers", "two");
  msg = what_of([&] { model_config_from_meta(info); });
  EXPECT_NE(msg.find("bad value"), std::string::npos) << msg;
}

TEST(Checkpoint, DoublePrecisionParamsSaveAsF32) {
  ModelConfig cfg = ModelConfig::tiny();
  cfg.layers = 0;
  Params<double> p = init_params<double>(cfg, 5);
  std::string path = tmp("ckpt_double.dtv");
  save_checkpoint(path, p, {});
  Params<double> q = init_params<double>(cfg, 6);
  load_checkpoint(path, q);
  for (size_t i = 0; i < p.tensors.size(); ++i)
    for (size_t j = 0; j < p.tensors[i].data.size(); ++j)
      EXPECT_EQ(q.tensors[i].data[j],
                static_cast<double>(static_cast<float>(p.tensors[i].data[j])))
          << p.names[i];
}
