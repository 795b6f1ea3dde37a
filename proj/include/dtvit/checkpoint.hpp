#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dtvit/common.hpp"
#include "dtvit/tensor.hpp"
#include "dtvit/vit.hpp"

namespace dtvit {

// container: magic "DTV1", 8-byte little-endian manifest length, structured
// text manifest ([meta] key = value lines, then [tensors] with one
// "name dtype shape offset" line per tensor), then the raw payload of
// 32-bit little-endian floats; offsets are relative to the payload start

struct CheckpointTensor {
  std::string name;
  std::vector<int64_t> shape;
  uint64_t offset = 0;
  int64_t numel() const { return shape_numel(shape); }
};

struct CheckpointInfo {
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<CheckpointTensor> tensors;
  uint64_t payload_bytes = 0;

  const std::string* meta_value(const std::string& key) const {
    for (const auto& kv : meta)
      if (kv.first == key) return &kv.second;
    return nullptr;
  }
};

namespace detail {

inline void put_u64le(std::ostream& os, uint64_t v) {
  for (int i = 0; i < 8; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline uint64_t get_u64le(std::istream& is) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    int c = is.get();
    if (c == EOF) fail("checkpoint: truncated header");
    v |= static_cast<uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return v;
}

inline void put_f32le(std::ostream& os, float f) {
  uint32_t v = std::bit_cast<uint32_t>(f);
  for (int i = 0; i < 4; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::string shape_token(const std::vector<int64_t>& shape) {
  std::string s;
  for (size_t i = 0; i < shape.size(); ++i)
    s += (i ? "x" : "") + std::to_string(shape[i]);
  return s;
}

inline std::vector<int64_t> parse_shape_token(const std::string& s) {
  std::vector<int64_t> shape;
  std::istringstream is(s);
  std::string part;
  while (std::getline(is, part, 'x')) {
    try {
      shape.push_back(std::stoll(part));
    } catch (const std::exception&) {
      failf("checkpoint: bad shape token '", s, "'");
    }
  }
  check(!shape.empty(), "checkpoint: empty shape token");
  return shape;
}

}  // namespace detail

template <typename S>
void save_checkpoint(const std::string& path, const Params<S>& params,
                     const std::vector<std::pair<std::string, std::string>>& meta) {
  std::ostringstream man;
  man << "[meta]\n";
  for (const auto& kv : meta) man << kv.first << " = " << kv.second << "\n";
  man << "[tensors]\n";
  uint64_t offset = 0;
  for (size_t i = 0; i < params.names.size(); ++i) {
    const Tensor<S>& t = params.tensors[i];
    man << params.names[i] << " f32 " << detail::shape_token(t.shape) << " " << offset << "\n";
    offset += static_cast<uint64_t>(t.numel()) * 4;
  }
  std::string manifest = man.str();
  std::ofstream f(path, std::ios::binary);
  if (!f) failf("checkpoint: cannot open '", path, "' for writing");
  f.write("DTV1", 4);
  detail::put_u64le(f, manifest.size());
  f.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
  for (const Tensor<S>& t : params.tensors)
    for (S v : t.data) detail::put_f32le(f, static_cast<float>(v));
  if (!f) failf("checkpoint: write failed for '", path, "'");
}

inline CheckpointInfo read_checkpoint_info(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) failf("checkpoint: cannot open '", path, "'");
  char magic[4];
  if (!f.read(magic, 4) || std::string(magic, 4) != "DTV1")
    failf("checkpoint: '", path, "' is not a DTV1 file");
  uint64_t mlen = detail::get_u64le(f);
  f.seekg(0, std::ios::end);
  uint64_t fsize = static_cast<uint64_t>(f.tellg());
  if (mlen > fsize - 12) failf("checkpoint: manifest length ", mlen, " exceeds file size");
  f.seekg(12);
  std::string manifest(mlen, '\0');
  if (!f.read(manifest.data(), static_cast<std::streamsize>(mlen)))
    fail("checkpoint: truncated manifest");
  CheckpointInfo info;
  info.payload_bytes = fsize - 12 - mlen;
  std::istringstream ms(manifest);
  std::string line;
  int section = 0;  // 0 none, 1 meta, 2 tensors
  while (std::getline(ms, line)) {
    if (line.empty()) continue;
    if (line == "[meta]") { section = 1; continue; }
    if (line == "[tensors]") { section = 2; continue; }
    if (section == 1) {
      size_t eq = line.find('=');
      if (eq == std::string::npos) failf("checkpoint: bad meta line '", line, "'");
      auto trim = [](std::string s) {
        size_t a = s.find_first_not_of(" \t");
        size_t b = s.find_last_not_of(" \t");
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
      };
      info.meta.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } else if (section == 2) {
      std::istringstream ls(line);
      CheckpointTensor t;
      std::string dtype, shape;
      if (!(ls >> t.name >> dtype >> shape >> t.offset))
        failf("checkpoint: bad tensor line '", line, "'");
      if (dtype != "f32") failf("checkpoint: unsupported dtype '", dtype, "'");
      t.shape = detail::parse_shape_token(shape);
      info.tensors.push_back(std::move(t));
    } else {
      failf("checkpoint: line outside any section: '", line, "'");
    }
  }
  // offsets must be in-bounds and non-overlapping
  std::vector<std::pair<uint64_t, uint64_t>> spans;
  for (const CheckpointTensor& t : info.tensors) {
    uint64_t bytes = static_cast<uint64_t>(t.numel()) * 4;
    if (t.offset + bytes > info.payload_bytes)
      failf("checkpoint: tensor '", t.name, "' extends past the payload (offset ", t.offset,
            ", ", bytes, " bytes, payload ", info.payload_bytes, ")");
    spans.emplace_back(t.offset, t.offset + bytes);
  }
  std::sort(spans.begin(), spans.end());
  for (size_t i = 1; i < spans.size(); ++i)
    if (spans[i].first < spans[i - 1].second)
      fail("checkpoint: overlapping tensor payload spans");
  return info;
}

inline uint64_t read_manifest_size(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) failf("checkpoint: cannot open '", path, "'");
  char magic[4];
  if (!f.read(magic, 4) || std::string(magic, 4) != "DTV1")
    failf("checkpoint: '", path, "' is not a DTV1 file");
  return detail::get_u64le(f);
}

template <typename S>
Tensor<S> read_checkpoint_tensor(std::ifstream& f, uint64_t payload_start,
                                 const CheckpointTensor& t) {
  Tensor<S> out = Tensor<S>::zeros(t.shape);
  f.seekg(static_cast<std::streamoff>(payload_start + t.offset));
  std::vector<unsigned char> buf(static_cast<size_t>(t.numel()) * 4);
  if (!f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size())))
    failf("checkpoint: truncated payload reading tensor '", t.name, "'");
  for (int64_t i = 0; i < t.numel(); ++i) {
    uint32_t v = 0;
    for (int b = 0; b < 4; ++b)
      v |= static_cast<uint32_t>(buf[static_cast<size_t>(i) * 4 + static_cast<size_t>(b)])
           << (8 * b);
    out.data[static_cast<size_t>(i)] = static_cast<S>(std::bit_cast<float>(v));
  }
  return out;
}

// strict load: the file must cover the model's parameters exactly, by name
template <typename S>
CheckpointInfo load_checkpoint(const std::string& path, Params<S>& params) {
  CheckpointInfo info = read_checkpoint_info(path);
  std::ifstream f(path, std::ios::binary);
  if (!f) failf("checkpoint: cannot open '", path, "'");
  uint64_t payload_start = 12 + read_manifest_size(path);
  for (const CheckpointTensor& t : info.tensors)
    if (params.find(t.name) < 0) failf("checkpoint: unexpected tensor '", t.name, "'");
  for (size_t i = 0; i < params.names.size(); ++i) {
    const CheckpointTensor* ct = nullptr;
    for (const CheckpointTensor& t : info.tensors)
      if (t.name == params.names[i]) ct = &t;
    if (!ct) failf("checkpoint: missing parameter '", params.names[i], "'");
    if (ct->shape != params.tensors[i].shape)
      failf("checkpoint: parameter '", params.names[i], "': shape ",
            detail::shape_token(ct->shape), " in file vs ",
            detail::shape_token(params.tensors[i].shape), " in model");
    params.tensors[i] = read_checkpoint_tensor<S>(f, payload_start, *ct);
  }
  return info;
}

struct PretrainReport {
  std::vector<std::string> loaded, initialized, ignored;
};

inline bool is_head_param(const std::string& name) {
  return name.rfind("head", 0) == 0;  // head.*, head1.*, head2.*
}

// transfer-learning load: encoder tensors come from the file by name, head
// tensors keep their fresh initialization, file-only tensors are ignored
template <typename S>
PretrainReport load_pretrained(const std::string& path, Params<S>& params) {
  CheckpointInfo info = read_checkpoint_info(path);
  std::ifstream f(path, std::ios::binary);
  if (!f) failf("checkpoint: cannot open '", path, "'");
  uint64_t payload_start = 12 + read_manifest_size(path);
  PretrainReport rep;
  for (size_t i = 0; i < params.names.size(); ++i) {
    const std::string& name = params.names[i];
    const CheckpointTensor* ct = nullptr;
    for (const CheckpointTensor& t : info.tensors)
      if (t.name == name) ct = &t;
    if (is_head_param(name)) {
      rep.initialized.push_back(name);
      continue;
    }
    if (!ct) failf("checkpoint: missing parameter '", name, "'");
    if (ct->shape != params.tensors[i].shape)
      failf("checkpoint: parameter '", name, "': shape ", detail::shape_token(ct->shape),
            " in file vs ", detail::shape_token(params.tensors[i].shape), " in model");
    params.tensors[i] = read_checkpoint_tensor<S>(f, payload_start, *ct);
    rep.loaded.push_back(name);
  }
  if (rep.loaded.empty()) fail("checkpoint: no encoder parameters found");
  for (const CheckpointTensor& t : info.tensors)
    if (params.find(t.name) < 0) rep.ignored.push_back(t.name);
  return rep;
}

// reconstructs the model geometry a trainer stored in the meta section
inline ModelConfig model_config_from_meta(const CheckpointInfo& info) {
  auto want = [&](const char* key) {
    const std::string* v = info.meta_value(key);
    if (!v) failf("checkpoint: meta key '", key, "' missing");
    try {
      return static_cast<int64_t>(std::stoll(*v));
    } catch (const std::exception&) {
      failf("checkpoint: meta key '", key, "': bad value '", *v, "'");
    }
  };
  ModelConfig cfg;
  cfg.channels = want("model.channels");
  cfg.image = want("model.image");
  cfg.patch = want("model.patch");
  cfg.dim = want("model.dim");
  cfg.heads = want("model.heads");
  cfg.mlp_dim = want("model.mlp_dim");
  cfg.layers = want("model.layers");
  cfg.head_hidden = want("model.head_hidden");
  cfg.validate();
  return cfg;
}

}  // namespace dtvit
