#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dtvit/common.hpp"
#include "dtvit/rng.hpp"
#include "dtvit/tensor.hpp"

namespace dtvit {

// Model geometry. "tiny" is the canonical test configuration; "large" is the
// 304M-parameter reference configuration used for structural checks only.
struct ModelConfig {
  int64_t channels = 3;
  int64_t image = 32;      // square input extent after preprocessing/augmentation
  int64_t patch = 8;       // p
  int64_t dim = 64;        // D
  int64_t heads = 4;
  int64_t mlp_dim = 128;
  int64_t layers = 2;      // L
  int64_t head_hidden = 64;  // H, dual-head MLP hidden width

  int64_t patches_per_side() const { return image / patch; }
  int64_t n_patches() const { return patches_per_side() * patches_per_side(); }
  int64_t patch_dim() const { return patch * patch * channels; }

  void validate() const {
    check(image > 0 && patch > 0, "config: extents must be positive");
    if (image % patch != 0)
      failf("config: image extent ", image, " not divisible by patch size ", patch);
    if (dim % heads != 0) failf("config: dim ", dim, " not divisible by heads ", heads);
    check(layers >= 0 && mlp_dim > 0 && head_hidden > 0 && channels > 0, "config: bad field");
  }

  static ModelConfig tiny() { return ModelConfig{}; }

  static ModelConfig large() {
    ModelConfig c;
    c.channels = 3;
    c.image = 224;
    c.patch = 16;
    c.dim = 1024;
    c.heads = 16;
    c.mlp_dim = 4096;
    c.layers = 24;
    c.head_hidden = 1024;
    return c;
  }
};

struct TensorSpec {
  std::string name;
  std::vector<int64_t> shape;
  int64_t numel() const { return shape_numel(shape); }
};

// Complete named-parameter layout. Linear weights are stored out x in.
// With dual_heads the two MLP decoders are included; reference_head adds a
// single K-class linear readout instead (the pretrained-backbone layout).
inline std::vector<TensorSpec> shape_manifest(const ModelConfig& cfg, bool dual_heads,
                                              int64_t reference_head = 0) {
  cfg.validate();
  std::vector<TensorSpec> m;
  int64_t D = cfg.dim, P = cfg.patch_dim(), N = cfg.n_patches();
  m.push_back({"embed.w", {D, P}});
  m.push_back({"embed.b", {D}});
  m.push_back({"embed.cls", {D}});
  m.push_back({"embed.pos", {N + 1, D}});
  for (int64_t i = 0; i < cfg.layers; ++i) {
    std::string b = "blocks." + std::to_string(i) + ".";
    m.push_back({b + "ln1.gamma", {D}});
    m.push_back({b + "ln1.beta", {D}});
    m.push_back({b + "attn.wq", {D, D}});
    m.push_back({b + "attn.bq", {D}});
    m.push_back({b + "attn.wk", {D, D}});
    m.push_back({b + "attn.bk", {D}});
    m.push_back({b + "attn.wv", {D, D}});
    m.push_back({b + "attn.bv", {D}});
    m.push_back({b + "attn.wo", {D, D}});
    m.push_back({b + "attn.bo", {D}});
    m.push_back({b + "ln2.gamma", {D}});
    m.push_back({b + "ln2.beta", {D}});
    m.push_back({b + "mlp.fc1.w", {cfg.mlp_dim, D}});
    m.push_back({b + "mlp.fc1.b", {cfg.mlp_dim}});
    m.push_back({b + "mlp.fc2.w", {D, cfg.mlp_dim}});
    m.push_back({b + "mlp.fc2.b", {D}});
  }
  m.push_back({"final_ln.gamma", {D}});
  m.push_back({"final_ln.beta", {D}});
  if (dual_heads) {
    int64_t H = cfg.head_hidden;
    m.push_back({"head1.fc1.w", {H, D}});
    m.push_back({"head1.fc1.b", {H}});
    m.push_back({"head1.fc2.w", {2, H}});
    m.push_back({"head1.fc2.b", {2}});
    m.push_back({"head2.fc1.w", {H, D}});
    m.push_back({"head2.fc1.b", {H}});
    m.push_back({"head2.fc2.w", {3, H}});
    m.push_back({"head2.fc2.b", {3}});
  }
  if (reference_head > 0) {
    m.push_back({"head.w", {reference_head, D}});
    m.push_back({"head.b", {reference_head}});
  }
  return m;
}

inline int64_t count_params(const ModelConfig& cfg, bool dual_heads, int64_t reference_head = 0) {
  int64_t total = 0;
  for (const TensorSpec& t : shape_manifest(cfg, dual_heads, reference_head)) total += t.numel();
  return total;
}

// Named parameter set in manifest order.
template <typename S>
struct Params {
  ModelConfig cfg;
  std::vector<std::string> names;
  std::vector<Tensor<S>> tensors;

  int find(const std::string& name) const {
    for (size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return static_cast<int>(i);
    return -1;
  }

  Tensor<S>& at(const std::string& name) {
    int i = find(name);
    if (i < 0) failf("params: unknown tensor '", name, "'");
    return tensors[i];
  }

  const Tensor<S>& at(const std::string& name) const {
    int i = find(name);
    if (i < 0) failf("params: unknown tensor '", name, "'");
    return tensors[i];
  }

  int64_t total_count() const {
    int64_t n = 0;
    for (const Tensor<S>& t : tensors) n += t.numel();
    return n;
  }
};

inline bool is_bias_name(const std::string& name) {
  auto ends_with = [&](const char* suf) {
    std::string s(suf);
    return name.size() >= s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0;
  };
  return ends_with(".b") || ends_with(".bq") || ends_with(".bk") || ends_with(".bv") ||
         ends_with(".bo") || ends_with(".beta");
}

inline bool is_gamma_name(const std::string& name) {
  std::string s = ".gamma";
  return name.size() >= s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0;
}

// Fresh single-tensor init: truncated normal (std 0.02, clipped at 2 sigma)
// for weights/embeddings, zeros for biases, ones/zeros for layernorm affine.
// Each tensor draws from an RNG stream derived from its name, so the values
// do not depend on enumeration order.
template <typename S>
Tensor<S> init_tensor(const TensorSpec& spec, const Rng& base) {
  Tensor<S> t = Tensor<S>::zeros(spec.shape);
  if (is_gamma_name(spec.name)) {
    for (S& v : t.data) v = S(1);
  } else if (!is_bias_name(spec.name)) {
    Rng r = base.derive(spec.name);
    for (S& v : t.data) v = static_cast<S>(r.trunc_normal(0.02));
  }
  return t;
}

template <typename S>
Params<S> init_params(const ModelConfig& cfg, uint64_t seed, bool dual_heads = true,
                      int64_t reference_head = 0) {
  Params<S> p;
  p.cfg = cfg;
  Rng base = Rng(seed).derive("init");
  for (const TensorSpec& spec : shape_manifest(cfg, dual_heads, reference_head)) {
    p.names.push_back(spec.name);
    p.tensors.push_back(init_tensor<S>(spec, base));
  }
  return p;
}

// Rows are row-major flattenings (channel, then y, then x) of each patch;
// patches ordered row-major over the patch grid.
template <typename S>
Tensor<S> patchify(const Tensor<S>& image, const ModelConfig& cfg) {
  check(image.ndim() == 3, "patchify: image must be c x h x w");
  int64_t c = image.shape[0], h = image.shape[1], w = image.shape[2];
  int64_t p = cfg.patch;
  if (h % p != 0 || w % p != 0)
    failf("patchify: extents ", h, "x", w, " not divisible by patch size ", p);
  int64_t gh = h / p, gw = w / p;
  int64_t N = gh * gw, P = p * p * c;
  Tensor<S> out = Tensor<S>::zeros({N, P});
  for (int64_t gy = 0; gy < gh; ++gy)
    for (int64_t gx = 0; gx < gw; ++gx) {
      int64_t row = gy * gw + gx;
      int64_t k = 0;
      for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t y = 0; y < p; ++y)
          for (int64_t x = 0; x < p; ++x)
            out.data[row * P + k++] = image.data[(ch * h + gy * p + y) * w + gx * p + x];
    }
  return out;
}

}  // namespace dtvit
