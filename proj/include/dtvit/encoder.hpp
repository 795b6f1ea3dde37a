#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "dtvit/graph.hpp"
#include "dtvit/vit.hpp"

namespace dtvit {

// Parameter tensors bound into a graph as leaf nodes.
template <typename S>
struct ParamNodes {
  std::vector<std::string> names;
  std::vector<int> ids;

  int at(const std::string& name) const {
    for (size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return ids[i];
    failf("param nodes: unknown tensor '", name, "'");
  }
};

template <typename S>
ParamNodes<S> bind_params(Graph<S>& g, const Params<S>& p, bool requires_grad = true) {
  ParamNodes<S> pn;
  pn.names = p.names;
  for (const Tensor<S>& t : p.tensors) pn.ids.push_back(g.input(t, requires_grad));
  return pn;
}

// y = x W^T + b for row-major activations and out x in weights
template <typename S>
int linear(Graph<S>& g, int x, int w, int b) {
  return g.add_bias(g.matmul(x, g.transpose(w)), b);
}

// input assembly: row 0 = z_class + pos[0], row i = W x_i + b + pos[i]
template <typename S>
int embed_and_assemble(Graph<S>& g, const ParamNodes<S>& pn, int patches) {
  int64_t D = g.value(pn.at("embed.w")).shape[0];
  int z = linear(g, patches, pn.at("embed.w"), pn.at("embed.b"));
  int cls = g.reshape(pn.at("embed.cls"), {1, D});
  int tokens = g.concat(cls, z, 0);
  return g.add(tokens, pn.at("embed.pos"));
}

constexpr double kLnEps = 1e-5;

template <typename S>
int mha(Graph<S>& g, const ParamNodes<S>& pn, int x, const std::string& prefix, int64_t heads) {
  int64_t D = g.value(x).shape[1];
  if (D % heads != 0) failf("mha: dim ", D, " not divisible by heads ", heads);
  int64_t dh = D / heads;
  int q = linear(g, x, pn.at(prefix + "wq"), pn.at(prefix + "bq"));
  int k = linear(g, x, pn.at(prefix + "wk"), pn.at(prefix + "bk"));
  int v = linear(g, x, pn.at(prefix + "wv"), pn.at(prefix + "bv"));
  S inv_sqrt_d = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));
  int merged = -1;
  for (int64_t h = 0; h < heads; ++h) {
    int qh = g.slice(q, 1, h * dh, (h + 1) * dh);
    int kh = g.slice(k, 1, h * dh, (h + 1) * dh);
    int vh = g.slice(v, 1, h * dh, (h + 1) * dh);
    int scores = g.scale(g.matmul(qh, g.transpose(kh)), inv_sqrt_d);
    int attn = g.softmax(scores, 1);
    int oh = g.matmul(attn, vh);
    merged = h == 0 ? oh : g.concat(merged, oh, 1);
  }
  return linear(g, merged, pn.at(prefix + "wo"), pn.at(prefix + "bo"));
}

// pre-norm block: u = x + MHA(LN1(x)); y = u + MLP(LN2(u))
template <typename S>
int encoder_block(Graph<S>& g, const ParamNodes<S>& pn, int x, int64_t block, int64_t heads) {
  std::string b = "blocks." + std::to_string(block) + ".";
  int n1 = g.layernorm(x, pn.at(b + "ln1.gamma"), pn.at(b + "ln1.beta"), static_cast<S>(kLnEps));
  int u = g.add(x, mha(g, pn, n1, b + "attn.", heads));
  int n2 = g.layernorm(u, pn.at(b + "ln2.gamma"), pn.at(b + "ln2.beta"), static_cast<S>(kLnEps));
  int h = g.gelu(linear(g, n2, pn.at(b + "mlp.fc1.w"), pn.at(b + "mlp.fc1.b")));
  int mlp_out = linear(g, h, pn.at(b + "mlp.fc2.w"), pn.at(b + "mlp.fc2.b"));
  return g.add(u, mlp_out);
}

// patches -> token sequence -> L blocks -> final layernorm
template <typename S>
int encoder_forward(Graph<S>& g, const ParamNodes<S>& pn, int patches, const ModelConfig& cfg) {
  int x = embed_and_assemble(g, pn, patches);
  for (int64_t i = 0; i < cfg.layers; ++i) x = encoder_block(g, pn, x, i, cfg.heads);
  return g.layernorm(x, pn.at("final_ln.gamma"), pn.at("final_ln.beta"), static_cast<S>(kLnEps));
}

// convenience: full encoder on a raw image tensor
template <typename S>
int encoder_forward_image(Graph<S>& g, const ParamNodes<S>& pn, const Tensor<S>& image,
                          const ModelConfig& cfg) {
  int patches = g.input(patchify(image, cfg), false);
  return encoder_forward(g, pn, patches, cfg);
}

}  // namespace dtvit
