#pragma once

#include <optional>
#include <vector>

#include "dtvit/encoder.hpp"
#include "dtvit/graph.hpp"

namespace dtvit {

// class index conventions (fixed for checkpoint portability):
// presence: 0 = Normal, 1 = ICH; location: 0 = Deep, 1 = Lobar, 2 = Subtentorial
enum Presence { kNormal = 0, kIch = 1 };
enum Location { kDeep = 0, kLobar = 1, kSubtentorial = 2 };

inline const char* presence_name(int p) { return p == kNormal ? "Normal" : "ICH"; }

inline const char* location_name(int l) {
  switch (l) {
    case kDeep: return "Deep";
    case kLobar: return "Lobar";
    case kSubtentorial: return "Subtentorial";
    default: return "?";
  }
}

// two-layer MLP head (Linear, GELU, Linear) on a B x D feature matrix
template <typename S>
int head_mlp(Graph<S>& g, const ParamNodes<S>& pn, int features, const std::string& prefix) {
  int h = g.gelu(linear(g, features, pn.at(prefix + "fc1.w"), pn.at(prefix + "fc1.b")));
  return linear(g, h, pn.at(prefix + "fc2.w"), pn.at(prefix + "fc2.b"));
}

// both heads read the class-token feature (row 0 of the encoder output)
template <typename S>
std::pair<int, int> dual_forward(Graph<S>& g, const ParamNodes<S>& pn, int features) {
  int cls = g.slice(features, 0, 0, 1);
  return {head_mlp(g, pn, cls, "head1."), head_mlp(g, pn, cls, "head2.")};
}

// batched variant: cls_rows is B x D (one class-token feature per sample)
template <typename S>
std::pair<int, int> dual_forward_batch(Graph<S>& g, const ParamNodes<S>& pn, int cls_rows) {
  return {head_mlp(g, pn, cls_rows, "head1."), head_mlp(g, pn, cls_rows, "head2.")};
}

template <typename S>
struct DualLoss {
  int loss1 = -1;     // presence CE node
  int loss2 = -1;     // location CE node, or -1 when the batch has no ICH sample
  int combined = -1;  // 0.5*loss1 + 0.5*loss2
};

// loss_1: CE over all samples; loss_2: CE over ICH samples only (masked mean);
// combined = 0.5*loss_1 + 0.5*loss_2, and exactly 0.5*loss_1 when no sample
// carries a location label.
template <typename S>
DualLoss<S> combined_loss(Graph<S>& g, int logits1, const std::vector<int>& presence,
                          int logits2, const std::vector<int>& location) {
  int64_t B = g.value(logits1).shape[0];
  check(static_cast<int64_t>(presence.size()) == B && presence.size() == location.size(),
        "combined_loss: label lists must match the batch size");
  std::vector<int64_t> ich_rows;
  std::vector<int> ich_targets;
  for (int64_t i = 0; i < B; ++i) {
    if (presence[i] == kNormal && location[i] >= 0)
      failf("combined_loss: sample ", i, " is Normal but carries a location label");
    if (presence[i] == kIch && location[i] < 0)
      failf("combined_loss: sample ", i, " is ICH but has no location label");
    if (location[i] >= 0) {
      ich_rows.push_back(i);
      ich_targets.push_back(location[i]);
    }
  }
  DualLoss<S> out;
  out.loss1 = g.cross_entropy(logits1, presence);
  if (ich_rows.empty()) {
    out.loss2 = -1;
    out.combined = g.scale(out.loss1, S(0.5));
  } else {
    out.loss2 = g.cross_entropy(g.take_rows(logits2, ich_rows), ich_targets);
    out.combined = g.add(g.scale(out.loss1, S(0.5)), g.scale(out.loss2, S(0.5)));
  }
  return out;
}

struct Prediction {
  int presence = kNormal;
  int location = -1;  // reported only when presence == ICH
};

// ties broken toward the lower class index
template <typename S>
int argmax(const Tensor<S>& logits) {
  int best = 0;
  for (int64_t i = 1; i < logits.numel(); ++i)
    if (logits.data[i] > logits.data[best]) best = static_cast<int>(i);
  return best;
}

template <typename S>
Prediction predict_from_logits(const Tensor<S>& logits1, const Tensor<S>& logits2) {
  Prediction p;
  p.presence = argmax(logits1);
  if (p.presence == kIch) p.location = argmax(logits2);
  return p;
}

}  // namespace dtvit
