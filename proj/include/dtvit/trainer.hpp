#pragma once

#include <cmath>
#include <filesystem>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dtvit/adamw.hpp"
#include "dtvit/common.hpp"
#include "dtvit/datapipe.hpp"
#include "dtvit/dual_head.hpp"
#include "dtvit/encoder.hpp"
#include "dtvit/metrics.hpp"
#include "dtvit/raster.hpp"
#include "dtvit/rng.hpp"
#include "dtvit/vit.hpp"

namespace dtvit {

struct TrainConfig {
  int64_t epochs = 10;
  int64_t batch_train = 0;  // 0 = 32 with augmentation, 8 without
  int64_t batch_val = 32;
  int64_t batch_test = 4;
  double lr = 2e-5;
  double weight_decay = 0.01;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  bool balance = true;
  bool augment = true;
  bool cosine = false;  // constant lr unless enabled
  uint64_t seed = 0;

  int64_t effective_batch_train() const {
    return batch_train > 0 ? batch_train : (augment ? 32 : 8);
  }

  void validate() const {
    check(epochs > 0, "train: epochs must be positive");
    check(batch_train >= 0 && batch_val > 0 && batch_test > 0,
          "train: batch sizes must be positive");
    check(lr >= 0 && weight_decay >= 0, "train: lr and weight decay must be nonnegative");
    check(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1, "train: betas must be in [0,1)");
    check(eps > 0, "train: eps must be positive");
  }
};

struct Sample {
  ImageF image;  // preprocessed 8-bit values
  int presence = kNormal;
  int location = -1;
};

// reads every record's 8-bit image, resolving paths against base_dir
inline std::vector<Sample> load_samples(const std::vector<Record>& recs,
                                        const std::string& base_dir) {
  namespace fs = std::filesystem;
  std::vector<Sample> out;
  out.reserve(recs.size());
  for (const Record& r : recs) {
    Image8 img = read_image8((fs::path(base_dir) / r.path).string());
    out.push_back({to_float(img), r.presence, r.location});
  }
  return out;
}

template <typename S>
struct BatchNodes {
  int logits1 = -1, logits2 = -1;
};

// one graph per batch: every sample runs the encoder, the class-token rows
// are stacked to B x D, and both heads read the stack
template <typename S>
BatchNodes<S> build_batch(Graph<S>& g, const ParamNodes<S>& pn, const ModelConfig& cfg,
                          const std::vector<Tensor<S>>& inputs) {
  check(!inputs.empty(), "build_batch: empty batch");
  int rows = -1;
  for (const Tensor<S>& im : inputs) {
    int enc = encoder_forward_image(g, pn, im, cfg);
    int cls = g.slice(enc, 0, 0, 1);
    rows = rows < 0 ? cls : g.concat(rows, cls, 0);
  }
  auto [l1, l2] = dual_forward_batch(g, pn, rows);
  return {l1, l2};
}

struct EvalResult {
  double loss1 = 0, loss2 = 0, combined = 0;
  int64_t n = 0, n_ich = 0;
  Confusion cm_presence;  // 2x2, Normal/ICH
  Confusion cm_ich;       // 3x3 over true-ICH samples, raw location logits
  Confusion cm_all;       // 4x4 gated: Deep/Lobar/Subtentorial/None
  double acc1 = 0, acc2 = 0, acc_all = 0;
  bool has_ich = false;

  EvalResult() : cm_presence(2), cm_ich(3), cm_all(4) {}
};

// deterministic eval chain (center crop + normalize, no randomness); losses
// are sample-weighted means over the whole set, combined = 0.5 l1 + 0.5 l2
template <typename S>
EvalResult evaluate(const Params<S>& params, const std::vector<Sample>& samples,
                    const AugmentConfig& aug, int64_t batch) {
  check(!samples.empty(), "evaluate: empty sample set");
  check(batch > 0, "evaluate: batch must be positive");
  const ModelConfig& cfg = params.cfg;
  EvalResult res;
  double l1_sum = 0, l2_sum = 0;
  for (size_t start = 0; start < samples.size(); start += static_cast<size_t>(batch)) {
    size_t stop = std::min(samples.size(), start + static_cast<size_t>(batch));
    Graph<S> g;
    ParamNodes<S> pn = bind_params(g, params, false);
    std::vector<Tensor<S>> inputs;
    std::vector<int> presence, location;
    for (size_t i = start; i < stop; ++i) {
      ImageF im = center_crop(samples[i].image, aug.crop_size);
      inputs.push_back(to_model_input<S>(im, aug));
      presence.push_back(samples[i].presence);
      location.push_back(samples[i].location);
    }
    BatchNodes<S> bn = build_batch(g, pn, cfg, inputs);
    DualLoss<S> loss = combined_loss(g, bn.logits1, presence, bn.logits2, location);
    int64_t nb = static_cast<int64_t>(stop - start);
    int64_t nich = 0;
    for (int l : location)
      if (l >= 0) ++nich;
    l1_sum += static_cast<double>(g.value(loss.loss1).data[0]) * static_cast<double>(nb);
    if (loss.loss2 >= 0)
      l2_sum += static_cast<double>(g.value(loss.loss2).data[0]) * static_cast<double>(nich);
    res.n += nb;
    res.n_ich += nich;
    const Tensor<S>& lg1 = g.value(bn.logits1);
    const Tensor<S>& lg2 = g.value(bn.logits2);
    for (int64_t r = 0; r < nb; ++r) {
      int truep = presence[static_cast<size_t>(r)];
      int truel = location[static_cast<size_t>(r)];
      int p1 = 0, p2 = 0;
      for (int64_t j = 1; j < lg1.shape[1]; ++j)
        if (lg1.at(r, j) > lg1.at(r, p1)) p1 = static_cast<int>(j);
      for (int64_t j = 1; j < lg2.shape[1]; ++j)
        if (lg2.at(r, j) > lg2.at(r, p2)) p2 = static_cast<int>(j);
      res.cm_presence.add(truep, p1);
      if (truel >= 0) res.cm_ich.add(truel, p2);
      int true_all = truel >= 0 ? truel : 3;
      int pred_all = p1 == kIch ? p2 : 3;
      res.cm_all.add(true_all, pred_all);
    }
  }
  res.loss1 = l1_sum / static_cast<double>(res.n);
  res.has_ich = res.n_ich > 0;
  res.loss2 = res.has_ich ? l2_sum / static_cast<double>(res.n_ich) : 0.0;
  res.combined = res.has_ich ? 0.5 * res.loss1 + 0.5 * res.loss2 : 0.5 * res.loss1;
  res.acc1 = static_cast<double>(res.cm_presence.correct()) / static_cast<double>(res.n);
  res.acc2 = res.has_ich ? static_cast<double>(res.cm_ich.correct()) /
                               static_cast<double>(res.n_ich)
                         : 0.0;
  res.acc_all = static_cast<double>(res.cm_all.correct()) / static_cast<double>(res.n);
  return res;
}

struct EpochStats {
  double train_loss = 0;
  double train_acc1 = 0, train_acc2 = 0;
  bool has_train_ich = false;
  bool has_val = false;
  double val_loss = 0, val_acc1 = 0, val_acc2 = 0;
  bool val_has_ich = false;
};

template <typename S>
struct TrainResult {
  Params<S> best;          // by validation combined loss; final weights if no val
  int64_t best_epoch = 0;  // 1-based; 0 when selection fell through to final
  std::vector<EpochStats> epochs;
  std::string history;     // one row per epoch
};

inline std::string history_header() {
  return "# epoch train_loss val_loss train_acc1 train_acc2 val_acc1 val_acc2";
}

inline std::string history_row(int64_t epoch, const EpochStats& st) {
  std::ostringstream os;
  os << epoch << " " << fmt12(st.train_loss) << " "
     << (st.has_val ? fmt12(st.val_loss) : "-") << " " << fmt12(st.train_acc1) << " "
     << (st.has_train_ich ? fmt12(st.train_acc2) : "-") << " "
     << (st.has_val ? fmt12(st.val_acc1) : "-") << " "
     << (st.has_val && st.val_has_ich ? fmt12(st.val_acc2) : "-");
  return os.str();
}

// The paper recipe: shuffle each epoch (seeded stream), balance/augment the
// train split only, AdamW on the combined loss. Train-accuracy columns are
// running estimates accumulated across the epoch's batches.
template <typename S>
TrainResult<S> train(Params<S> params, const std::vector<Sample>& train_samples,
                     const std::vector<Sample>& val_samples, const TrainConfig& tc,
                     const AugmentConfig& aug) {
  tc.validate();
  check(!train_samples.empty(), "train: empty split");
  const ModelConfig& cfg = params.cfg;
  check(aug.crop_size == cfg.image,
        "train: crop size does not match the model input extent");

  std::vector<size_t> order;
  if (tc.balance) {
    std::vector<int> presence, location;
    for (const Sample& s : train_samples) {
      presence.push_back(s.presence);
      location.push_back(s.location);
    }
    order = balance_order(presence, location);
  } else {
    for (size_t i = 0; i < train_samples.size(); ++i) order.push_back(i);
  }

  AdamWConfig ac;
  ac.lr = tc.lr;
  ac.beta1 = tc.beta1;
  ac.beta2 = tc.beta2;
  ac.eps = tc.eps;
  ac.weight_decay = tc.weight_decay;
  AdamW<S> opt(ac);

  int64_t B = tc.effective_batch_train();
  int64_t steps_per_epoch =
      (static_cast<int64_t>(order.size()) + B - 1) / B;
  int64_t total_steps = steps_per_epoch * tc.epochs;

  Rng shuffle_base = Rng(tc.seed).derive("shuffle");
  Rng aug_base = Rng(tc.seed).derive("aug");

  TrainResult<S> out;
  out.best = params;
  double best_val = 0;
  bool have_best = false;
  std::ostringstream hist;
  hist << history_header() << "\n";
  int64_t step = 0;

  for (int64_t epoch = 0; epoch < tc.epochs; ++epoch) {
    std::vector<size_t> perm = order;
    Rng sh = shuffle_base.derive(static_cast<uint64_t>(epoch));
    sh.shuffle(perm);
    Rng aug_epoch = aug_base.derive(static_cast<uint64_t>(epoch));

    double loss_sum = 0;
    int64_t seen = 0, correct1 = 0, ich_seen = 0, correct2 = 0;
    for (int64_t bstart = 0; bstart < static_cast<int64_t>(perm.size()); bstart += B) {
      int64_t bstop = std::min<int64_t>(static_cast<int64_t>(perm.size()), bstart + B);
      if (tc.cosine) {
        double t = static_cast<double>(step), T = static_cast<double>(total_steps);
        opt.set_lr(tc.lr * 0.5 * (1.0 + std::cos(M_PI * t / T)));
      }
      Graph<S> g;
      ParamNodes<S> pn = bind_params(g, params, true);
      std::vector<Tensor<S>> inputs;
      std::vector<int> presence, location;
      for (int64_t slot = bstart; slot < bstop; ++slot) {
        const Sample& s = train_samples[perm[static_cast<size_t>(slot)]];
        ImageF im = center_crop(s.image, aug.crop_size);
        if (tc.augment) {
          Rng r = aug_epoch.derive(static_cast<uint64_t>(slot));
          im = rotate(im, r.uniform(-aug.max_rotation_degrees, aug.max_rotation_degrees));
          if (r.next_double() < aug.sharpness_probability)
            im = adjust_sharpness(im, aug.sharpness_factor);
        }
        inputs.push_back(to_model_input<S>(im, aug));
        presence.push_back(s.presence);
        location.push_back(s.location);
      }
      BatchNodes<S> bn = build_batch(g, pn, cfg, inputs);
      DualLoss<S> loss = combined_loss(g, bn.logits1, presence, bn.logits2, location);
      g.backward(loss.combined);

      std::vector<Tensor<S>> grads;
      grads.reserve(pn.ids.size());
      for (int id : pn.ids) grads.push_back(g.grad(id));
      opt.step(params, grads);
      ++step;

      int64_t nb = bstop - bstart;
      loss_sum += static_cast<double>(g.value(loss.combined).data[0]) *
                  static_cast<double>(nb);
      const Tensor<S>& lg1 = g.value(bn.logits1);
      const Tensor<S>& lg2 = g.value(bn.logits2);
      for (int64_t r = 0; r < nb; ++r) {
        int p1 = lg1.at(r, 1) > lg1.at(r, 0) ? 1 : 0;
        if (p1 == presence[static_cast<size_t>(r)]) ++correct1;
        int truel = location[static_cast<size_t>(r)];
        if (truel >= 0) {
          ++ich_seen;
          int p2 = 0;
          for (int64_t j = 1; j < lg2.shape[1]; ++j)
            if (lg2.at(r, j) > lg2.at(r, p2)) p2 = static_cast<int>(j);
          if (p2 == truel) ++correct2;
        }
      }
      seen += nb;
    }

    EpochStats st;
    st.train_loss = loss_sum / static_cast<double>(seen);
    st.train_acc1 = static_cast<double>(correct1) / static_cast<double>(seen);
    st.has_train_ich = ich_seen > 0;
    st.train_acc2 =
        st.has_train_ich ? static_cast<double>(correct2) / static_cast<double>(ich_seen) : 0.0;
    if (!val_samples.empty()) {
      EvalResult ev = evaluate(params, val_samples, aug, tc.batch_val);
      st.has_val = true;
      st.val_loss = ev.combined;
      st.val_acc1 = ev.acc1;
      st.val_acc2 = ev.acc2;
      st.val_has_ich = ev.has_ich;
      if (!have_best || ev.combined < best_val) {
        have_best = true;
        best_val = ev.combined;
        out.best = params;
        out.best_epoch = epoch + 1;
      }
    }
    out.epochs.push_back(st);
    hist << history_row(epoch + 1, st) << "\n";
  }
  if (!have_best) {
    out.best = params;
    out.best_epoch = 0;
  }
  out.history = hist.str();
  return out;
}

// single-image forward (eval chain already applied by the caller)
template <typename S>
std::pair<Tensor<S>, Tensor<S>> forward_logits(const Params<S>& params,
                                               const Tensor<S>& input) {
  Graph<S> g;
  ParamNodes<S> pn = bind_params(g, params, false);
  int enc = encoder_forward_image(g, pn, input, params.cfg);
  auto [l1, l2] = dual_forward(g, pn, enc);
  return {g.value(l1), g.value(l2)};
}

inline std::vector<double> softmax_vec(const std::vector<double>& logits) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double sum = 0;
  std::vector<double> out;
  for (double v : logits) {
    out.push_back(std::exp(v - mx));
    sum += out.back();
  }
  for (double& v : out) v /= sum;
  return out;
}

}  // namespace dtvit
