#pragma once

#include <cstdio>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "dtvit/common.hpp"

namespace dtvit {

// rows = true class, columns = predicted class
struct Confusion {
  int64_t k = 0;
  std::vector<int64_t> m;

  explicit Confusion(int64_t k_) : k(k_), m(static_cast<size_t>(k_ * k_), 0) {
    check(k_ >= 2, "confusion: need at least two classes");
  }

  int64_t& at(int64_t t, int64_t p) { return m[static_cast<size_t>(t * k + p)]; }
  int64_t at(int64_t t, int64_t p) const { return m[static_cast<size_t>(t * k + p)]; }

  void add(int64_t t, int64_t p) {
    if (t < 0 || t >= k || p < 0 || p >= k)
      failf("confusion: label out of range: true=", t, " pred=", p, " k=", k);
    ++at(t, p);
  }

  int64_t total() const {
    int64_t s = 0;
    for (int64_t v : m) s += v;
    return s;
  }

  int64_t correct() const {
    int64_t s = 0;
    for (int64_t i = 0; i < k; ++i) s += at(i, i);
    return s;
  }
};

// one-vs-rest counts for a single class
struct ClassCounts {
  int64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

inline ClassCounts counts_for(const Confusion& cm, int64_t c) {
  ClassCounts out;
  int64_t total = cm.total();
  out.tp = cm.at(c, c);
  for (int64_t j = 0; j < cm.k; ++j)
    if (j != c) out.fn += cm.at(c, j);
  for (int64_t i = 0; i < cm.k; ++i)
    if (i != c) out.fp += cm.at(i, c);
  out.tn = total - out.tp - out.fn - out.fp;
  return out;
}

struct ClassMetrics {
  double precision = 0, recall = 0, specificity = 0, f1 = 0;
};

struct MetricsReport {
  double accuracy = 0;
  std::vector<ClassMetrics> per_class;
  ClassMetrics macro;  // unweighted mean over classes
  bool warned = false; // some ratio was 0/0 and was reported as 0
};

inline double safe_div(double num, double den, bool& warned) {
  if (den == 0.0) {
    warned = true;
    return 0.0;
  }
  return num / den;
}

inline MetricsReport compute_metrics(const Confusion& cm) {
  MetricsReport rep;
  int64_t total = cm.total();
  rep.accuracy = safe_div(static_cast<double>(cm.correct()), static_cast<double>(total),
                          rep.warned);
  for (int64_t c = 0; c < cm.k; ++c) {
    ClassCounts n = counts_for(cm, c);
    ClassMetrics cmx;
    cmx.precision = safe_div(static_cast<double>(n.tp), static_cast<double>(n.tp + n.fp),
                             rep.warned);
    cmx.recall = safe_div(static_cast<double>(n.tp), static_cast<double>(n.tp + n.fn),
                          rep.warned);
    cmx.specificity = safe_div(static_cast<double>(n.tn), static_cast<double>(n.tn + n.fp),
                               rep.warned);
    cmx.f1 = safe_div(2.0 * cmx.precision * cmx.recall, cmx.precision + cmx.recall, rep.warned);
    rep.per_class.push_back(cmx);
    rep.macro.precision += cmx.precision;
    rep.macro.recall += cmx.recall;
    rep.macro.specificity += cmx.specificity;
    rep.macro.f1 += cmx.f1;
  }
  double kd = static_cast<double>(cm.k);
  rep.macro.precision /= kd;
  rep.macro.recall /= kd;
  rep.macro.specificity /= kd;
  rep.macro.f1 /= kd;
  return rep;
}

// binary shorthand, class 1 taken as positive
struct BinaryMetrics {
  double accuracy = 0, precision = 0, recall = 0, specificity = 0, f1 = 0;
  bool warned = false;
};

inline BinaryMetrics binary_metrics(const Confusion& cm) {
  check(cm.k == 2, "binary_metrics: confusion matrix is not 2x2");
  MetricsReport rep = compute_metrics(cm);
  BinaryMetrics b;
  b.accuracy = rep.accuracy;
  b.precision = rep.per_class[1].precision;
  b.recall = rep.per_class[1].recall;
  b.specificity = rep.per_class[1].specificity;
  b.f1 = rep.per_class[1].f1;
  b.warned = rep.warned;
  return b;
}

inline Confusion make_confusion(const std::vector<int64_t>& labels,
                                const std::vector<int64_t>& preds, int64_t k) {
  if (labels.size() != preds.size())
    failf("confusion: ", labels.size(), " labels vs ", preds.size(), " predictions");
  Confusion cm(k);
  for (size_t i = 0; i < labels.size(); ++i) cm.add(labels[i], preds[i]);
  return cm;
}

inline std::string fmt12(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12f", v);
  return buf;
}

// human-readable table followed by machine-readable key=value lines; `tag`
// prefixes the machine keys (e.g. "eval.presence")
inline std::string render_report(const Confusion& cm, const std::vector<std::string>& names,
                                 const std::string& tag) {
  check(static_cast<int64_t>(names.size()) == cm.k, "render_report: name count mismatch");
  MetricsReport rep = compute_metrics(cm);
  std::ostringstream os;
  size_t w = 12;
  for (const auto& n : names) w = std::max(w, n.size() + 2);
  os << "confusion matrix (rows = true, cols = predicted):\n";
  os << std::setw(static_cast<int>(w)) << "";
  for (const auto& n : names) os << std::setw(static_cast<int>(w)) << n;
  os << "\n";
  for (int64_t i = 0; i < cm.k; ++i) {
    os << std::setw(static_cast<int>(w)) << names[static_cast<size_t>(i)];
    for (int64_t j = 0; j < cm.k; ++j) os << std::setw(static_cast<int>(w)) << cm.at(i, j);
    os << "\n";
  }
  os << "samples: " << cm.total() << "  accuracy: " << fmt12(rep.accuracy) << "\n";
  for (int64_t c = 0; c < cm.k; ++c) {
    const ClassMetrics& x = rep.per_class[static_cast<size_t>(c)];
    os << "  " << std::setw(static_cast<int>(w)) << names[static_cast<size_t>(c)]
       << "  precision " << fmt12(x.precision) << "  recall " << fmt12(x.recall)
       << "  specificity " << fmt12(x.specificity) << "  f1 " << fmt12(x.f1) << "\n";
  }
  os << "  " << std::setw(static_cast<int>(w)) << "macro" << "  precision "
     << fmt12(rep.macro.precision) << "  recall " << fmt12(rep.macro.recall)
     << "  specificity " << fmt12(rep.macro.specificity) << "  f1 " << fmt12(rep.macro.f1)
     << "\n";
  if (rep.warned) os << "  warning: a ratio with zero denominator was reported as 0\n";
  os << tag << ".accuracy=" << fmt12(rep.accuracy) << "\n";
  for (int64_t c = 0; c < cm.k; ++c) {
    const ClassMetrics& x = rep.per_class[static_cast<size_t>(c)];
    const std::string& n = names[static_cast<size_t>(c)];
    os << tag << "." << n << ".precision=" << fmt12(x.precision) << "\n";
    os << tag << "." << n << ".recall=" << fmt12(x.recall) << "\n";
    os << tag << "." << n << ".specificity=" << fmt12(x.specificity) << "\n";
    os << tag << "." << n << ".f1=" << fmt12(x.f1) << "\n";
  }
  os << tag << ".macro.precision=" << fmt12(rep.macro.precision) << "\n";
  os << tag << ".macro.recall=" << fmt12(rep.macro.recall) << "\n";
  os << tag << ".macro.specificity=" << fmt12(rep.macro.specificity) << "\n";
  os << tag << ".macro.f1=" << fmt12(rep.macro.f1) << "\n";
  return os.str();
}

// two-classifier summary: presence row uses the positive (ICH) class, the
// location row uses macro averages; `scope` records what task 2 was
// evaluated over ("ich-only" or "all")
inline std::string render_dual_report(const Confusion& cm1, const Confusion& cm2,
                                      const std::string& scope) {
  BinaryMetrics b = binary_metrics(cm1);
  MetricsReport m2 = compute_metrics(cm2);
  std::ostringstream os;
  os << std::left << std::setw(22) << "classifier" << std::right << std::setw(16) << "accuracy"
     << std::setw(16) << "precision" << std::setw(16) << "recall" << std::setw(16) << "f1"
     << std::setw(16) << "specificity" << "\n";
  auto row = [&](const std::string& name, double a, double p, double r, double f, double s) {
    os << std::left << std::setw(22) << name << std::right;
    for (double v : {a, p, r, f, s}) os << std::setw(16) << fmt12(v);
    os << "\n";
  };
  row("presence (task 1)", b.accuracy, b.precision, b.recall, b.f1, b.specificity);
  row("location (task 2)", m2.accuracy, m2.macro.precision, m2.macro.recall, m2.macro.f1,
      m2.macro.specificity);
  os << "task-2 scope: " << scope << "\n";
  os << "task1.accuracy=" << fmt12(b.accuracy) << "\n";
  os << "task1.precision=" << fmt12(b.precision) << "\n";
  os << "task1.recall=" << fmt12(b.recall) << "\n";
  os << "task1.f1=" << fmt12(b.f1) << "\n";
  os << "task1.specificity=" << fmt12(b.specificity) << "\n";
  os << "task2.scope=" << scope << "\n";
  os << "task2.accuracy=" << fmt12(m2.accuracy) << "\n";
  os << "task2.precision=" << fmt12(m2.macro.precision) << "\n";
  os << "task2.recall=" << fmt12(m2.macro.recall) << "\n";
  os << "task2.f1=" << fmt12(m2.macro.f1) << "\n";
  os << "task2.specificity=" << fmt12(m2.macro.specificity) << "\n";
  return os.str();
}

}  // namespace dtvit
