#include "wsplin/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace wsplin {

namespace {

void check_finite(const std::vector<ScoredSample>& samples) {
  for (const ScoredSample& s : samples) {
    if (!std::isfinite(s.score)) throw UndefinedMetricError("non-finite score");
  }
}

// Distinct scores, descending.
std::vector<double> distinct_scores_desc(const std::vector<ScoredSample>& samples) {
  std::vector<double> t;
  t.reserve(samples.size());
  for (const ScoredSample& s : samples) t.push_back(s.score);
  std::sort(t.begin(), t.end(), std::greater<>());
  t.erase(std::unique(t.begin(), t.end()), t.end());
  return t;
}

}  // namespace

double auc(const std::vector<ScoredSample>& samples) {
  check_finite(samples);
  int64_t np = 0, nn = 0;
  for (const ScoredSample& s : samples) (s.positive ? np : nn)++;
  if (np == 0 || nn == 0) {
    throw UndefinedMetricError("AUC needs at least one positive and one negative sample");
  }

  std::vector<size_t> order(samples.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return samples[a].score < samples[b].score; });

  double sp = 0.0;
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    while (j + 1 < order.size() && samples[order[j + 1]].score == samples[order[i]].score) ++j;
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (size_t k = i; k <= j; ++k) {
      if (samples[order[k]].positive) sp += midrank;
    }
    i = j + 1;
  }
  return (sp - static_cast<double>(np) * (static_cast<double>(np) + 1.0) / 2.0) /
         (static_cast<double>(np) * static_cast<double>(nn));
}

double threshold_at_recall(const std::vector<ScoredSample>& samples, double target_recall) {
  check_finite(samples);
  if (!(target_recall > 0.0 && target_recall <= 1.0)) {
    throw UndefinedMetricError("target recall must lie in (0,1]");
  }
  int64_t np = 0;
  for (const ScoredSample& s : samples) np += s.positive ? 1 : 0;
  if (np == 0) throw UndefinedMetricError("no positive samples");

  for (double t : distinct_scores_desc(samples)) {
    int64_t tp = 0;
    for (const ScoredSample& s : samples) {
      if (s.score >= t && s.positive) ++tp;
    }
    if (static_cast<double>(tp) / static_cast<double>(np) >= target_recall) return t;
  }
  // Recall 1 is reached at the lowest distinct score, so this is unreachable
  // for valid targets; keep the lowest score as a safe fallback.
  return distinct_scores_desc(samples).back();
}

double precision_at_recall(const std::vector<ScoredSample>& samples, double target_recall) {
  const double t = threshold_at_recall(samples, target_recall);
  int64_t tp = 0, fp = 0;
  for (const ScoredSample& s : samples) {
    if (s.score >= t) (s.positive ? tp : fp)++;
  }
  return static_cast<double>(tp) / static_cast<double>(tp + fp);
}

double binary_f1(const ConfusionCounts& c) {
  if (c.tp <= 0) return 0.0;
  const double p = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  const double r = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  return 2.0 * p * r / (p + r);
}

double macro_f1(const std::vector<ConfusionCounts>& per_class_counts) {
  if (per_class_counts.empty()) throw UndefinedMetricError("macro F1 over zero classes");
  double sum = 0.0;
  for (const ConfusionCounts& c : per_class_counts) sum += binary_f1(c);
  return sum / static_cast<double>(per_class_counts.size());
}

std::vector<std::pair<double, double>> roc_points(const std::vector<ScoredSample>& samples) {
  check_finite(samples);
  int64_t np = 0, nn = 0;
  for (const ScoredSample& s : samples) (s.positive ? np : nn)++;
  std::vector<std::pair<double, double>> pts;
  pts.emplace_back(0.0, 0.0);
  if (np == 0 || nn == 0) return pts;

  std::vector<size_t> order(samples.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return samples[a].score > samples[b].score; });

  int64_t tp = 0, fp = 0;
  size_t i = 0;
  while (i < order.size()) {
    const double score = samples[order[i]].score;
    while (i < order.size() && samples[order[i]].score == score) {
      (samples[order[i]].positive ? tp : fp)++;
      ++i;
    }
    pts.emplace_back(static_cast<double>(fp) / static_cast<double>(nn),
                     static_cast<double>(tp) / static_cast<double>(np));
  }
  return pts;
}

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

std::string EvaluationReport::canonical_text() const {
  std::string out;
  out += "setting: " + setting + "\n";
  out += "classes: " + std::to_string(num_classes) + "\n";
  out += "samples: " + std::to_string(num_samples) + "\n";
  if (has_detection) {
    out += "auc: " + fmt(detection_auc) + "\n";
    out += "p_at_r90: " + fmt(p_at_r90) + "\n";
    out += "p_at_r95: " + fmt(p_at_r95) + "\n";
    out += "f1_binary: " + fmt(f1_binary) + "\n";
  }
  out += "top1: " + fmt(top1) + "\n";
  out += "f1_macro: " + fmt(f1_macro) + "\n";
  for (size_t i = 0; i < per_class.size(); ++i) {
    const ClassBreakdown& c = per_class[i];
    out += "class " + std::to_string(i) + " " + c.name + ": support=" + std::to_string(c.support) +
           " tp=" + std::to_string(c.counts.tp) + " fp=" + std::to_string(c.counts.fp) +
           " fn=" + std::to_string(c.counts.fn) + " tn=" + std::to_string(c.counts.tn) +
           " f1=" + fmt(c.f1) + "\n";
  }
  return out;
}

void EvaluationReport::write(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  {
    std::ofstream f(dir / "report.txt", std::ios::binary);
    f << canonical_text();
  }
  if (has_detection) {
    std::ofstream f(dir / "roc_points.tsv", std::ios::binary);
    f << "fpr\ttpr\n";
    for (const auto& [fpr, tpr] : roc) {
      f << fmt(fpr) << "\t" << fmt(tpr) << "\n";
    }
  }
}

EvaluationReport make_report(const std::vector<int>& predictions,
                             const std::vector<double>& distressed_scores,
                             const std::vector<int>& labels,
                             const std::vector<std::string>& class_names,
                             const std::string& setting, int normal_class) {
  if (predictions.size() != labels.size()) throw ShapeError("predictions/labels length mismatch");
  if (!distressed_scores.empty() && distressed_scores.size() != labels.size()) {
    throw ShapeError("scores/labels length mismatch");
  }
  const int C = static_cast<int>(class_names.size());
  EvaluationReport rep;
  rep.setting = setting;
  rep.num_classes = C;
  rep.num_samples = static_cast<int64_t>(labels.size());

  int64_t correct = 0;
  std::vector<ConfusionCounts> per_class(static_cast<size_t>(C));
  for (size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    const int p = predictions[i];
    if (y < 0 || y >= C || p < 0 || p >= C) throw LabelError("class index out of range");
    if (y == p) ++correct;
    for (int c = 0; c < C; ++c) {
      ConfusionCounts& cc = per_class[static_cast<size_t>(c)];
      const bool is_pos = (y == c);
      const bool pred_pos = (p == c);
      if (is_pos && pred_pos) ++cc.tp;
      else if (!is_pos && pred_pos) ++cc.fp;
      else if (is_pos && !pred_pos) ++cc.fn;
      else ++cc.tn;
    }
  }
  rep.top1 = labels.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(labels.size());
  rep.f1_macro = macro_f1(per_class);
  for (int c = 0; c < C; ++c) {
    ClassBreakdown b;
    b.name = class_names[static_cast<size_t>(c)];
    b.counts = per_class[static_cast<size_t>(c)];
    b.support = b.counts.tp + b.counts.fn;
    b.f1 = binary_f1(b.counts);
    rep.per_class.push_back(std::move(b));
  }

  if (!distressed_scores.empty()) {
    std::vector<ScoredSample> scored(labels.size());
    bool any_pos = false, any_neg = false;
    for (size_t i = 0; i < labels.size(); ++i) {
      scored[i] = {distressed_scores[i], labels[i] != normal_class};
      (scored[i].positive ? any_pos : any_neg) = true;
    }
    if (any_pos && any_neg) {
      rep.has_detection = true;
      rep.detection_auc = auc(scored);
      rep.p_at_r90 = precision_at_recall(scored, 0.90);
      rep.p_at_r95 = precision_at_recall(scored, 0.95);
      ConfusionCounts det;
      for (const ScoredSample& s : scored) {
        const bool pred_pos = s.score >= 0.5;
        if (s.positive && pred_pos) ++det.tp;
        else if (!s.positive && pred_pos) ++det.fp;
        else if (s.positive && !pred_pos) ++det.fn;
        else ++det.tn;
      }
      rep.f1_binary = binary_f1(det);
      rep.roc = roc_points(scored);
    }
  }
  return rep;
}

}  // namespace wsplin
