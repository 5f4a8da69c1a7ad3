#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "wsplin/errors.hpp"

namespace wsplin {

struct ScoredSample {
  double score = 0.0;
  bool positive = false;
};

struct ConfusionCounts {
  int64_t tp = 0;
  int64_t fp = 0;
  int64_t fn = 0;
  int64_t tn = 0;
};

// Rank-statistic AUC with midranks on ties:
// (S_p - N_p(N_p+1)/2) / (N_p * N_n), S_p the sum of positive ranks when all
// scores are ranked ascending.
double auc(const std::vector<ScoredSample>& samples);

// Sweeps thresholds over the distinct scores in descending order (predict
// positive when score >= threshold) and returns the precision at the highest
// threshold whose recall reaches the target. No interpolation.
double precision_at_recall(const std::vector<ScoredSample>& samples, double target_recall);

// Threshold companion to precision_at_recall: the operating threshold itself.
double threshold_at_recall(const std::vector<ScoredSample>& samples, double target_recall);

// 2PR/(P+R); 0 when there are no true positives or a denominator vanishes.
double binary_f1(const ConfusionCounts& counts);

// Unweighted mean of one-vs-rest binary F1 over classes.
double macro_f1(const std::vector<ConfusionCounts>& per_class_counts);

// ROC curve as (fpr, tpr) points from threshold +inf down to -inf.
std::vector<std::pair<double, double>> roc_points(const std::vector<ScoredSample>& samples);

struct ClassBreakdown {
  std::string name;
  int64_t support = 0;
  ConfusionCounts counts;
  double f1 = 0.0;
};

struct EvaluationReport {
  std::string setting;
  int num_classes = 0;
  int64_t num_samples = 0;

  bool has_detection = false;
  double detection_auc = 0.0;
  double p_at_r90 = 0.0;
  double p_at_r95 = 0.0;
  double f1_binary = 0.0;

  double top1 = 0.0;
  double f1_macro = 0.0;

  std::vector<ClassBreakdown> per_class;
  std::vector<std::pair<double, double>> roc;

  std::string canonical_text() const;
  // Writes <dir>/report.txt and, when a detection block exists,
  // <dir>/roc_points.tsv.
  void write(const std::filesystem::path& dir) const;
};

// Builds the full report. `distressed_scores` may be empty for settings
// without a detection view (e.g. distress-only recognition); otherwise it is
// aligned with predictions/labels and scored against label != normal_class.
EvaluationReport make_report(const std::vector<int>& predictions,
                             const std::vector<double>& distressed_scores,
                             const std::vector<int>& labels,
                             const std::vector<std::string>& class_names,
                             const std::string& setting, int normal_class = 0);

}  // namespace wsplin
