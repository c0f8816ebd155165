#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ffcl {

// Class 1 is the positive class throughout.
struct ConfusionMatrix {
  int64_t tp = 0;
  int64_t fp = 0;
  int64_t fn = 0;
  int64_t tn = 0;

  int64_t total() const { return tp + fp + fn + tn; }
};

// Predict 1 iff score >= threshold.
ConfusionMatrix confusion(const std::vector<double>& scores, const std::vector<int>& labels,
                          double threshold = 0.5);

struct MacroMetrics {
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
};

// Unweighted mean of the per-class values over both classes; any 0/0 is
// defined as 0 (the empty-prediction class contributes nothing).
MacroMetrics macro_metrics(const ConfusionMatrix& cm);

// Mann-Whitney statistic via rank sums with average ranks for ties: the
// probability a random positive outranks a random negative, ties counting
// one half. Needs both classes present.
double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

struct MetricsReport {
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  double roc_auc = 0.0;
  double threshold = 0.5;
  int64_t sample_count = 0;
  std::string split_digest;  // content hash of the evaluated split
};

MetricsReport evaluate(const std::vector<double>& scores, const std::vector<int>& labels,
                       double threshold = 0.5, std::string split_digest = "");

// Full-precision, schema-versioned document; parse(emit(r)) == r exactly.
std::string metrics_to_json_string(const MetricsReport& r);
MetricsReport metrics_from_json_string(const std::string& text);

// Fraction -> 2-decimal percent string: 0.384615 -> "38.46".
std::string format_percent(double frac);

}  // namespace ffcl
