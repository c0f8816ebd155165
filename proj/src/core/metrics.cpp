#include "core/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "json.hpp"

#include "core/error.hpp"

namespace ffcl {

namespace {

void require_scored_labels(const std::vector<double>& scores, const std::vector<int>& labels,
                           const char* op) {
  if (scores.empty()) throw ValidationError(std::string(op) + ": no samples");
  if (scores.size() != labels.size())
    throw ValidationError(std::string(op) + ": " + std::to_string(scores.size()) +
                          " scores for " + std::to_string(labels.size()) + " labels");
  for (size_t i = 0; i < labels.size(); ++i)
    if (labels[i] != 0 && labels[i] != 1)
      throw ValidationError(std::string(op) + ": label " + std::to_string(labels[i]) +
                            " at index " + std::to_string(i) + " is not binary");
}

double safe_div(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

}  // namespace

ConfusionMatrix confusion(const std::vector<double>& scores, const std::vector<int>& labels,
                          double threshold) {
  require_scored_labels(scores, labels, "confusion");
  ConfusionMatrix cm;
  for (size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= threshold;
    const bool pos = labels[i] == 1;
    if (pred && pos) ++cm.tp;
    else if (pred && !pos) ++cm.fp;
    else if (!pred && pos) ++cm.fn;
    else ++cm.tn;
  }
  return cm;
}

MacroMetrics macro_metrics(const ConfusionMatrix& cm) {
  const double total = static_cast<double>(cm.total());
  if (total <= 0.0) throw ValidationError("macro_metrics: empty confusion matrix");
  // Class 1 (positive) and class 0 (negative) each get precision/recall/F1
  // with 0/0 defined as 0; macro values average the two classes.
  const double p1 = safe_div(static_cast<double>(cm.tp), static_cast<double>(cm.tp + cm.fp));
  const double r1 = safe_div(static_cast<double>(cm.tp), static_cast<double>(cm.tp + cm.fn));
  const double f1_1 = safe_div(2.0 * p1 * r1, p1 + r1);
  const double p0 = safe_div(static_cast<double>(cm.tn), static_cast<double>(cm.tn + cm.fn));
  const double r0 = safe_div(static_cast<double>(cm.tn), static_cast<double>(cm.tn + cm.fp));
  const double f1_0 = safe_div(2.0 * p0 * r0, p0 + r0);
  MacroMetrics m;
  m.accuracy = static_cast<double>(cm.tp + cm.tn) / total;
  m.macro_precision = 0.5 * (p0 + p1);
  m.macro_recall = 0.5 * (r0 + r1);
  m.macro_f1 = 0.5 * (f1_0 + f1_1);
  return m;
}

double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  require_scored_labels(scores, labels, "roc_auc");
  const int64_t n = static_cast<int64_t>(scores.size());
  int64_t npos = 0;
  for (int l : labels) npos += l;
  const int64_t nneg = n - npos;
  if (npos == 0 || nneg == 0)
    throw ValidationError("roc_auc: undefined for single-class labels (" +
                          std::to_string(npos) + " positive of " + std::to_string(n) + ")");

  std::vector<int64_t> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
    return scores[static_cast<size_t>(a)] < scores[static_cast<size_t>(b)];
  });

  // Rank sum of positives, with tied scores sharing their average rank.
  double pos_rank_sum = 0.0;
  int64_t i = 0;
  while (i < n) {
    int64_t j = i;
    while (j < n && scores[static_cast<size_t>(order[static_cast<size_t>(j)])] ==
                        scores[static_cast<size_t>(order[static_cast<size_t>(i)])])
      ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
    for (int64_t k = i; k < j; ++k)
      if (labels[static_cast<size_t>(order[static_cast<size_t>(k)])] == 1)
        pos_rank_sum += avg_rank;
    i = j;
  }
  const double u = pos_rank_sum - 0.5 * static_cast<double>(npos) * (npos + 1);
  return u / (static_cast<double>(npos) * static_cast<double>(nneg));
}

MetricsReport evaluate(const std::vector<double>& scores, const std::vector<int>& labels,
                       double threshold, std::string split_digest) {
  const ConfusionMatrix cm = confusion(scores, labels, threshold);
  const MacroMetrics m = macro_metrics(cm);
  MetricsReport r;
  r.accuracy = m.accuracy;
  r.macro_precision = m.macro_precision;
  r.macro_recall = m.macro_recall;
  r.macro_f1 = m.macro_f1;
  r.roc_auc = roc_auc(scores, labels);
  r.threshold = threshold;
  r.sample_count = static_cast<int64_t>(scores.size());
  r.split_digest = std::move(split_digest);
  return r;
}

std::string metrics_to_json_string(const MetricsReport& r) {
  const nlohmann::json j = {{"schema", "ffcl-metrics/1"},
                            {"accuracy", r.accuracy},
                            {"macro_precision", r.macro_precision},
                            {"macro_recall", r.macro_recall},
                            {"macro_f1", r.macro_f1},
                            {"roc_auc", r.roc_auc},
                            {"threshold", r.threshold},
                            {"sample_count", r.sample_count},
                            {"split_digest", r.split_digest}};
  return j.dump(2) + "\n";
}

MetricsReport metrics_from_json_string(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) throw IoError("metrics document is not valid structured text");
  try {
    if (j.at("schema").get<std::string>() != "ffcl-metrics/1")
      throw IoError("metrics document has unknown schema tag");
    MetricsReport r;
    r.accuracy = j.at("accuracy").get<double>();
    r.macro_precision = j.at("macro_precision").get<double>();
    r.macro_recall = j.at("macro_recall").get<double>();
    r.macro_f1 = j.at("macro_f1").get<double>();
    r.roc_auc = j.at("roc_auc").get<double>();
    r.threshold = j.at("threshold").get<double>();
    r.sample_count = j.at("sample_count").get<int64_t>();
    r.split_digest = j.at("split_digest").get<std::string>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("metrics document is missing fields: ") + e.what());
  }
}

std::string format_percent(double frac) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", frac * 100.0);
  return buf;
}

}  // namespace ffcl
