#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "core/checkpoint.hpp"
#include "core/config.hpp"
#include "core/contrastive.hpp"
#include "core/data.hpp"
#include "core/metrics.hpp"
#include "core/network.hpp"

namespace ffcl {

// Source -> optional resize -> normalize -> split, all deterministic.
struct PreparedData {
  Splits splits;
  std::string dataset_digest;  // whole dataset, pre-split
  std::array<int, 3> image_shape{0, 0, 0};
};

PreparedData prepare_data(const DataConfig& dc);

// 1-based index of the highest validation accuracy; earliest epoch wins
// ties (strictly-greater scan). Returns 0 for an empty history.
int select_best_epoch(const std::vector<double>& val_accuracy);

// Probability scores for every sample, recording disabled. Batched to keep
// activation memory bounded.
std::vector<double> score_dataset(const BlockStack& stack, const ClassifierHead& head,
                                  const Dataset& ds);

struct FinetuneResult {
  std::vector<LossRow> curve;         // block = -1
  std::vector<double> val_accuracy;   // one entry per epoch
  int best_epoch = 0;                 // 1-based; 0 when epochs == 0
  MetricsReport test_metrics;
  double final_loss = 0.0;
};

// Supervised stage: trains every parameter (blocks + head) against the
// binary cross-entropy loss with Adam under cosine annealing
// (T = epochs * ceil(|train| / batch), floor 0). After each epoch the val
// accuracy at threshold 0.5 is recorded; the best epoch's parameters are
// restored at the end and the test metrics are computed from them. With
// zero epochs the initial parameters are evaluated as-is.
FinetuneResult finetune_classify(BlockStack& stack, ClassifierHead& head, const Splits& splits,
                                 const FinetuneConfig& cfg);

struct StageRecord {
  std::string stage;  // "local" | "global" | "finetune"
  std::string input_ckpt_id;
  std::string output_ckpt_id;
  double wall_s = 0.0;
  double final_loss = 0.0;
};

struct RunManifest {
  std::string run_id;
  std::string config_digest;
  std::string mode;
  uint64_t seed = 0;
  std::string dataset_digest;
  std::string init_ckpt_id;
  std::vector<StageRecord> stages;
  std::string metrics_path;
  std::string status;  // "ok" | "failed"
  std::string error;
};

std::string manifest_to_json_string(const RunManifest& m);
RunManifest manifest_from_json_string(const std::string& text);

struct RunResult {
  RunManifest manifest;
  MetricsReport metrics;
  std::string out_dir;
};

// Stage names run by a mode, in order; every mode ends with "finetune".
std::vector<std::string> stage_sequence(PipelineMode mode);

// Executes the configured stage chain in a fresh output directory:
//   ckpt/init.ffclckpt, ckpt/<stage>.ffclckpt  parameter snapshots
//   loss_<stage>.csv                           training curves
//   metrics.json                               test metrics (finetune)
//   manifest.json                              provenance chain
// The model is re-loaded from the previous stage's checkpoint file at every
// boundary, so the snapshots are the real hand-off medium. A non-empty
// output directory is refused. On a stage failure the partial manifest
// (status "failed" plus the cause) is written before the error propagates.
RunResult run_pipeline(const RunConfig& cfg);

struct InitOption {
  bool warm = false;
  std::string label = "random";
  std::string warm_path;
};

struct GridRow {
  PipelineMode mode = PipelineMode::RBP;
  std::string init_label;
  bool ok = false;
  std::string error;
  MetricsReport metrics;
  std::string out_dir;
};

struct GridResult {
  std::vector<GridRow> rows;
  bool all_ok = true;
  std::string dataset_digest;
  std::string csv_path;
};

// Runs all five modes x every init option, each in its own subdirectory of
// the base output dir, optionally across `jobs` worker threads. A failed
// row is recorded (error message, dashes in the table) without stopping
// the remaining rows. Writes grid.csv at the grid root.
GridResult ablation_grid(const RunConfig& base, const std::vector<InitOption>& inits, int jobs);

std::string mode_approach_label(PipelineMode m);     // "RBP" or "FFCL"
std::string mode_contrastive_label(PipelineMode m);  // "-", "Local->Global", ...

std::string render_loss_csv(const std::string& stage_tag, const std::vector<LossRow>& rows);
std::string render_grid_csv(const std::vector<GridRow>& rows);
std::string render_grid_table(const std::vector<GridRow>& rows);
std::string render_metrics_summary(const MetricsReport& m);
std::string render_manifest_summary(const RunManifest& m);

// Pretty-prints a produced file (metrics.json, manifest.json, or grid.csv)
// for terminal reading; the kind is detected from the content.
std::string render_report(const std::string& path);

}  // namespace ffcl
