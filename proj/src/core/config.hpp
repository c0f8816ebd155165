#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "core/contrastive.hpp"
#include "core/data.hpp"
#include "core/network.hpp"

namespace ffcl {

enum class PipelineMode { RBP, LocalThenGlobal, GlobalThenLocal, GlobalOnly, LocalOnly };

std::string pipeline_mode_name(PipelineMode m);
PipelineMode pipeline_mode_from_name(const std::string& name);

struct FinetuneConfig {
  int epochs = 100;
  int batch_size = 10;
  float lr = 1e-4f;
  uint64_t seed = 0;  // resolved from the pipeline seed at run time
};

struct ModelConfig {
  std::vector<BlockSpec> blocks;
  EmbedMode mode = EmbedMode::gap;
  bool has_input_shape = false;          // optional cross-check against data
  std::array<int, 3> input_shape{0, 0, 0};
};

struct DataConfig {
  enum class Source { synthetic, idx };
  Source source = Source::synthetic;
  SyntheticSpec synthetic;
  std::string idx_images;
  std::string idx_labels;
  std::array<int, 2> classes{0, 1};

  NormMode norm = NormMode::zero_one;
  std::vector<double> mean;    // mean_std only
  std::vector<double> stddev;  // mean_std only

  SplitSpec split;

  bool do_resize = false;
  int resize_h = 0;
  int resize_w = 0;
};

struct InitSpec {
  bool warm = false;
  std::string warm_path;
};

// Fully resolved run description: file contents, flag overrides, and
// defaults folded together. `digest` hashes the canonical serialization, so
// two configs with equal digests run identically.
struct RunConfig {
  ModelConfig model;
  DataConfig data;
  ContrastiveStageConfig local;
  ContrastiveStageConfig global;
  FinetuneConfig finetune;
  PipelineMode mode = PipelineMode::LocalThenGlobal;
  uint64_t seed = 0;
  InitSpec init;
  std::string out_dir;
  std::string digest;
};

struct ConfigOverrides {
  std::optional<std::string> mode;
  std::optional<uint64_t> seed;
  std::optional<std::string> out_dir;
};

// Strict parser: unknown keys are rejected, referenced files must exist,
// and the pipeline seed is mandatory. Overrides are applied to the raw
// document before validation, so they behave exactly like edits to the file.
RunConfig parse_config_text(const std::string& text, const ConfigOverrides& ov = {},
                            const std::string& origin = "<inline>");
RunConfig parse_config_file(const std::string& path, const ConfigOverrides& ov = {});

// Canonical serialization of the resolved config (defaults included).
std::string canonical_config_json(const RunConfig& cfg);

// Standalone generator spec document: the same keys as
// data.source.synthetic, as a top-level object.
SyntheticSpec parse_synthetic_spec_text(const std::string& text, const std::string& origin);
SyntheticSpec parse_synthetic_spec_file(const std::string& path);

// Stand-in backbone used when the file has no model section: four conv
// blocks, 8->16->32->64 channels, kernel 3, stride 2 from the second on.
std::vector<BlockSpec> default_backbone();

}  // namespace ffcl
