#include "core/config.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include "core/digest.hpp"
#include "core/error.hpp"
#include "core/rng.hpp"
#include "json.hpp"

namespace ffcl {
namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& msg) { throw ConfigError("config: " + msg); }

void expect_keys(const json& obj, const std::string& where,
                 std::initializer_list<const char*> allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* k : allowed) {
      if (it.key() == k) {
        known = true;
        break;
      }
    }
    if (!known) bad("unknown key '" + it.key() + "' in " + where);
  }
}

const json& require_object(const json& parent, const char* key, const std::string& where) {
  auto it = parent.find(key);
  if (it == parent.end()) bad("missing required section '" + where + "'");
  if (!it->is_object()) bad("'" + where + "' must be an object");
  return *it;
}

const json* find(const json& parent, const char* key) {
  auto it = parent.find(key);
  return it == parent.end() ? nullptr : &*it;
}

int64_t as_int(const json& j, const std::string& where) {
  if (!j.is_number_integer()) bad("'" + where + "' must be an integer");
  return j.get<int64_t>();
}

uint64_t as_seed(const json& j, const std::string& where) {
  if (j.is_number_unsigned()) return j.get<uint64_t>();
  if (j.is_number_integer() && j.get<int64_t>() >= 0)
    return static_cast<uint64_t>(j.get<int64_t>());
  bad("'" + where + "' must be a non-negative integer");
}

double as_num(const json& j, const std::string& where) {
  if (!j.is_number()) bad("'" + where + "' must be a number");
  double v = j.get<double>();
  if (!std::isfinite(v)) bad("'" + where + "' must be finite");
  return v;
}

bool as_bool(const json& j, const std::string& where) {
  if (!j.is_boolean()) bad("'" + where + "' must be a boolean");
  return j.get<bool>();
}

std::string as_str(const json& j, const std::string& where) {
  if (!j.is_string()) bad("'" + where + "' must be a string");
  return j.get<std::string>();
}

void require_file(const std::string& path, const std::string& where) {
  std::error_code ec;
  if (!std::filesystem::exists(path, ec) || ec)
    bad("'" + where + "' refers to a missing file: " + path);
  if (std::filesystem::is_directory(path, ec)) bad("'" + where + "' is a directory: " + path);
}

ModelConfig parse_model(const json* node) {
  ModelConfig mc;
  if (node == nullptr) {
    mc.blocks = default_backbone();
    return mc;
  }
  if (!node->is_object()) bad("'model' must be an object");
  expect_keys(*node, "model", {"blocks", "embed_mode", "input_shape"});

  const json* blocks = find(*node, "blocks");
  if (blocks == nullptr) {
    mc.blocks = default_backbone();
  } else {
    if (!blocks->is_array() || blocks->empty()) bad("'model.blocks' must be a non-empty array");
    int idx = 0;
    for (const json& b : *blocks) {
      ++idx;
      const std::string where = "model.blocks[" + std::to_string(idx) + "]";
      if (!b.is_object()) bad(where + " must be an object");
      expect_keys(b, where, {"kind", "out_channels", "kernel", "stride", "residual"});
      BlockSpec spec;
      const json* kind = find(b, "kind");
      if (kind == nullptr) bad(where + " needs 'kind'");
      std::string k = as_str(*kind, where + ".kind");
      if (k == "conv") {
        spec.kind = BlockSpec::Kind::conv;
      } else if (k == "linear") {
        spec.kind = BlockSpec::Kind::linear;
      } else {
        bad(where + ".kind must be 'conv' or 'linear', got '" + k + "'");
      }
      const json* oc = find(b, "out_channels");
      if (oc == nullptr) bad(where + " needs 'out_channels'");
      int64_t channels = as_int(*oc, where + ".out_channels");
      if (channels < 1) bad(where + ".out_channels must be >= 1");
      spec.out_channels = static_cast<int>(channels);
      if (const json* kk = find(b, "kernel")) {
        if (spec.kind == BlockSpec::Kind::linear) bad(where + ": 'kernel' does not apply to linear");
        int64_t v = as_int(*kk, where + ".kernel");
        if (v < 1 || v % 2 == 0) bad(where + ".kernel must be a positive odd integer");
        spec.kernel = static_cast<int>(v);
      }
      if (const json* st = find(b, "stride")) {
        if (spec.kind == BlockSpec::Kind::linear) bad(where + ": 'stride' does not apply to linear");
        int64_t v = as_int(*st, where + ".stride");
        if (v < 1) bad(where + ".stride must be >= 1");
        spec.stride = static_cast<int>(v);
      }
      if (const json* res = find(b, "residual"))
        spec.use_residual = as_bool(*res, where + ".residual");
      mc.blocks.push_back(spec);
    }
  }

  if (const json* em = find(*node, "embed_mode")) {
    std::string v = as_str(*em, "model.embed_mode");
    if (v == "gap") {
      mc.mode = EmbedMode::gap;
    } else if (v == "flatten") {
      mc.mode = EmbedMode::flatten;
    } else {
      bad("model.embed_mode must be 'gap' or 'flatten', got '" + v + "'");
    }
  }
  if (const json* is = find(*node, "input_shape")) {
    if (!is->is_array() || is->size() != 3) bad("'model.input_shape' must be [channels, h, w]");
    for (int i = 0; i < 3; ++i) {
      int64_t v = as_int((*is)[i], "model.input_shape");
      if (v < 1) bad("model.input_shape entries must be >= 1");
      mc.input_shape[static_cast<size_t>(i)] = static_cast<int>(v);
    }
    mc.has_input_shape = true;
  }
  return mc;
}

SyntheticSpec parse_synthetic(const json& node) {
  if (!node.is_object()) bad("'data.source.synthetic' must be an object");
  expect_keys(node, "data.source.synthetic",
              {"n_per_class", "image_size", "noise_sigma", "seed", "blob", "stripes"});
  SyntheticSpec s;
  if (const json* v = find(node, "n_per_class")) {
    int64_t n = as_int(*v, "n_per_class");
    if (n < 1) bad("synthetic n_per_class must be >= 1");
    s.n_per_class = static_cast<int>(n);
  }
  if (const json* v = find(node, "image_size")) {
    int64_t n = as_int(*v, "image_size");
    if (n < 8) bad("synthetic image_size must be >= 8");
    s.image_size = static_cast<int>(n);
  }
  if (const json* v = find(node, "noise_sigma")) {
    s.noise_sigma = as_num(*v, "noise_sigma");
    if (s.noise_sigma < 0) bad("synthetic noise_sigma must be >= 0");
  }
  if (const json* v = find(node, "seed")) s.seed = as_seed(*v, "data.source.synthetic.seed");
  if (const json* v = find(node, "blob")) {
    if (!v->is_object()) bad("'blob' must be an object");
    expect_keys(*v, "data.source.synthetic.blob", {"sigma", "center_jitter"});
    if (const json* f = find(*v, "sigma")) {
      s.blob.sigma = as_num(*f, "blob.sigma");
      if (s.blob.sigma <= 0) bad("blob.sigma must be > 0");
    }
    if (const json* f = find(*v, "center_jitter")) {
      s.blob.center_jitter = as_num(*f, "blob.center_jitter");
      if (s.blob.center_jitter < 0 || s.blob.center_jitter > 0.5)
        bad("blob.center_jitter must be in [0, 0.5]");
    }
  }
  if (const json* v = find(node, "stripes")) {
    if (!v->is_object()) bad("'stripes' must be an object");
    expect_keys(*v, "data.source.synthetic.stripes", {"cycles_min", "cycles_max"});
    if (const json* f = find(*v, "cycles_min")) s.stripes.cycles_min = as_num(*f, "cycles_min");
    if (const json* f = find(*v, "cycles_max")) s.stripes.cycles_max = as_num(*f, "cycles_max");
    if (s.stripes.cycles_min <= 0 || s.stripes.cycles_max < s.stripes.cycles_min)
      bad("stripes cycles must satisfy 0 < cycles_min <= cycles_max");
  }
  return s;
}

DataConfig parse_data(const json& node) {
  expect_keys(node, "data", {"source", "normalize", "split", "resize"});
  DataConfig dc;

  const json& source = require_object(node, "source", "data.source");
  expect_keys(source, "data.source", {"synthetic", "idx"});
  const json* synth = find(source, "synthetic");
  const json* idx = find(source, "idx");
  if ((synth != nullptr) == (idx != nullptr))
    bad("data.source needs exactly one of 'synthetic' or 'idx'");
  if (synth != nullptr) {
    dc.source = DataConfig::Source::synthetic;
    dc.synthetic = parse_synthetic(*synth);
  } else {
    dc.source = DataConfig::Source::idx;
    if (!idx->is_object()) bad("'data.source.idx' must be an object");
    expect_keys(*idx, "data.source.idx", {"images", "labels", "classes"});
    const json* images = find(*idx, "images");
    const json* labels = find(*idx, "labels");
    if (images == nullptr || labels == nullptr)
      bad("data.source.idx needs 'images' and 'labels' paths");
    dc.idx_images = as_str(*images, "data.source.idx.images");
    dc.idx_labels = as_str(*labels, "data.source.idx.labels");
    require_file(dc.idx_images, "data.source.idx.images");
    require_file(dc.idx_labels, "data.source.idx.labels");
    if (const json* cls = find(*idx, "classes")) {
      if (!cls->is_array() || cls->size() != 2) bad("'classes' must be a two-element array");
      for (int i = 0; i < 2; ++i) {
        int64_t v = as_int((*cls)[i], "classes");
        if (v < 0 || v > 255) bad("class labels must be in [0, 255]");
        dc.classes[static_cast<size_t>(i)] = static_cast<int>(v);
      }
      if (dc.classes[0] == dc.classes[1]) bad("the two filtered classes must differ");
    }
  }

  if (const json* norm = find(node, "normalize")) {
    if (!norm->is_object()) bad("'data.normalize' must be an object");
    expect_keys(*norm, "data.normalize", {"mode", "mean", "std"});
    std::string mode = "zero_one";
    if (const json* m = find(*norm, "mode")) mode = as_str(*m, "data.normalize.mode");
    if (mode == "zero_one") {
      dc.norm = NormMode::zero_one;
      if (find(*norm, "mean") != nullptr || find(*norm, "std") != nullptr)
        bad("'mean'/'std' only apply to normalize mode 'mean_std'");
    } else if (mode == "mean_std") {
      dc.norm = NormMode::mean_std;
      auto read_vec = [&](const char* key) {
        std::vector<double> out;
        if (const json* v = find(*norm, key)) {
          if (!v->is_array() || v->empty())
            bad(std::string("'data.normalize.") + key + "' must be a non-empty array");
          for (const json& e : *v) out.push_back(as_num(e, key));
        }
        return out;
      };
      dc.mean = read_vec("mean");
      dc.stddev = read_vec("std");
      for (double s : dc.stddev)
        if (s <= 0) bad("normalize std entries must be > 0");
    } else {
      bad("data.normalize.mode must be 'zero_one' or 'mean_std', got '" + mode + "'");
    }
  }

  if (const json* sp = find(node, "split")) {
    if (!sp->is_object()) bad("'data.split' must be an object");
    expect_keys(*sp, "data.split", {"fractions", "counts", "stratified", "seed"});
    const json* fr = find(*sp, "fractions");
    const json* ct = find(*sp, "counts");
    if (fr != nullptr && ct != nullptr) bad("data.split takes 'fractions' or 'counts', not both");
    if (fr != nullptr) {
      if (!fr->is_array() || fr->size() != 3)
        bad("'data.split.fractions' must be [train, val, test]");
      double f[3];
      for (int i = 0; i < 3; ++i) {
        f[i] = as_num((*fr)[i], "data.split.fractions");
        if (f[i] < 0) bad("split fractions must be >= 0");
      }
      if (std::fabs(f[0] + f[1] + f[2] - 1.0) > 1e-9) bad("split fractions must sum to 1");
      dc.split.train_frac = f[0];
      dc.split.val_frac = f[1];
      dc.split.test_frac = f[2];
    }
    if (ct != nullptr) {
      if (!ct->is_array() || ct->size() != 3) bad("'data.split.counts' must be [train, val, test]");
      dc.split.use_counts = true;
      int64_t* slots[3] = {&dc.split.train_count, &dc.split.val_count, &dc.split.test_count};
      for (int i = 0; i < 3; ++i) {
        int64_t v = as_int((*ct)[i], "data.split.counts");
        if (v < 0) bad("split counts must be >= 0");
        *slots[i] = v;
      }
    }
    if (const json* st = find(*sp, "stratified"))
      dc.split.stratified = as_bool(*st, "data.split.stratified");
    if (const json* sd = find(*sp, "seed")) dc.split.seed = as_seed(*sd, "data.split.seed");
  }

  if (const json* rs = find(node, "resize")) {
    if (!rs->is_array() || rs->size() != 2) bad("'data.resize' must be [height, width]");
    int64_t h = as_int((*rs)[0], "data.resize");
    int64_t w = as_int((*rs)[1], "data.resize");
    if (h < 1 || w < 1) bad("resize dimensions must be >= 1");
    dc.do_resize = true;
    dc.resize_h = static_cast<int>(h);
    dc.resize_w = static_cast<int>(w);
  }
  return dc;
}

void parse_contrastive_stage(const json& node, const std::string& where, bool allow_schedule,
                             ContrastiveStageConfig& out) {
  if (!node.is_object()) bad("'" + where + "' must be an object");
  if (allow_schedule) {
    expect_keys(node, where,
                {"epochs", "pairs_per_epoch", "batch_size", "learning_rate", "positive_fraction",
                 "schedule", "sampling", "anneal"});
  } else {
    expect_keys(node, where,
                {"epochs", "pairs_per_epoch", "batch_size", "learning_rate", "positive_fraction",
                 "sampling", "anneal"});
  }
  if (const json* v = find(node, "epochs")) {
    int64_t e = as_int(*v, where + ".epochs");
    if (e < 0) bad(where + ".epochs must be >= 0");
    out.epochs = static_cast<int>(e);
  }
  if (const json* v = find(node, "pairs_per_epoch")) {
    int64_t p = as_int(*v, where + ".pairs_per_epoch");
    if (p < 0) bad(where + ".pairs_per_epoch must be >= 0");
    out.pairs_per_epoch = p;
  }
  if (const json* v = find(node, "batch_size")) {
    int64_t b = as_int(*v, where + ".batch_size");
    if (b < 1) bad(where + ".batch_size must be >= 1");
    out.batch_size = static_cast<int>(b);
  }
  if (const json* v = find(node, "learning_rate")) {
    double lr = as_num(*v, where + ".learning_rate");
    if (lr < 0) bad(where + ".learning_rate must be >= 0");
    out.lr = static_cast<float>(lr);
  }
  if (const json* v = find(node, "positive_fraction")) {
    out.positive_fraction = as_num(*v, where + ".positive_fraction");
    if (out.positive_fraction < 0 || out.positive_fraction > 1)
      bad(where + ".positive_fraction must be in [0, 1]");
  }
  if (allow_schedule) {
    if (const json* v = find(node, "schedule")) {
      std::string s = as_str(*v, where + ".schedule");
      try {
        out.schedule = local_schedule_from_name(s);
      } catch (const Error& e) {
        bad(where + ".schedule: " + e.what());
      }
    }
  }
  if (const json* v = find(node, "sampling")) {
    std::string s = as_str(*v, where + ".sampling");
    try {
      out.sampling = pair_policy_from_name(s);
    } catch (const Error& e) {
      bad(where + ".sampling: " + e.what());
    }
  }
  if (const json* v = find(node, "anneal")) out.anneal = as_bool(*v, where + ".anneal");
}

void parse_finetune(const json& node, FinetuneConfig& out) {
  if (!node.is_object()) bad("'stages.finetune' must be an object");
  expect_keys(node, "stages.finetune", {"epochs", "batch_size", "learning_rate"});
  if (const json* v = find(node, "epochs")) {
    int64_t e = as_int(*v, "stages.finetune.epochs");
    if (e < 0) bad("stages.finetune.epochs must be >= 0");
    out.epochs = static_cast<int>(e);
  }
  if (const json* v = find(node, "batch_size")) {
    int64_t b = as_int(*v, "stages.finetune.batch_size");
    if (b < 1) bad("stages.finetune.batch_size must be >= 1");
    out.batch_size = static_cast<int>(b);
  }
  if (const json* v = find(node, "learning_rate")) {
    double lr = as_num(*v, "stages.finetune.learning_rate");
    if (lr < 0) bad("stages.finetune.learning_rate must be >= 0");
    out.lr = static_cast<float>(lr);
  }
}

json block_to_json(const BlockSpec& b) {
  json j;
  j["kind"] = block_kind_name(b.kind);
  j["out_channels"] = b.out_channels;
  j["kernel"] = b.kernel;
  j["stride"] = b.stride;
  j["residual"] = b.use_residual;
  return j;
}

json stage_to_json(const ContrastiveStageConfig& c, bool with_schedule) {
  json j;
  j["epochs"] = c.epochs;
  j["pairs_per_epoch"] = c.pairs_per_epoch;
  j["batch_size"] = c.batch_size;
  j["learning_rate"] = static_cast<double>(c.lr);
  j["positive_fraction"] = c.positive_fraction;
  if (with_schedule) j["schedule"] = local_schedule_name(c.schedule);
  j["sampling"] = pair_policy_name(c.sampling);
  j["anneal"] = c.anneal;
  return j;
}

}  // namespace

std::string pipeline_mode_name(PipelineMode m) {
  switch (m) {
    case PipelineMode::RBP: return "RBP";
    case PipelineMode::LocalThenGlobal: return "LocalThenGlobal";
    case PipelineMode::GlobalThenLocal: return "GlobalThenLocal";
    case PipelineMode::GlobalOnly: return "GlobalOnly";
    case PipelineMode::LocalOnly: return "LocalOnly";
  }
  throw ValidationError("unhandled pipeline mode");
}

PipelineMode pipeline_mode_from_name(const std::string& name) {
  if (name == "RBP") return PipelineMode::RBP;
  if (name == "LocalThenGlobal") return PipelineMode::LocalThenGlobal;
  if (name == "GlobalThenLocal") return PipelineMode::GlobalThenLocal;
  if (name == "GlobalOnly") return PipelineMode::GlobalOnly;
  if (name == "LocalOnly") return PipelineMode::LocalOnly;
  throw ConfigError(
      "unknown pipeline mode '" + name +
      "' (expected RBP, LocalThenGlobal, GlobalThenLocal, GlobalOnly, or LocalOnly)");
}

std::vector<BlockSpec> default_backbone() {
  std::vector<BlockSpec> blocks;
  int channels[4] = {8, 16, 32, 64};
  for (int i = 0; i < 4; ++i) {
    BlockSpec b;
    b.kind = BlockSpec::Kind::conv;
    b.out_channels = channels[i];
    b.kernel = 3;
    b.stride = i == 0 ? 1 : 2;
    b.use_residual = false;
    blocks.push_back(b);
  }
  return blocks;
}

RunConfig parse_config_text(const std::string& text, const ConfigOverrides& ov,
                            const std::string& origin) {
  json root = json::parse(text, nullptr, false);
  if (root.is_discarded()) bad("invalid syntax in " + origin);
  if (!root.is_object()) bad("top level of " + origin + " must be an object");

  // Flag overrides behave exactly like edits to the document.
  if (ov.mode || ov.seed) {
    json& p = root["pipeline"];
    if (!p.is_object() && !p.is_null()) bad("'pipeline' must be an object");
    if (p.is_null()) p = json::object();
    if (ov.mode) p["mode"] = *ov.mode;
    if (ov.seed) p["seed"] = *ov.seed;
  }
  if (ov.out_dir) {
    json& o = root["output"];
    if (!o.is_object() && !o.is_null()) bad("'output' must be an object");
    if (o.is_null()) o = json::object();
    o["dir"] = *ov.out_dir;
  }

  expect_keys(root, "top level", {"model", "data", "stages", "pipeline", "output"});

  RunConfig cfg;
  cfg.model = parse_model(find(root, "model"));
  cfg.data = parse_data(require_object(root, "data", "data"));

  if (const json* stages = find(root, "stages")) {
    if (!stages->is_object()) bad("'stages' must be an object");
    expect_keys(*stages, "stages", {"local", "global", "finetune"});
    if (const json* v = find(*stages, "local"))
      parse_contrastive_stage(*v, "stages.local", true, cfg.local);
    if (const json* v = find(*stages, "global"))
      parse_contrastive_stage(*v, "stages.global", false, cfg.global);
    if (const json* v = find(*stages, "finetune")) parse_finetune(*v, cfg.finetune);
  }

  const json& pipe = require_object(root, "pipeline", "pipeline");
  expect_keys(pipe, "pipeline", {"mode", "seed", "init"});
  if (const json* m = find(pipe, "mode")) cfg.mode = pipeline_mode_from_name(as_str(*m, "pipeline.mode"));
  const json* seed = find(pipe, "seed");
  if (seed == nullptr) bad("pipeline.seed is required");
  cfg.seed = as_seed(*seed, "pipeline.seed");
  if (const json* init = find(pipe, "init")) {
    if (init->is_string()) {
      std::string v = init->get<std::string>();
      if (v != "random") bad("pipeline.init must be \"random\" or {\"warm_start\": path}");
    } else if (init->is_object()) {
      expect_keys(*init, "pipeline.init", {"warm_start"});
      const json* ws = find(*init, "warm_start");
      if (ws == nullptr) bad("pipeline.init object needs 'warm_start'");
      cfg.init.warm = true;
      cfg.init.warm_path = as_str(*ws, "pipeline.init.warm_start");
      require_file(cfg.init.warm_path, "pipeline.init.warm_start");
    } else {
      bad("pipeline.init must be \"random\" or {\"warm_start\": path}");
    }
  }

  const json& out = require_object(root, "output", "output");
  expect_keys(out, "output", {"dir"});
  const json* dir = find(out, "dir");
  if (dir == nullptr) bad("output.dir is required");
  cfg.out_dir = as_str(*dir, "output.dir");
  if (cfg.out_dir.empty()) bad("output.dir must not be empty");

  // Per-stage streams all derive from the one pipeline seed. Local and
  // global share theirs so both stages walk the identical pair sequence.
  cfg.local.seed = derive_seed(cfg.seed, "contrastive");
  cfg.global.seed = cfg.local.seed;
  cfg.finetune.seed = derive_seed(cfg.seed, "finetune");

  cfg.digest = to_hex(fnv1a64(canonical_config_json(cfg)));
  return cfg;
}

RunConfig parse_config_file(const std::string& path, const ConfigOverrides& ov) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config file not found: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), ov, path);
}

SyntheticSpec parse_synthetic_spec_text(const std::string& text, const std::string& origin) {
  json root = json::parse(text, nullptr, false);
  if (root.is_discarded()) bad("invalid syntax in " + origin);
  return parse_synthetic(root);
}

SyntheticSpec parse_synthetic_spec_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("generator spec file not found: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_synthetic_spec_text(buf.str(), path);
}

std::string canonical_config_json(const RunConfig& cfg) {
  json j;
  json model;
  json blocks = json::array();
  for (const BlockSpec& b : cfg.model.blocks) blocks.push_back(block_to_json(b));
  model["blocks"] = blocks;
  model["embed_mode"] = cfg.model.mode == EmbedMode::gap ? "gap" : "flatten";
  if (cfg.model.has_input_shape)
    model["input_shape"] = {cfg.model.input_shape[0], cfg.model.input_shape[1],
                            cfg.model.input_shape[2]};
  j["model"] = model;

  json data;
  if (cfg.data.source == DataConfig::Source::synthetic) {
    const SyntheticSpec& s = cfg.data.synthetic;
    data["source"]["synthetic"] = {
        {"n_per_class", s.n_per_class},
        {"image_size", s.image_size},
        {"noise_sigma", s.noise_sigma},
        {"seed", s.seed},
        {"blob", {{"sigma", s.blob.sigma}, {"center_jitter", s.blob.center_jitter}}},
        {"stripes", {{"cycles_min", s.stripes.cycles_min}, {"cycles_max", s.stripes.cycles_max}}}};
  } else {
    data["source"]["idx"] = {{"images", cfg.data.idx_images},
                             {"labels", cfg.data.idx_labels},
                             {"classes", {cfg.data.classes[0], cfg.data.classes[1]}}};
  }
  json norm;
  norm["mode"] = cfg.data.norm == NormMode::zero_one ? "zero_one" : "mean_std";
  if (cfg.data.norm == NormMode::mean_std) {
    norm["mean"] = cfg.data.mean;
    norm["std"] = cfg.data.stddev;
  }
  data["normalize"] = norm;
  json sp;
  if (cfg.data.split.use_counts) {
    sp["counts"] = {cfg.data.split.train_count, cfg.data.split.val_count,
                    cfg.data.split.test_count};
  } else {
    sp["fractions"] = {cfg.data.split.train_frac, cfg.data.split.val_frac,
                       cfg.data.split.test_frac};
  }
  sp["stratified"] = cfg.data.split.stratified;
  sp["seed"] = cfg.data.split.seed;
  data["split"] = sp;
  if (cfg.data.do_resize) data["resize"] = {cfg.data.resize_h, cfg.data.resize_w};
  j["data"] = data;

  json stages;
  stages["local"] = stage_to_json(cfg.local, true);
  stages["global"] = stage_to_json(cfg.global, false);
  stages["finetune"] = {{"epochs", cfg.finetune.epochs},
                        {"batch_size", cfg.finetune.batch_size},
                        {"learning_rate", static_cast<double>(cfg.finetune.lr)}};
  j["stages"] = stages;

  json pipe;
  pipe["mode"] = pipeline_mode_name(cfg.mode);
  pipe["seed"] = cfg.seed;
  if (cfg.init.warm) {
    pipe["init"] = {{"warm_start", cfg.init.warm_path}};
  } else {
    pipe["init"] = "random";
  }
  j["pipeline"] = pipe;
  j["output"] = {{"dir", cfg.out_dir}};
  return j.dump();
}

}  // namespace ffcl
