#include "core/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include "core/digest.hpp"
#include "core/error.hpp"
#include "core/optim.hpp"
#include "core/rng.hpp"
#include "json.hpp"

namespace ffcl {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write file: " + path);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.flush();
  if (!out) throw IoError("failed writing file: " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string fmt_loss(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

double accuracy_on(const BlockStack& stack, const ClassifierHead& head, const Dataset& ds,
                   double threshold) {
  std::vector<double> scores = score_dataset(stack, head, ds);
  if (scores.empty()) throw ValidationError("cannot compute accuracy of an empty split");
  int correct = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    int pred = scores[i] >= threshold ? 1 : 0;
    correct += pred == ds.labels[i] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(scores.size());
}

// Output directory contract shared by run and grid: absent -> created,
// empty directory -> reused, anything else -> refused.
void claim_output_dir(const std::string& dir) {
  std::error_code ec;
  fs::path p(dir);
  if (fs::exists(p, ec)) {
    if (!fs::is_directory(p, ec)) throw IoError("output path is not a directory: " + dir);
    if (!fs::is_empty(p, ec)) throw IoError("output directory is not empty: " + dir);
  } else {
    fs::create_directories(p, ec);
    if (ec) throw IoError("cannot create output directory: " + dir + " (" + ec.message() + ")");
  }
}

void check_warm_compat(const BlockStack& loaded, const RunConfig& cfg,
                       const std::array<int, 3>& data_shape) {
  const std::vector<BlockSpec> want = cfg.model.blocks;
  const std::vector<BlockSpec> got = loaded.specs();
  bool same = got.size() == want.size();
  for (size_t i = 0; same && i < got.size(); ++i) {
    same = got[i].kind == want[i].kind && got[i].out_channels == want[i].out_channels &&
           got[i].kernel == want[i].kernel && got[i].stride == want[i].stride &&
           got[i].use_residual == want[i].use_residual;
  }
  if (!same) throw ConfigError("warm-start checkpoint architecture does not match model.blocks");
  if (loaded.input_shape() != data_shape)
    throw ConfigError("warm-start checkpoint input shape does not match the dataset");
  if (loaded.embed_mode() != cfg.model.mode)
    throw ConfigError("warm-start checkpoint embed mode does not match model.embed_mode");
}

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string align_table(const std::vector<std::vector<std::string>>& rows) {
  std::vector<size_t> width;
  for (const auto& row : rows) {
    if (width.size() < row.size()) width.resize(row.size(), 0);
    for (size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::string out;
  for (const auto& row : rows) {
    std::string line;
    for (size_t c = 0; c < row.size(); ++c) {
      line += row[c];
      if (c + 1 < row.size()) line += std::string(width[c] - row[c].size() + 2, ' ');
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line;
    out += '\n';
  }
  return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  cells.push_back(cur);
  return cells;
}

std::string render_metrics_text(const MetricsReport& m) {
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"accuracy", format_percent(m.accuracy)});
  rows.push_back({"precision", format_percent(m.macro_precision)});
  rows.push_back({"recall", format_percent(m.macro_recall)});
  rows.push_back({"f1", format_percent(m.macro_f1)});
  rows.push_back({"auc", format_percent(m.roc_auc)});
  char head[96];
  std::snprintf(head, sizeof(head), "test metrics (%lld samples, threshold %.2f)",
                static_cast<long long>(m.sample_count), m.threshold);
  std::string out(head);
  out += '\n';
  for (std::vector<std::string>& r : rows) r[0] = "  " + r[0];
  out += align_table(rows);
  if (!m.split_digest.empty()) out += "split digest " + m.split_digest + "\n";
  return out;
}

std::string render_manifest_text(const RunManifest& m) {
  std::string out = "run " + m.run_id + "  mode " + m.mode + "  seed " + std::to_string(m.seed) +
                    "  status " + m.status + "\n";
  out += "config digest  " + m.config_digest + "\n";
  out += "dataset digest " + m.dataset_digest + "\n";
  out += "init checkpoint " + m.init_ckpt_id + "\n";
  if (!m.stages.empty()) {
    out += "stages:\n";
    std::vector<std::vector<std::string>> rows;
    for (const StageRecord& s : m.stages) {
      char wall[32], loss[32];
      std::snprintf(wall, sizeof(wall), "%.2fs", s.wall_s);
      std::snprintf(loss, sizeof(loss), "%.6g", s.final_loss);
      rows.push_back({"  " + s.stage, "in " + s.input_ckpt_id, "out " + s.output_ckpt_id,
                      "final loss " + std::string(loss), wall});
    }
    out += align_table(rows);
  }
  if (!m.metrics_path.empty()) out += "metrics: " + m.metrics_path + "\n";
  if (!m.error.empty()) out += "error: " + m.error + "\n";
  return out;
}

std::string render_grid_csv_text(const std::string& text, const std::string& path) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    rows.push_back(split_csv_line(line));
  }
  if (rows.empty()) throw IoError("grid file has no rows: " + path);
  return align_table(rows);
}

}  // namespace

PreparedData prepare_data(const DataConfig& dc) {
  Dataset ds;
  if (dc.source == DataConfig::Source::synthetic) {
    ds = gen_synthetic(dc.synthetic);
  } else {
    ds = load_idx(dc.idx_images, dc.idx_labels, {dc.classes[0], dc.classes[1]});
  }
  if (dc.do_resize) ds = resize(ds, dc.resize_h, dc.resize_w);
  ds = normalize(ds, dc.norm, dc.mean, dc.stddev);

  PreparedData out;
  out.dataset_digest = ds.digest_hex();
  out.image_shape = ds.image_shape();
  out.splits = split(ds, dc.split);
  return out;
}

int select_best_epoch(const std::vector<double>& val_accuracy) {
  int best = 0;
  double best_acc = -1.0;
  for (size_t i = 0; i < val_accuracy.size(); ++i) {
    if (val_accuracy[i] > best_acc) {
      best_acc = val_accuracy[i];
      best = static_cast<int>(i) + 1;
    }
  }
  return best;
}

std::vector<double> score_dataset(const BlockStack& stack, const ClassifierHead& head,
                                  const Dataset& ds) {
  NoGradGuard guard;
  constexpr int kEvalBatch = 64;
  std::vector<double> scores;
  scores.reserve(static_cast<size_t>(ds.size()));
  std::vector<int> idx;
  for (int lo = 0; lo < ds.size(); lo += kEvalBatch) {
    const int hi = std::min(ds.size(), lo + kEvalBatch);
    idx.resize(static_cast<size_t>(hi - lo));
    std::iota(idx.begin(), idx.end(), lo);
    Tensor p = classify(head, stack.embed_global(gather_images(ds, idx)));
    for (float v : p.data()) scores.push_back(static_cast<double>(v));
  }
  return scores;
}

FinetuneResult finetune_classify(BlockStack& stack, ClassifierHead& head, const Splits& splits,
                                 const FinetuneConfig& cfg) {
  if (cfg.epochs < 0) throw ConfigError("finetune epochs must be >= 0");
  if (cfg.batch_size < 1) throw ConfigError("finetune batch_size must be >= 1");
  const int ntrain = splits.train.size();
  if (ntrain == 0) throw ConfigError("finetune requires a non-empty training split");
  if (splits.val.size() == 0) throw ConfigError("finetune requires a non-empty validation split");
  if (splits.test.size() == 0) throw ConfigError("finetune requires a non-empty test split");

  std::vector<Tensor> params = stack.parameters();
  for (const Tensor& t : head.parameters()) params.push_back(t);

  AdamConfig acfg;
  acfg.lr = cfg.lr;
  Adam opt(params, acfg);
  const int batches = (ntrain + cfg.batch_size - 1) / cfg.batch_size;
  CosineSchedule sched(cfg.lr, 0.0, static_cast<int64_t>(cfg.epochs) * batches);
  RngStream shuffle_rng(derive_seed(cfg.seed, "shuffle"));

  FinetuneResult out;
  auto snapshot = [&params]() {
    std::vector<std::vector<float>> s;
    s.reserve(params.size());
    for (const Tensor& t : params) {
      std::span<const float> d = t.data();
      s.emplace_back(d.begin(), d.end());
    }
    return s;
  };
  std::vector<std::vector<float>> best = snapshot();
  double best_acc = -1.0;

  std::vector<int> order(static_cast<size_t>(ntrain));
  std::iota(order.begin(), order.end(), 0);
  int64_t step = 0;
  for (int e = 1; e <= cfg.epochs; ++e) {
    shuffle_rng.shuffle(order);
    for (int b = 0; b < batches; ++b) {
      const int lo = b * cfg.batch_size;
      const int hi = std::min(ntrain, lo + cfg.batch_size);
      std::span<const int> idx(order.data() + lo, static_cast<size_t>(hi - lo));
      Tensor x = gather_images(splits.train, idx);
      Tensor y = gather_label_tensor(splits.train, idx);
      Tensor loss = bce_loss(classify(head, stack.embed_global(x)), y);
      const double lv = static_cast<double>(loss.item());
      if (!std::isfinite(lv))
        throw TrainingError("finetune loss is not finite at epoch " + std::to_string(e) +
                            ", batch " + std::to_string(b + 1));
      out.curve.push_back({-1, e, b + 1, lv});
      backward(loss);
      opt.set_lr(static_cast<float>(sched.lr_at(step)));
      opt.step();
      ++step;
    }
    const double acc = accuracy_on(stack, head, splits.val, 0.5);
    out.val_accuracy.push_back(acc);
    if (acc > best_acc) {
      best_acc = acc;
      best = snapshot();
    }
  }
  out.best_epoch = select_best_epoch(out.val_accuracy);
  if (cfg.epochs > 0) {
    for (size_t i = 0; i < params.size(); ++i) {
      std::span<float> dst = params[i].data_mut();
      std::copy(best[i].begin(), best[i].end(), dst.begin());
    }
  }
  out.test_metrics = evaluate(score_dataset(stack, head, splits.test), splits.test.labels, 0.5,
                              splits.test.digest_hex());
  out.final_loss = out.curve.empty() ? 0.0 : out.curve.back().loss;
  return out;
}

std::vector<std::string> stage_sequence(PipelineMode mode) {
  switch (mode) {
    case PipelineMode::RBP: return {"finetune"};
    case PipelineMode::LocalThenGlobal: return {"local", "global", "finetune"};
    case PipelineMode::GlobalThenLocal: return {"global", "local", "finetune"};
    case PipelineMode::GlobalOnly: return {"global", "finetune"};
    case PipelineMode::LocalOnly: return {"local", "finetune"};
  }
  throw ValidationError("unhandled pipeline mode");
}

std::string manifest_to_json_string(const RunManifest& m) {
  json j;
  j["schema"] = "ffcl-manifest/1";
  j["run_id"] = m.run_id;
  j["config_digest"] = m.config_digest;
  j["mode"] = m.mode;
  j["seed"] = m.seed;
  j["dataset_digest"] = m.dataset_digest;
  j["init_checkpoint"] = m.init_ckpt_id;
  json stages = json::array();
  for (const StageRecord& s : m.stages) {
    stages.push_back({{"stage", s.stage},
                      {"input_checkpoint", s.input_ckpt_id},
                      {"output_checkpoint", s.output_ckpt_id},
                      {"wall_seconds", s.wall_s},
                      {"final_loss", s.final_loss}});
  }
  j["stages"] = stages;
  j["metrics_path"] = m.metrics_path;
  j["status"] = m.status;
  j["error"] = m.error;
  return j.dump(2) + "\n";
}

RunManifest manifest_from_json_string(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw IoError("manifest is not valid structured text");
  if (j.value("schema", "") != "ffcl-manifest/1")
    throw IoError("manifest has an unknown schema tag");
  RunManifest m;
  try {
    m.run_id = j.value("run_id", "");
    m.config_digest = j.value("config_digest", "");
    m.mode = j.value("mode", "");
    m.seed = j.value("seed", uint64_t{0});
    m.dataset_digest = j.value("dataset_digest", "");
    m.init_ckpt_id = j.value("init_checkpoint", "");
    if (j.contains("stages")) {
      for (const json& s : j.at("stages")) {
        StageRecord r;
        r.stage = s.value("stage", "");
        r.input_ckpt_id = s.value("input_checkpoint", "");
        r.output_ckpt_id = s.value("output_checkpoint", "");
        r.wall_s = s.value("wall_seconds", 0.0);
        r.final_loss = s.value("final_loss", 0.0);
        m.stages.push_back(r);
      }
    }
    m.metrics_path = j.value("metrics_path", "");
    m.status = j.value("status", "");
    m.error = j.value("error", "");
  } catch (const json::exception& e) {
    throw IoError(std::string("manifest fields are malformed: ") + e.what());
  }
  return m;
}

RunResult run_pipeline(const RunConfig& cfg) {
  claim_output_dir(cfg.out_dir);
  const fs::path out(cfg.out_dir);
  {
    std::error_code ec;
    fs::create_directories(out / "ckpt", ec);
    if (ec) throw IoError("cannot create checkpoint directory under " + cfg.out_dir);
  }

  RunManifest man;
  man.config_digest = cfg.digest;
  man.mode = pipeline_mode_name(cfg.mode);
  man.seed = cfg.seed;
  man.status = "failed";
  const uint64_t now_ns = static_cast<uint64_t>(
      std::chrono::duration_cast<std::chrono::nanoseconds>(
          std::chrono::system_clock::now().time_since_epoch())
          .count());
  man.run_id = to_hex(splitmix64(now_ns ^ fnv1a64(cfg.digest)));

  RunResult result;
  result.out_dir = cfg.out_dir;

  try {
    PreparedData data = prepare_data(cfg.data);
    man.dataset_digest = data.dataset_digest;
    if (cfg.model.has_input_shape && cfg.model.input_shape != data.image_shape)
      throw ConfigError("model.input_shape does not match the prepared dataset shape");

    BlockStack stack;
    CheckpointProvenance init_prov;
    init_prov.stage = "init";
    init_prov.seed = cfg.seed;
    init_prov.config_digest = cfg.digest;
    if (cfg.init.warm) {
      Checkpoint warm = load_checkpoint(cfg.init.warm_path);
      check_warm_compat(warm.stack, cfg, data.image_shape);
      stack = std::move(warm.stack);  // blocks only; the head is always fresh
      init_prov.parent = warm.prov.id;
    } else {
      stack = BlockStack::build(cfg.model.blocks, data.image_shape,
                                derive_seed(cfg.seed, "model"), cfg.model.mode);
    }

    std::string prev_path = (out / "ckpt" / "init.ffclckpt").string();
    std::string prev_id = save_checkpoint(prev_path, stack, nullptr, init_prov);
    man.init_ckpt_id = prev_id;

    for (const std::string& stage : stage_sequence(cfg.mode)) {
      // The checkpoint file, not the in-memory object, carries parameters
      // across stage boundaries.
      Checkpoint handoff = load_checkpoint(prev_path);
      stack = std::move(handoff.stack);

      StageRecord rec;
      rec.stage = stage;
      rec.input_ckpt_id = prev_id;
      const auto t0 = std::chrono::steady_clock::now();

      CheckpointProvenance prov;
      prov.stage = stage;
      prov.parent = prev_id;
      prov.config_digest = cfg.digest;
      const std::string ckpt_path = (out / "ckpt" / (stage + ".ffclckpt")).string();

      if (stage == "local" || stage == "global") {
        StageOutput so = stage == "local" ? local_pretrain(stack, data.splits.train, cfg.local)
                                          : global_pretrain(stack, data.splits.train, cfg.global);
        prov.seed = stage == "local" ? cfg.local.seed : cfg.global.seed;
        write_text_file((out / ("loss_" + stage + ".csv")).string(),
                        render_loss_csv(stage, so.curve));
        rec.final_loss = so.final_loss;
        prev_id = save_checkpoint(ckpt_path, stack, nullptr, prov);
      } else {
        ClassifierHead head = ClassifierHead::init(stack.embed_dim(), derive_seed(cfg.seed, "head"));
        FinetuneResult fr = finetune_classify(stack, head, data.splits, cfg.finetune);
        prov.seed = cfg.finetune.seed;
        write_text_file((out / "loss_finetune.csv").string(),
                        render_loss_csv("finetune", fr.curve));
        write_text_file((out / "metrics.json").string(),
                        metrics_to_json_string(fr.test_metrics));
        man.metrics_path = "metrics.json";
        rec.final_loss = fr.final_loss;
        prev_id = save_checkpoint(ckpt_path, stack, &head, prov);
        result.metrics = fr.test_metrics;
      }
      prev_path = ckpt_path;
      rec.output_ckpt_id = prev_id;
      rec.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      man.stages.push_back(rec);
    }
    man.status = "ok";
  } catch (const std::exception& e) {
    man.error = e.what();
    try {
      write_text_file((out / "manifest.json").string(), manifest_to_json_string(man));
    } catch (...) {
      // the original failure is the one worth reporting
    }
    throw;
  }

  write_text_file((out / "manifest.json").string(), manifest_to_json_string(man));
  result.manifest = man;
  return result;
}

GridResult ablation_grid(const RunConfig& base, const std::vector<InitOption>& inits, int jobs) {
  if (inits.empty()) throw ConfigError("ablation grid needs at least one initialization option");
  for (size_t i = 0; i < inits.size(); ++i) {
    if (inits[i].label.empty()) throw ConfigError("initialization labels must not be empty");
    for (size_t k = i + 1; k < inits.size(); ++k)
      if (inits[i].label == inits[k].label)
        throw ConfigError("duplicate initialization label '" + inits[i].label + "'");
    if (inits[i].warm && !fs::exists(inits[i].warm_path))
      throw ConfigError("warm-start checkpoint not found: " + inits[i].warm_path);
  }
  claim_output_dir(base.out_dir);

  const PipelineMode modes[5] = {PipelineMode::RBP, PipelineMode::LocalThenGlobal,
                                 PipelineMode::GlobalThenLocal, PipelineMode::GlobalOnly,
                                 PipelineMode::LocalOnly};
  GridResult grid;
  std::vector<RunConfig> cfgs;
  for (PipelineMode mode : modes) {
    for (const InitOption& init : inits) {
      GridRow row;
      row.mode = mode;
      row.init_label = init.label;
      RunConfig c = base;
      c.mode = mode;
      c.init.warm = init.warm;
      c.init.warm_path = init.warm_path;
      c.out_dir = (fs::path(base.out_dir) / (lower(pipeline_mode_name(mode)) + "_" + init.label))
                      .string();
      c.digest = to_hex(fnv1a64(canonical_config_json(c)));
      row.out_dir = c.out_dir;
      grid.rows.push_back(row);
      cfgs.push_back(std::move(c));
    }
  }

  std::vector<std::string> row_dataset(grid.rows.size());
  std::atomic<size_t> next{0};
  auto worker = [&]() {
    for (size_t i = next.fetch_add(1); i < cfgs.size(); i = next.fetch_add(1)) {
      GridRow& row = grid.rows[i];
      try {
        RunResult rr = run_pipeline(cfgs[i]);
        row.ok = true;
        row.metrics = rr.metrics;
        row_dataset[i] = rr.manifest.dataset_digest;
      } catch (const std::exception& e) {
        row.ok = false;
        row.error = e.what();
      }
    }
  };
  const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(cfgs.size())));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    for (int i = 0; i < workers; ++i) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  grid.all_ok = true;
  for (const GridRow& row : grid.rows) grid.all_ok = grid.all_ok && row.ok;
  for (const std::string& d : row_dataset) {
    if (!d.empty()) {
      grid.dataset_digest = d;
      break;
    }
  }
  grid.csv_path = (fs::path(base.out_dir) / "grid.csv").string();
  write_text_file(grid.csv_path, render_grid_csv(grid.rows));
  return grid;
}

std::string mode_approach_label(PipelineMode m) {
  return m == PipelineMode::RBP ? "RBP" : "FFCL";
}

std::string mode_contrastive_label(PipelineMode m) {
  switch (m) {
    case PipelineMode::RBP: return "-";
    case PipelineMode::LocalThenGlobal: return "Local->Global";
    case PipelineMode::GlobalThenLocal: return "Global->Local";
    case PipelineMode::GlobalOnly: return "Global only";
    case PipelineMode::LocalOnly: return "Local only";
  }
  throw ValidationError("unhandled pipeline mode");
}

std::string render_loss_csv(const std::string& stage_tag, const std::vector<LossRow>& rows) {
  std::string out = "stage,block,epoch,batch,loss\n";
  for (const LossRow& r : rows) {
    out += stage_tag;
    out += ',';
    out += std::to_string(r.block);
    out += ',';
    out += std::to_string(r.epoch);
    out += ',';
    out += std::to_string(r.batch);
    out += ',';
    out += fmt_loss(r.loss);
    out += '\n';
  }
  return out;
}

std::string render_grid_csv(const std::vector<GridRow>& rows) {
  std::string out = "approach,contrastive,initialization,accuracy,f1,precision,recall,auc\n";
  for (const GridRow& r : rows) {
    out += mode_approach_label(r.mode) + "," + mode_contrastive_label(r.mode) + "," + r.init_label;
    if (r.ok) {
      const MetricsReport& m = r.metrics;
      out += "," + format_percent(m.accuracy) + "," + format_percent(m.macro_f1) + "," +
             format_percent(m.macro_precision) + "," + format_percent(m.macro_recall) + "," +
             format_percent(m.roc_auc);
    } else {
      out += ",-,-,-,-,-";
    }
    out += '\n';
  }
  return out;
}

std::string render_grid_table(const std::vector<GridRow>& rows) {
  return render_grid_csv_text(render_grid_csv(rows), "<grid>");
}

std::string render_metrics_summary(const MetricsReport& m) { return render_metrics_text(m); }

std::string render_manifest_summary(const RunManifest& m) { return render_manifest_text(m); }

std::string render_report(const std::string& path) {
  const std::string text = read_text_file(path);
  const size_t first = text.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) throw IoError("report file is empty: " + path);
  if (text[first] == '{') {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object())
      throw IoError("report file is not valid structured text: " + path);
    const std::string schema = j.value("schema", "");
    if (schema == "ffcl-metrics/1") return render_metrics_text(metrics_from_json_string(text));
    if (schema == "ffcl-manifest/1") return render_manifest_text(manifest_from_json_string(text));
    throw IoError("unrecognized report schema '" + schema + "' in " + path);
  }
  if (text.compare(first, 9, "approach,") == 0) return render_grid_csv_text(text, path);
  throw IoError("unrecognized report file: " + path);
}

}  // namespace ffcl
