#include "ffcl/ffcl.h"

#include <array>
#include <cctype>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "core/config.hpp"
#include "core/data.hpp"
#include "core/digest.hpp"
#include "core/error.hpp"
#include "core/gradcheck.hpp"
#include "core/pipeline.hpp"
#include "json.hpp"

struct ffcl_config {
  std::string path;
  ffcl::ConfigOverrides overrides;
};

struct ffcl_result {
  ffcl_status status = FFCL_OK;
  std::string summary;
  std::string json;
};

namespace {

std::string& last_error() {
  thread_local std::string err;
  return err;
}

void set_error(const std::string& msg) { last_error() = msg; }

template <typename F>
ffcl_status guarded(F&& body) noexcept {
  try {
    ffcl_status s = body();
    if (s == FFCL_OK) last_error().clear();
    return s;
  } catch (const ffcl::ConfigError& e) {
    set_error(e.what());
    return FFCL_E_CONFIG;
  } catch (const ffcl::IoError& e) {
    set_error(e.what());
    return FFCL_E_IO;
  } catch (const std::exception& e) {
    set_error(e.what());
    return FFCL_E_RUNTIME;
  } catch (...) {
    set_error("unknown failure");
    return FFCL_E_RUNTIME;
  }
}

ffcl_status require(bool ok, const char* msg) {
  if (!ok) {
    set_error(msg);
    return FFCL_E_RUNTIME;
  }
  return FFCL_OK;
}

std::vector<ffcl::InitOption> parse_inits(const char* spec) {
  std::vector<ffcl::InitOption> out;
  std::string text = spec == nullptr ? "" : spec;
  if (text.empty()) text = "random";
  size_t pos = 0;
  int warm_count = 0;
  while (pos <= text.size()) {
    size_t comma = text.find(',', pos);
    std::string item =
        comma == std::string::npos ? text.substr(pos) : text.substr(pos, comma - pos);
    // trim spaces
    size_t a = item.find_first_not_of(" \t");
    size_t b = item.find_last_not_of(" \t");
    item = a == std::string::npos ? "" : item.substr(a, b - a + 1);
    if (!item.empty()) {
      ffcl::InitOption opt;
      if (item == "random") {
        opt.warm = false;
        opt.label = "random";
      } else if (item.rfind("warm:", 0) == 0) {
        opt.warm = true;
        opt.warm_path = item.substr(5);
        if (opt.warm_path.empty())
          throw ffcl::ConfigError("warm init needs a checkpoint path (warm:<path>)");
        ++warm_count;
        opt.label = warm_count == 1 ? "warm" : "warm" + std::to_string(warm_count);
      } else {
        throw ffcl::ConfigError("unknown init '" + item +
                                "' (expected 'random' or 'warm:<checkpoint path>')");
      }
      out.push_back(std::move(opt));
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (out.empty()) throw ffcl::ConfigError("init list is empty");
  return out;
}

ffcl_result* make_result(ffcl_status status, std::string summary, std::string machine) {
  auto* r = new ffcl_result;
  r->status = status;
  r->summary = std::move(summary);
  r->json = std::move(machine);
  return r;
}

void write_file_or_throw(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ffcl::IoError("cannot write file: " + path);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.flush();
  if (!out) throw ffcl::IoError("failed writing file: " + path);
}

}  // namespace

extern "C" {

const char* ffcl_version(void) { return "0.1.0"; }

const char* ffcl_last_error(void) { return last_error().c_str(); }

ffcl_status ffcl_config_open(const char* path, ffcl_config** out) {
  if (ffcl_status s = require(path != nullptr && out != nullptr, "null argument"); s != FFCL_OK)
    return s;
  *out = nullptr;
  return guarded([&]() {
    ffcl::parse_config_file(path);  // validate eagerly; overrides re-parse later
    *out = new ffcl_config{path, {}};
    return FFCL_OK;
  });
}

ffcl_status ffcl_config_set(ffcl_config* cfg, const char* key, const char* value) {
  if (ffcl_status s = require(cfg != nullptr && key != nullptr && value != nullptr,
                              "null argument");
      s != FFCL_OK)
    return s;
  return guarded([&]() {
    const std::string k = key;
    const std::string v = value;
    if (k == "mode") {
      ffcl::pipeline_mode_from_name(v);  // validates
      cfg->overrides.mode = v;
    } else if (k == "seed") {
      if (v.empty()) throw ffcl::ConfigError("seed must not be empty");
      for (char c : v)
        if (!std::isdigit(static_cast<unsigned char>(c)))
          throw ffcl::ConfigError("seed must be a non-negative integer, got '" + v + "'");
      cfg->overrides.seed = std::strtoull(v.c_str(), nullptr, 10);
    } else if (k == "out_dir") {
      if (v.empty()) throw ffcl::ConfigError("out_dir must not be empty");
      cfg->overrides.out_dir = v;
    } else {
      throw ffcl::ConfigError("unknown override key '" + k +
                              "' (expected mode, seed, or out_dir)");
    }
    return FFCL_OK;
  });
}

void ffcl_config_close(ffcl_config* cfg) { delete cfg; }

ffcl_status ffcl_run(ffcl_config* cfg, ffcl_result** out) {
  if (ffcl_status s = require(cfg != nullptr && out != nullptr, "null argument"); s != FFCL_OK)
    return s;
  *out = nullptr;
  return guarded([&]() {
    ffcl::RunConfig rc = ffcl::parse_config_file(cfg->path, cfg->overrides);
    ffcl::RunResult rr = ffcl::run_pipeline(rc);
    std::string summary = ffcl::render_manifest_summary(rr.manifest);
    summary += "\n" + ffcl::render_metrics_summary(rr.metrics);
    summary += "output: " + rr.out_dir + "\n";
    *out = make_result(FFCL_OK, std::move(summary), ffcl::manifest_to_json_string(rr.manifest));
    return FFCL_OK;
  });
}

ffcl_status ffcl_ablate(ffcl_config* cfg, const char* inits, int jobs, ffcl_result** out) {
  if (ffcl_status s = require(cfg != nullptr && out != nullptr, "null argument"); s != FFCL_OK)
    return s;
  *out = nullptr;
  return guarded([&]() {
    ffcl::RunConfig rc = ffcl::parse_config_file(cfg->path, cfg->overrides);
    std::vector<ffcl::InitOption> init_options = parse_inits(inits);
    ffcl::GridResult grid = ffcl::ablation_grid(rc, init_options, jobs);

    std::string summary = ffcl::render_grid_table(grid.rows);
    summary += "\ngrid written to " + grid.csv_path + "\n";
    for (const ffcl::GridRow& row : grid.rows) {
      if (!row.ok)
        summary += "failed: " + ffcl::pipeline_mode_name(row.mode) + " / " + row.init_label +
                   ": " + row.error + "\n";
    }

    nlohmann::json rows = nlohmann::json::array();
    for (const ffcl::GridRow& row : grid.rows) {
      nlohmann::json r;
      r["mode"] = ffcl::pipeline_mode_name(row.mode);
      r["approach"] = ffcl::mode_approach_label(row.mode);
      r["contrastive"] = ffcl::mode_contrastive_label(row.mode);
      r["initialization"] = row.init_label;
      r["ok"] = row.ok;
      r["out_dir"] = row.out_dir;
      if (row.ok) {
        r["metrics"] = {{"accuracy", row.metrics.accuracy},
                        {"f1", row.metrics.macro_f1},
                        {"precision", row.metrics.macro_precision},
                        {"recall", row.metrics.macro_recall},
                        {"auc", row.metrics.roc_auc},
                        {"split_digest", row.metrics.split_digest}};
      } else {
        r["error"] = row.error;
      }
      rows.push_back(std::move(r));
    }
    nlohmann::json doc;
    doc["schema"] = "ffcl-grid/1";
    doc["dataset_digest"] = grid.dataset_digest;
    doc["all_ok"] = grid.all_ok;
    doc["rows"] = rows;

    ffcl_status status = grid.all_ok ? FFCL_OK : FFCL_E_PARTIAL;
    *out = make_result(status, std::move(summary), doc.dump(2) + "\n");
    if (!grid.all_ok) set_error("some grid rows failed; see the result summary");
    return status;
  });
}

ffcl_status ffcl_gradcheck(uint64_t seed, const char* inject_fault, ffcl_result** out) {
  if (ffcl_status s = require(out != nullptr, "null argument"); s != FFCL_OK) return s;
  *out = nullptr;
  return guarded([&]() {
    const std::string fault = inject_fault == nullptr ? "" : inject_fault;
    ffcl::GradReport report = ffcl::run_gradcheck_suite(seed, fault);

    nlohmann::json checks = nlohmann::json::array();
    for (const ffcl::GradCheckEntry& e : report.entries) {
      checks.push_back({{"name", e.name},
                        {"rel_err", e.rel_err},
                        {"probes", e.probes},
                        {"pass", e.pass}});
    }
    nlohmann::json doc;
    doc["schema"] = "ffcl-gradcheck/1";
    doc["seed"] = seed;
    doc["injected_fault"] = fault;
    doc["tolerance"] = report.tol;
    doc["max_rel_err"] = report.max_rel_err;
    doc["elapsed_s"] = report.elapsed_s;
    doc["pass"] = report.pass;
    doc["checks"] = checks;

    ffcl_status status = report.pass ? FFCL_OK : FFCL_E_RUNTIME;
    *out = make_result(status, ffcl::render_grad_report(report), doc.dump(2) + "\n");
    if (!report.pass) set_error("gradient check failed; see the result summary");
    return status;
  });
}

ffcl_status ffcl_datagen(const char* spec_path, const char* out_dir, ffcl_result** out) {
  if (ffcl_status s = require(spec_path != nullptr && out_dir != nullptr && out != nullptr,
                              "null argument");
      s != FFCL_OK)
    return s;
  *out = nullptr;
  return guarded([&]() {
    ffcl::SyntheticSpec spec = ffcl::parse_synthetic_spec_file(spec_path);
    ffcl::Dataset ds = ffcl::gen_synthetic(spec);

    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw ffcl::IoError(std::string("cannot create output directory: ") + out_dir);
    const std::string images = (fs::path(out_dir) / "images.idx").string();
    const std::string labels = (fs::path(out_dir) / "labels.idx").string();
    ffcl::save_idx(ds, images, labels);

    const std::array<int, 3> shape = ds.image_shape();
    nlohmann::json doc;
    doc["schema"] = "ffcl-dataset/1";
    doc["digest"] = ds.digest_hex();
    doc["count"] = ds.size();
    doc["shape"] = {shape[0], shape[1], shape[2]};
    doc["images"] = "images.idx";
    doc["labels"] = "labels.idx";
    const std::string doc_text = doc.dump(2) + "\n";
    write_file_or_throw((fs::path(out_dir) / "digest.json").string(), doc_text);

    std::string summary = "generated " + std::to_string(ds.size()) + " images (" +
                          std::to_string(shape[0]) + "x" + std::to_string(shape[1]) + "x" +
                          std::to_string(shape[2]) + "), digest " + ds.digest_hex() + "\n" +
                          "wrote " + images + ", " + labels + "\n";
    *out = make_result(FFCL_OK, std::move(summary), doc_text);
    return FFCL_OK;
  });
}

ffcl_status ffcl_render(const char* path, ffcl_result** out) {
  if (ffcl_status s = require(path != nullptr && out != nullptr, "null argument"); s != FFCL_OK)
    return s;
  *out = nullptr;
  return guarded([&]() {
    *out = make_result(FFCL_OK, ffcl::render_report(path), "");
    return FFCL_OK;
  });
}

const char* ffcl_result_summary(const ffcl_result* res) {
  return res == nullptr ? "" : res->summary.c_str();
}

const char* ffcl_result_json(const ffcl_result* res) {
  return res == nullptr ? "" : res->json.c_str();
}

ffcl_status ffcl_result_status(const ffcl_result* res) {
  return res == nullptr ? FFCL_E_RUNTIME : res->status;
}

void ffcl_result_close(ffcl_result* res) { delete res; }

}  // extern "C"
