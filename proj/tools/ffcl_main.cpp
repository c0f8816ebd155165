// ffcl command line: thin shell over the shared library's C interface.
// Exit codes: 0 ok, 2 config error, 3 runtime failure, 4 I/O failure,
// 5 grid finished with failed rows.

#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "ffcl/ffcl.h"

namespace {

int report_failure(ffcl_status status) {
  std::fprintf(stderr, "error: %s\n", ffcl_last_error());
  return static_cast<int>(status);
}

// Prints the result summary (when present) and releases the handles.
int finish(ffcl_config* cfg, ffcl_result* res, ffcl_status status) {
  if (res != nullptr) {
    const char* summary = ffcl_result_summary(res);
    if (summary[0] != '\0') std::fputs(summary, stdout);
  }
  int code = static_cast<int>(status);
  if (status != FFCL_OK) std::fprintf(stderr, "error: %s\n", ffcl_last_error());
  ffcl_result_close(res);
  ffcl_config_close(cfg);
  return code;
}

ffcl_status apply_overrides(ffcl_config* cfg, const std::optional<std::string>& mode,
                            const std::optional<uint64_t>& seed,
                            const std::optional<std::string>& out_dir) {
  ffcl_status s = FFCL_OK;
  if (mode && s == FFCL_OK) s = ffcl_config_set(cfg, "mode", mode->c_str());
  if (seed && s == FFCL_OK) s = ffcl_config_set(cfg, "seed", std::to_string(*seed).c_str());
  if (out_dir && s == FFCL_OK) s = ffcl_config_set(cfg, "out_dir", out_dir->c_str());
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deterministic two-class training pipelines (local + global "
               "contrastive pretraining, supervised finetuning)"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("ffcl ") + ffcl_version());

  std::string config_path, mode_str, out_dir_str, inits = "random";
  std::string spec_path, datagen_out, report_path, inject_fault;
  uint64_t seed_val = 0;
  int jobs = 1;

  CLI::App* run = app.add_subcommand("run", "execute one configured pipeline");
  run->add_option("--config", config_path, "config file (JSON)")->required();
  CLI::Option* run_mode = run->add_option("--mode", mode_str, "override pipeline.mode");
  CLI::Option* run_seed = run->add_option("--seed", seed_val, "override pipeline.seed");
  CLI::Option* run_out = run->add_option("--out", out_dir_str, "override output.dir");

  CLI::App* ablate = app.add_subcommand("ablate", "run the five-mode comparison grid");
  ablate->add_option("--config", config_path, "config file (JSON)")->required();
  ablate->add_option("--inits", inits,
                     "comma list of initializations: random, warm:<checkpoint>");
  ablate->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
  CLI::Option* ab_seed = ablate->add_option("--seed", seed_val, "override pipeline.seed");
  CLI::Option* ab_out = ablate->add_option("--out", out_dir_str, "override output.dir");

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  gradcheck->add_option("--seed", seed_val, "probe seed")->default_val(42);
  gradcheck->add_option("--inject-fault", inject_fault, "perturb one named check")
      ->group("");  // hidden: test hook

  CLI::App* datagen = app.add_subcommand("datagen", "generate a synthetic image set");
  datagen->add_option("--spec", spec_path, "generator spec file (JSON)")->required();
  datagen->add_option("--out", datagen_out, "output directory")->required();

  CLI::App* report = app.add_subcommand("report", "pretty-print a produced artifact");
  report->add_option("file", report_path, "metrics.json, manifest.json, or grid.csv")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;  // usage problems are config problems
  }

  if (app.got_subcommand(run) || app.got_subcommand(ablate)) {
    const bool is_run = app.got_subcommand(run);
    ffcl_config* cfg = nullptr;
    ffcl_status s = ffcl_config_open(config_path.c_str(), &cfg);
    if (s != FFCL_OK) return report_failure(s);

    std::optional<std::string> mode, out_dir;
    std::optional<uint64_t> seed;
    if (is_run) {
      if (run_mode->count() > 0) mode = mode_str;
      if (run_seed->count() > 0) seed = seed_val;
      if (run_out->count() > 0) out_dir = out_dir_str;
    } else {
      if (ab_seed->count() > 0) seed = seed_val;
      if (ab_out->count() > 0) out_dir = out_dir_str;
    }
    s = apply_overrides(cfg, mode, seed, out_dir);
    if (s != FFCL_OK) {
      ffcl_config_close(cfg);
      return report_failure(s);
    }

    ffcl_result* res = nullptr;
    s = is_run ? ffcl_run(cfg, &res) : ffcl_ablate(cfg, inits.c_str(), jobs, &res);
    return finish(cfg, res, s);
  }

  if (app.got_subcommand(gradcheck)) {
    ffcl_result* res = nullptr;
    const char* fault = inject_fault.empty() ? nullptr : inject_fault.c_str();
    ffcl_status s = ffcl_gradcheck(seed_val, fault, &res);
    return finish(nullptr, res, s);
  }

  if (app.got_subcommand(datagen)) {
    ffcl_result* res = nullptr;
    ffcl_status s = ffcl_datagen(spec_path.c_str(), datagen_out.c_str(), &res);
    return finish(nullptr, res, s);
  }

  if (app.got_subcommand(report)) {
    ffcl_result* res = nullptr;
    ffcl_status s = ffcl_render(report_path.c_str(), &res);
    return finish(nullptr, res, s);
  }
  return 2;  // require_subcommand(1) makes this unreachable
}
