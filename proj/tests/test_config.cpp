#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "core/checkpoint.hpp"
#include "core/config.hpp"
#include "core/error.hpp"
#include "core/rng.hpp"
#include "doctest.h"

using namespace ffcl;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("ffcl_cfg_test_" + std::to_string(::getpid()) + "_" +
                                        std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { std::error_code ec; fs::remove_all(path, ec); }
  std::string file(const char* name) const { return (path / name).string(); }
  static int counter;
};
int TempDir::counter = 0;

const char* kMinimal = R"({
  "data": {"source": {"synthetic": {"n_per_class": 10, "image_size": 8}}},
  "pipeline": {"seed": 7},
  "output": {"dir": "out"}
})";

}  // namespace

TEST_CASE("minimal config resolves every default") {
  RunConfig cfg = parse_config_text(kMinimal);
  CHECK(cfg.mode == PipelineMode::LocalThenGlobal);
  CHECK(cfg.seed == 7);
  CHECK(cfg.out_dir == "out");
  CHECK_FALSE(cfg.init.warm);

  // stand-in backbone: 4 conv blocks, 8/16/32/64, stride 2 from the second
  REQUIRE(cfg.model.blocks.size() == 4);
  CHECK(cfg.model.blocks[0].out_channels == 8);
  CHECK(cfg.model.blocks[3].out_channels == 64);
  CHECK(cfg.model.blocks[0].stride == 1);
  CHECK(cfg.model.blocks[1].stride == 2);
  CHECK(cfg.model.mode == EmbedMode::gap);

  // stage defaults
  CHECK(cfg.local.epochs == 5);
  CHECK(cfg.local.batch_size == 10);
  CHECK(cfg.local.lr == 1e-4f);
  CHECK(cfg.local.positive_fraction == 0.5);
  CHECK(cfg.local.schedule == LocalSchedule::joint);
  CHECK(cfg.local.sampling == PairPolicy::label_aware);
  CHECK(cfg.global.epochs == 5);
  CHECK(cfg.finetune.epochs == 100);
  CHECK(cfg.finetune.batch_size == 10);
  CHECK(cfg.finetune.lr == 1e-4f);

  // data defaults
  CHECK(cfg.data.source == DataConfig::Source::synthetic);
  CHECK(cfg.data.norm == NormMode::zero_one);
  CHECK(cfg.data.split.train_frac == 0.6);
  CHECK(cfg.data.split.stratified);
  CHECK_FALSE(cfg.data.do_resize);

  // stage seeds all derive from the pipeline seed; the two contrastive
  // stages share one stream so they walk identical pair sequences
  CHECK(cfg.local.seed == derive_seed(7, "contrastive"));
  CHECK(cfg.global.seed == cfg.local.seed);
  CHECK(cfg.finetune.seed == derive_seed(7, "finetune"));

  CHECK(!cfg.digest.empty());
}

TEST_CASE("strictness: unknown keys are rejected everywhere") {
  CHECK_THROWS_AS(parse_config_text(R"({"bogus": 1, "data": {"source": {"synthetic": {}}},
    "pipeline": {"seed": 1}, "output": {"dir": "o"}})"),
                  ConfigError);
  CHECK_THROWS_AS(parse_config_text(R"({"data": {"source": {"synthetic": {}}, "oops": 2},
    "pipeline": {"seed": 1}, "output": {"dir": "o"}})"),
                  ConfigError);
  CHECK_THROWS_AS(parse_config_text(R"({"data": {"source": {"synthetic": {"wat": 0}}},
    "pipeline": {"seed": 1}, "output": {"dir": "o"}})"),
                  ConfigError);
  CHECK_THROWS_AS(parse_config_text(R"({"data": {"source": {"synthetic": {}}},
    "stages": {"local": {"epochs": 1, "zzz": 3}}, "pipeline": {"seed": 1},
    "output": {"dir": "o"}})"),
                  ConfigError);
  // schedule applies to the local stage only
  CHECK_THROWS_AS(parse_config_text(R"({"data": {"source": {"synthetic": {}}},
    "stages": {"global": {"schedule": "joint"}}, "pipeline": {"seed": 1},
    "output": {"dir": "o"}})"),
                  ConfigError);
}

TEST_CASE("required fields: seed, output dir, data section") {
  CHECK_THROWS_AS(parse_config_text(R"({"data": {"source": {"synthetic": {}}},
    "pipeline": {}, "output": {"dir": "o"}})"),
                  ConfigError);
  CHECK_THROWS_AS(parse_config_text(R"({"data": {"source": {"synthetic": {}}},
    "pipeline": {"seed": 1}, "output": {}})"),
                  ConfigError);
  CHECK_THROWS_AS(parse_config_text(R"({"pipeline": {"seed": 1}, "output": {"dir": "o"}})"),
                  ConfigError);
  CHECK_THROWS_AS(parse_config_text("{ not json"), ConfigError);
  CHECK_THROWS_AS(parse_config_text(R"("just a string")"), ConfigError);
}

TEST_CASE("field validation") {
  auto cfg_with = [](const std::string& body) {
    return std::string(R"({"data": {"source": {"synthetic": {}}}, )") + body +
           R"(, "pipeline": {"seed": 1}, "output": {"dir": "o"}})";
  };
  // fractions must sum to 1
  CHECK_THROWS_AS(
      parse_config_text(cfg_with(R"("stages": {"local": {"learning_rate": -0.5}})")),
      ConfigError);
  CHECK_THROWS_AS(parse_config_text(R"({"data": {"source": {"synthetic": {}},
    "split": {"fractions": [0.5, 0.2, 0.2]}}, "pipeline": {"seed": 1},
    "output": {"dir": "o"}})"),
                  ConfigError);
  CHECK_THROWS_AS(parse_config_text(R"({"data": {"source": {"synthetic": {}},
    "split": {"fractions": [0.6, 0.2, 0.2], "counts": [1, 2, 3]}},
    "pipeline": {"seed": 1}, "output": {"dir": "o"}})"),
                  ConfigError);
  CHECK_THROWS_AS(parse_config_text(R"({"data": {"source": {"synthetic": {}},
    "normalize": {"mode": "zero_one", "mean": [1.0]}}, "pipeline": {"seed": 1},
    "output": {"dir": "o"}})"),
                  ConfigError);
  CHECK_THROWS_AS(parse_config_text(R"({"data": {"source": {"synthetic": {}},
    "normalize": {"mode": "mean_std", "std": [0.0]}}, "pipeline": {"seed": 1},
    "output": {"dir": "o"}})"),
                  ConfigError);
  CHECK_THROWS_AS(parse_config_text(R"({"data": {"source": {"synthetic": {}},
    "resize": [0, 8]}, "pipeline": {"seed": 1}, "output": {"dir": "o"}})"),
                  ConfigError);
  CHECK_THROWS_AS(parse_config_text(R"({"data": {"source": {"synthetic": {}}},
    "pipeline": {"seed": -4}, "output": {"dir": "o"}})"),
                  ConfigError);
  CHECK_THROWS_AS(parse_config_text(R"({"data": {"source": {"synthetic": {}}},
    "pipeline": {"seed": 1, "mode": "Sideways"}, "output": {"dir": "o"}})"),
                  ConfigError);
  // linear blocks take no kernel
  CHECK_THROWS_AS(parse_config_text(R"({"model": {"blocks": [
    {"kind": "linear", "out_channels": 4, "kernel": 3}]},
    "data": {"source": {"synthetic": {}}}, "pipeline": {"seed": 1},
    "output": {"dir": "o"}})"),
                  ConfigError);
}

TEST_CASE("overrides behave exactly like document edits") {
  ConfigOverrides ov;
  ov.mode = "RBP";
  ov.seed = 99;
  ov.out_dir = "elsewhere";
  RunConfig cfg = parse_config_text(kMinimal, ov);
  CHECK(cfg.mode == PipelineMode::RBP);
  CHECK(cfg.seed == 99);
  CHECK(cfg.out_dir == "elsewhere");

  // the override result is indistinguishable from writing the values in
  const char* edited = R"({
    "data": {"source": {"synthetic": {"n_per_class": 10, "image_size": 8}}},
    "pipeline": {"seed": 99, "mode": "RBP"},
    "output": {"dir": "elsewhere"}
  })";
  RunConfig direct = parse_config_text(edited);
  CHECK(cfg.digest == direct.digest);
  CHECK(canonical_config_json(cfg) == canonical_config_json(direct));

  // bad override values fail like bad document values
  ConfigOverrides bad;
  bad.mode = "NotAMode";
  CHECK_THROWS_AS(parse_config_text(kMinimal, bad), ConfigError);
}

TEST_CASE("digest: stable, sensitive to every section including output dir") {
  RunConfig a = parse_config_text(kMinimal);
  RunConfig b = parse_config_text(kMinimal);
  CHECK(a.digest == b.digest);

  ConfigOverrides ov;
  ov.seed = 8;
  CHECK(parse_config_text(kMinimal, ov).digest != a.digest);
  ConfigOverrides ov2;
  ov2.out_dir = "other";
  CHECK(parse_config_text(kMinimal, ov2).digest != a.digest);
  ConfigOverrides ov3;
  ov3.mode = "GlobalOnly";
  CHECK(parse_config_text(kMinimal, ov3).digest != a.digest);
}

TEST_CASE("canonical serialization is a parse fixpoint") {
  RunConfig cfg = parse_config_text(kMinimal);
  const std::string canon = canonical_config_json(cfg);
  RunConfig re = parse_config_text(canon);
  CHECK(re.digest == cfg.digest);
  CHECK(canonical_config_json(re) == canon);
}

TEST_CASE("warm start requires an existing file") {
  TempDir tmp;
  CHECK_THROWS_AS(parse_config_text(R"({"data": {"source": {"synthetic": {}}},
    "pipeline": {"seed": 1, "init": {"warm_start": "/no/such/file.ckpt"}},
    "output": {"dir": "o"}})"),
                  ConfigError);

  // a real file passes; "random" is the other accepted form
  BlockStack stack = BlockStack::build(default_backbone(), {1, 16, 16}, 3);
  CheckpointProvenance prov;
  prov.stage = "init";
  save_checkpoint(tmp.file("w.ckpt"), stack, nullptr, prov);
  const std::string text = std::string(R"({"data": {"source": {"synthetic": {}}},
    "pipeline": {"seed": 1, "init": {"warm_start": ")") +
                           tmp.file("w.ckpt") + R"("}}, "output": {"dir": "o"}})";
  RunConfig cfg = parse_config_text(text);
  CHECK(cfg.init.warm);
  CHECK(cfg.init.warm_path == tmp.file("w.ckpt"));

  RunConfig rnd = parse_config_text(R"({"data": {"source": {"synthetic": {}}},
    "pipeline": {"seed": 1, "init": "random"}, "output": {"dir": "o"}})");
  CHECK_FALSE(rnd.init.warm);
  CHECK_THROWS_AS(parse_config_text(R"({"data": {"source": {"synthetic": {}}},
    "pipeline": {"seed": 1, "init": "warm"}, "output": {"dir": "o"}})"),
                  ConfigError);
}

TEST_CASE("config file loading distinguishes missing file from bad content") {
  TempDir tmp;
  CHECK_THROWS_AS(parse_config_file(tmp.file("absent.json")), ConfigError);
  {
    std::ofstream f(tmp.file("bad.json"));
    f << "{{{{";
  }
  CHECK_THROWS_AS(parse_config_file(tmp.file("bad.json")), ConfigError);
  {
    std::ofstream f(tmp.file("good.json"));
    f << kMinimal;
  }
  RunConfig cfg = parse_config_file(tmp.file("good.json"));
  CHECK(cfg.seed == 7);
  // file-based and inline parses of the same text agree completely
  CHECK(cfg.digest == parse_config_text(kMinimal).digest);
}

TEST_CASE("idx source config references must exist at parse time") {
  TempDir tmp;
  const std::string text = std::string(R"({"data": {"source": {"idx": {"images": ")") +
                           tmp.file("i.idx") + R"(", "labels": ")" + tmp.file("l.idx") +
                           R"("}}}, "pipeline": {"seed": 1}, "output": {"dir": "o"}})";
  CHECK_THROWS_AS(parse_config_text(text), ConfigError);
}

TEST_CASE("standalone generator spec document") {
  SyntheticSpec spec = parse_synthetic_spec_text(
      R"({"n_per_class": 3, "image_size": 12, "noise_sigma": 0.05, "seed": 9,
          "blob": {"sigma": 0.2}, "stripes": {"cycles_min": 3.0, "cycles_max": 4.0}})",
      "<test>");
  CHECK(spec.n_per_class == 3);
  CHECK(spec.image_size == 12);
  CHECK(spec.noise_sigma == 0.05);
  CHECK(spec.seed == 9);
  CHECK(spec.blob.sigma == 0.2);
  CHECK(spec.blob.center_jitter == 0.15);  // untouched default
  CHECK(spec.stripes.cycles_min == 3.0);

  CHECK_THROWS_AS(parse_synthetic_spec_text(R"({"unknown": 1})", "<test>"), ConfigError);
  CHECK_THROWS_AS(parse_synthetic_spec_file("/no/such/spec.json"), ConfigError);
}

TEST_CASE("pipeline mode names round trip") {
  for (PipelineMode m : {PipelineMode::RBP, PipelineMode::LocalThenGlobal,
                         PipelineMode::GlobalThenLocal, PipelineMode::GlobalOnly,
                         PipelineMode::LocalOnly})
    CHECK(pipeline_mode_from_name(pipeline_mode_name(m)) == m);
  CHECK_THROWS_AS(pipeline_mode_from_name("LocalGlobal"), ConfigError);
}
