#include <unistd.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include "core/checkpoint.hpp"
#include "core/error.hpp"
#include "core/network.hpp"
#include "doctest.h"

using namespace ffcl;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("ffcl_ckpt_test_" + std::to_string(::getpid()) + "_" +
                                        std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { std::error_code ec; fs::remove_all(path, ec); }
  std::string file(const char* name) const { return (path / name).string(); }
  static int counter;
};
int TempDir::counter = 0;

std::vector<BlockSpec> specs_mixed() {
  BlockSpec c1;
  c1.kind = BlockSpec::Kind::conv;
  c1.out_channels = 4;
  c1.kernel = 3;
  BlockSpec c2 = c1;
  c2.out_channels = 4;
  c2.use_residual = true;
  BlockSpec l3;
  l3.kind = BlockSpec::Kind::linear;
  l3.out_channels = 6;
  return {c1, c2, l3};
}

std::vector<char> slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f);
  return std::vector<char>((std::istreambuf_iterator<char>(f)),
                           std::istreambuf_iterator<char>());
}

void dump(const std::string& path, const std::vector<char>& bytes) {
  std::ofstream f(path, std::ios::binary);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("checkpoint round trip preserves every bit and the provenance") {
  TempDir tmp;
  BlockStack stack = BlockStack::build(specs_mixed(), {1, 8, 8}, 99, EmbedMode::flatten);
  ClassifierHead head = ClassifierHead::init(stack.embed_dim(), 5);
  CheckpointProvenance prov;
  prov.stage = "global";
  prov.seed = 99;
  prov.parent = "abc123";
  prov.config_digest = "cfg456";

  const std::string id = save_checkpoint(tmp.file("a.ckpt"), stack, &head, prov);
  CHECK(!id.empty());

  Checkpoint back = load_checkpoint(tmp.file("a.ckpt"));
  CHECK(back.prov.stage == "global");
  CHECK(back.prov.seed == 99);
  CHECK(back.prov.parent == "abc123");
  CHECK(back.prov.config_digest == "cfg456");
  CHECK(back.prov.id == id);
  CHECK(back.has_head);
  CHECK(back.stack.embed_mode() == EmbedMode::flatten);
  CHECK(back.stack.input_shape() == std::array<int, 3>{1, 8, 8});
  CHECK(param_fingerprints(back.stack) == param_fingerprints(stack));
  CHECK(std::memcmp(back.head.weight.data().data(), head.weight.data().data(),
                    head.weight.numel() * sizeof(float)) == 0);
  CHECK(back.head.bias.data()[0] == head.bias.data()[0]);

  // block specs survive: kinds, channels, residual flags
  auto s = back.stack.specs();
  REQUIRE(s.size() == 3);
  CHECK(s[1].use_residual);
  CHECK(s[2].kind == BlockSpec::Kind::linear);

  // save -> load -> save reproduces the identical byte stream and id
  const std::string id2 = save_checkpoint(tmp.file("b.ckpt"), back.stack,
                                          back.has_head ? &back.head : nullptr, back.prov);
  CHECK(id2 == id);
  CHECK(slurp(tmp.file("a.ckpt")) == slurp(tmp.file("b.ckpt")));
}

TEST_CASE("headless checkpoints skip the classifier") {
  TempDir tmp;
  BlockStack stack = BlockStack::build(specs_mixed(), {1, 8, 8}, 7);
  CheckpointProvenance prov;
  prov.stage = "local";
  save_checkpoint(tmp.file("nohead.ckpt"), stack, nullptr, prov);
  Checkpoint back = load_checkpoint(tmp.file("nohead.ckpt"));
  CHECK_FALSE(back.has_head);
  CHECK(param_fingerprints(back.stack) == param_fingerprints(stack));
}

TEST_CASE("content id tracks weights and metadata") {
  TempDir tmp;
  BlockStack stack = BlockStack::build(specs_mixed(), {1, 8, 8}, 11);
  CheckpointProvenance prov;
  prov.stage = "init";

  const std::string id1 = save_checkpoint(tmp.file("x.ckpt"), stack, nullptr, prov);

  // perturbing one weight changes the id
  stack.block(0).weight.data_mut()[0] += 1e-6f;
  const std::string id2 = save_checkpoint(tmp.file("y.ckpt"), stack, nullptr, prov);
  CHECK(id2 != id1);

  // changing provenance metadata alone also changes the id
  prov.parent = "someparent";
  const std::string id3 = save_checkpoint(tmp.file("z.ckpt"), stack, nullptr, prov);
  CHECK(id3 != id2);
}

TEST_CASE("checkpoint failure taxonomy") {
  TempDir tmp;
  BlockStack stack = BlockStack::build(specs_mixed(), {1, 8, 8}, 13);
  CheckpointProvenance prov;
  prov.stage = "init";
  save_checkpoint(tmp.file("good.ckpt"), stack, nullptr, prov);
  const std::vector<char> good = slurp(tmp.file("good.ckpt"));

  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_checkpoint(tmp.file("absent.ckpt")), IoError);
  }
  SUBCASE("wrong magic") {
    std::vector<char> bad = good;
    bad[0] = 'X';
    dump(tmp.file("badmagic.ckpt"), bad);
    CHECK_THROWS_AS(load_checkpoint(tmp.file("badmagic.ckpt")), IoError);
  }
  SUBCASE("unsupported version") {
    std::vector<char> bad = good;
    bad[8] = 2;  // version byte follows the 8-byte magic
    dump(tmp.file("badver.ckpt"), bad);
    CHECK_THROWS_AS(load_checkpoint(tmp.file("badver.ckpt")), CheckpointVersionError);
  }
  SUBCASE("corrupted payload byte") {
    std::vector<char> bad = good;
    bad[bad.size() - 8] ^= 0x40;  // inside the payload, before the checksum
    dump(tmp.file("flip.ckpt"), bad);
    CHECK_THROWS_AS(load_checkpoint(tmp.file("flip.ckpt")), CheckpointDigestError);
  }
  SUBCASE("truncated file") {
    std::vector<char> bad(good.begin(), good.begin() + good.size() / 2);
    dump(tmp.file("trunc.ckpt"), bad);
    CHECK_THROWS_AS(load_checkpoint(tmp.file("trunc.ckpt")), CheckpointTruncatedError);
  }
  SUBCASE("unwritable path") {
    CheckpointProvenance p;
    CHECK_THROWS_AS(save_checkpoint("/nonexistent_dir_zz/x.ckpt", stack, nullptr, p), IoError);
  }
}

TEST_CASE("file layout starts with the documented magic and version") {
  TempDir tmp;
  BlockStack stack = BlockStack::build(specs_mixed(), {1, 8, 8}, 17);
  CheckpointProvenance prov;
  prov.stage = "init";
  save_checkpoint(tmp.file("m.ckpt"), stack, nullptr, prov);
  const std::vector<char> bytes = slurp(tmp.file("m.ckpt"));
  REQUIRE(bytes.size() > 13);
  CHECK(std::memcmp(bytes.data(), "FFCLCKPT", 8) == 0);
  CHECK(bytes[8] == 1);
  // little-endian metadata length points inside the file
  const uint32_t meta_len = uint32_t(uint8_t(bytes[9])) | uint32_t(uint8_t(bytes[10])) << 8 |
                            uint32_t(uint8_t(bytes[11])) << 16 |
                            uint32_t(uint8_t(bytes[12])) << 24;
  CHECK(13 + meta_len < bytes.size());
}

TEST_CASE("loaded checkpoint is immediately trainable and forward-consistent") {
  TempDir tmp;
  BlockStack stack = BlockStack::build(specs_mixed(), {1, 8, 8}, 19);
  CheckpointProvenance prov;
  prov.stage = "local";
  save_checkpoint(tmp.file("t.ckpt"), stack, nullptr, prov);
  Checkpoint back = load_checkpoint(tmp.file("t.ckpt"));

  std::vector<float> img(64);
  for (int i = 0; i < 64; ++i) img[i] = float(i) / 64.0f;
  Tensor x({1, 1, 8, 8}, std::move(img));
  Tensor a = stack.embed_global(x);
  Tensor b = back.stack.embed_global(x);
  REQUIRE(a.numel() == b.numel());
  CHECK(std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(float)) == 0);

  // parameters are leaves wired for gradient flow
  backward(sum(b));
  bool any = false;
  for (Tensor& t : back.stack.parameters())
    if (t.has_grad()) any = true;
  CHECK(any);
}
