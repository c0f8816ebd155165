#include "core/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <utility>
#include <vector>

#include "json.hpp"

#include "core/digest.hpp"
#include "core/error.hpp"

namespace ffcl {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'F', 'F', 'C', 'L', 'C', 'K', 'P', 'T'};
constexpr uint8_t kVersion = 1;
constexpr const char* kFormat = "ffcl-checkpoint";

void put_u32le(std::string& out, uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

uint32_t get_u32le(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | static_cast<uint32_t>(p[1]) << 8 |
         static_cast<uint32_t>(p[2]) << 16 | static_cast<uint32_t>(p[3]) << 24;
}

void put_f32le(std::string& out, float v) { put_u32le(out, std::bit_cast<uint32_t>(v)); }

float get_f32le(const unsigned char* p) { return std::bit_cast<float>(get_u32le(p)); }

json spec_to_json(const BlockStack& stack) {
  json blocks = json::array();
  for (const BlockSpec& s : stack.specs()) {
    blocks.push_back({{"kind", block_kind_name(s.kind)},
                      {"out_channels", s.out_channels},
                      {"kernel", s.kernel},
                      {"stride", s.stride},
                      {"residual", s.use_residual}});
  }
  const auto& in = stack.input_shape();
  return {{"blocks", std::move(blocks)},
          {"input_shape", {in[0], in[1], in[2]}},
          {"embed_mode", embed_mode_name(stack.embed_mode())}};
}

BlockStack stack_from_json(const json& model) {
  std::vector<BlockSpec> specs;
  for (const json& b : model.at("blocks")) {
    BlockSpec s;
    s.kind = block_kind_from_name(b.at("kind").get<std::string>());
    s.out_channels = b.at("out_channels").get<int>();
    s.kernel = b.at("kernel").get<int>();
    s.stride = b.at("stride").get<int>();
    s.use_residual = b.at("residual").get<bool>();
    specs.push_back(s);
  }
  const json& in = model.at("input_shape");
  if (!in.is_array() || in.size() != 3)
    throw IoError("checkpoint: input_shape must be [C,H,W]");
  const std::array<int, 3> input_shape = {in[0].get<int>(), in[1].get<int>(), in[2].get<int>()};
  const EmbedMode mode = embed_mode_from_name(model.at("embed_mode").get<std::string>());
  return BlockStack::build_zero(specs, input_shape, mode);
}

// The tensors a model contributes to the file, in fixed order.
std::vector<std::pair<std::string, Tensor>> tensor_table(const BlockStack& stack,
                                                         const ClassifierHead* head) {
  std::vector<std::pair<std::string, Tensor>> entries;
  for (int i = 0; i < stack.block_count(); ++i) {
    const std::string base = "block" + std::to_string(i + 1);
    entries.emplace_back(base + ".weight", stack.block(i).weight);
    entries.emplace_back(base + ".bias", stack.block(i).bias);
  }
  if (head) {
    entries.emplace_back("head.weight", head->weight);
    entries.emplace_back("head.bias", head->bias);
  }
  return entries;
}

}  // namespace

std::string save_checkpoint(const std::string& path, const BlockStack& stack,
                            const ClassifierHead* head, const CheckpointProvenance& prov) {
  auto entries = tensor_table(stack, head);

  std::string payload;
  json table = json::array();
  for (auto& [name, t] : entries) {
    json shape = json::array();
    for (int d : t.shape()) shape.push_back(d);
    table.push_back(
        {{"name", name}, {"shape", std::move(shape)}, {"offset", payload.size()}});
    for (float v : t.data()) put_f32le(payload, v);
  }

  json meta = {{"format", kFormat},
               {"model", spec_to_json(stack)},
               {"provenance",
                {{"stage", prov.stage},
                 {"seed", prov.seed},
                 {"parent", prov.parent},
                 {"config_digest", prov.config_digest},
                 {"id", ""}}},
               {"tensors", std::move(table)}};

  // Content id: hash of the metadata (with a blank id) plus the payload.
  const std::string unsigned_meta = meta.dump();
  uint64_t h = fnv1a64(unsigned_meta.data(), unsigned_meta.size());
  h = fnv1a64(payload.data(), payload.size(), h);
  const std::string id = to_hex(h);
  meta["provenance"]["id"] = id;
  const std::string meta_s = meta.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path);
  os.write(kMagic, sizeof(kMagic));
  os.put(static_cast<char>(kVersion));
  std::string head_bytes;
  put_u32le(head_bytes, static_cast<uint32_t>(meta_s.size()));
  os.write(head_bytes.data(), static_cast<std::streamsize>(head_bytes.size()));
  os.write(meta_s.data(), static_cast<std::streamsize>(meta_s.size()));
  os.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  std::string crc_bytes;
  put_u32le(crc_bytes, crc32(payload.data(), payload.size()));
  os.write(crc_bytes.data(), static_cast<std::streamsize>(crc_bytes.size()));
  os.flush();
  if (!os) throw IoError("failed writing checkpoint: " + path);
  return id;
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);
  std::string buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(buf.data());

  if (buf.size() < sizeof(kMagic) + 1 + 4)
    throw CheckpointTruncatedError("checkpoint " + path + " is shorter than its header");
  if (std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0)
    throw IoError("not a checkpoint file (bad magic): " + path);
  const uint8_t version = p[8];
  if (version != kVersion)
    throw CheckpointVersionError("checkpoint " + path + " has version " +
                                 std::to_string(version) + ", this build reads version " +
                                 std::to_string(kVersion));
  const uint32_t mlen = get_u32le(p + 9);
  const size_t meta_off = sizeof(kMagic) + 1 + 4;
  if (buf.size() < meta_off + mlen)
    throw CheckpointTruncatedError("checkpoint " + path + " ends inside its metadata");

  json meta = json::parse(buf.begin() + static_cast<long>(meta_off),
                          buf.begin() + static_cast<long>(meta_off + mlen),
                          /*cb=*/nullptr, /*allow_exceptions=*/false);
  if (meta.is_discarded()) throw IoError("checkpoint " + path + " has unreadable metadata");

  try {
    if (meta.at("format").get<std::string>() != kFormat)
      throw IoError("checkpoint " + path + " has unknown format tag");

    Checkpoint out;
    out.stack = stack_from_json(meta.at("model"));
    const json& prov = meta.at("provenance");
    out.prov.stage = prov.at("stage").get<std::string>();
    out.prov.seed = prov.at("seed").get<uint64_t>();
    out.prov.parent = prov.at("parent").get<std::string>();
    out.prov.config_digest = prov.at("config_digest").get<std::string>();
    out.prov.id = prov.at("id").get<std::string>();

    // Expected table order is fixed by the writer; anything else is a
    // malformed file.
    const json& table = meta.at("tensors");
    size_t expect_bytes = 0;
    for (const json& e : table) {
      int64_t numel = 1;
      for (const json& d : e.at("shape")) numel *= d.get<int>();
      if (e.at("offset").get<size_t>() != expect_bytes)
        throw IoError("checkpoint " + path + " has a non-contiguous tensor table");
      expect_bytes += static_cast<size_t>(numel) * 4;
    }
    const size_t payload_off = meta_off + mlen;
    if (buf.size() < payload_off + expect_bytes + 4)
      throw CheckpointTruncatedError("checkpoint " + path + " is missing payload bytes (has " +
                                     std::to_string(buf.size() - payload_off) + ", needs " +
                                     std::to_string(expect_bytes + 4) + ")");
    if (buf.size() > payload_off + expect_bytes + 4)
      throw IoError("checkpoint " + path + " has trailing bytes after its checksum");

    const uint32_t stored_crc = get_u32le(p + payload_off + expect_bytes);
    const uint32_t actual_crc = crc32(buf.data() + payload_off, expect_bytes);
    if (stored_crc != actual_crc)
      throw CheckpointDigestError("checkpoint " + path + " payload checksum mismatch (stored " +
                                  to_hex(stored_crc).substr(8) + ", computed " +
                                  to_hex(actual_crc).substr(8) + ")");

    // Route payload slices into the rebuilt model.
    out.has_head = false;
    ClassifierHead head;
    auto read_into = [&](Tensor& t, const json& entry) {
      Shape shape;
      for (const json& d : entry.at("shape")) shape.push_back(d.get<int>());
      if (t.defined() && shape != t.shape())
        throw IoError("checkpoint " + path + ": tensor '" +
                      entry.at("name").get<std::string>() + "' has shape " + shape_str(shape) +
                      " but the model spec implies " + shape_str(t.shape()));
      std::vector<float> data(static_cast<size_t>(shape_numel(shape)));
      const unsigned char* src = p + payload_off + entry.at("offset").get<size_t>();
      for (size_t i = 0; i < data.size(); ++i) data[i] = get_f32le(src + i * 4);
      t = Tensor(std::move(shape), std::move(data), /*requires_grad=*/true);
    };

    size_t at = 0;
    const size_t n_table = table.size();
    for (int i = 0; i < out.stack.block_count(); ++i) {
      const std::string base = "block" + std::to_string(i + 1);
      for (const char* field : {".weight", ".bias"}) {
        if (at >= n_table || table[at].at("name").get<std::string>() != base + field)
          throw IoError("checkpoint " + path + ": expected tensor '" + base + field +
                        "' at table position " + std::to_string(at));
        Tensor& dst = std::string(field) == ".weight" ? out.stack.block(i).weight
                                                      : out.stack.block(i).bias;
        read_into(dst, table[at]);
        ++at;
      }
    }
    if (at + 2 == n_table) {
      if (table[at].at("name").get<std::string>() != "head.weight" ||
          table[at + 1].at("name").get<std::string>() != "head.bias")
        throw IoError("checkpoint " + path + ": unexpected extra tensors in table");
      Tensor hw, hb;
      read_into(hw, table[at]);
      read_into(hb, table[at + 1]);
      head.weight = hw;
      head.bias = hb;
      out.has_head = true;
      out.head = head;
    } else if (at != n_table) {
      throw IoError("checkpoint " + path + ": tensor table does not match the model spec");
    }
    return out;
  } catch (const json::exception& e) {
    throw IoError("checkpoint " + path + " has malformed metadata: " + e.what());
  }
}

}  // namespace ffcl
