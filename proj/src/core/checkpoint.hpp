#pragma once

#include <cstdint>
#include <string>

#include "core/network.hpp"

namespace ffcl {

// Where a checkpoint came from: which stage produced it, under which seed
// and config, and which checkpoint (if any) it continued from. `id` is a
// content hash over metadata + payload, so equal ids mean equal files.
struct CheckpointProvenance {
  std::string stage;          // "init" | "local" | "global" | "finetune"
  uint64_t seed = 0;
  std::string parent;         // id of the checkpoint this run started from
  std::string config_digest;  // hash of the run configuration
  std::string id;             // filled in by save/load
};

struct Checkpoint {
  BlockStack stack;
  bool has_head = false;
  ClassifierHead head;  // meaningful only when has_head
  CheckpointProvenance prov;
};

// File layout: "FFCLCKPT" magic, one version byte (=1), 4-byte LE metadata
// length, UTF-8 metadata (model spec, provenance, tensor table with shapes
// and byte offsets), raw little-endian f32 payloads in table order, and a
// trailing 32-bit payload checksum. Round-trips are byte-identical.
// Returns the content id (also written into the file's provenance).
std::string save_checkpoint(const std::string& path, const BlockStack& stack,
                            const ClassifierHead* head, const CheckpointProvenance& prov);

Checkpoint load_checkpoint(const std::string& path);

}  // namespace ffcl
