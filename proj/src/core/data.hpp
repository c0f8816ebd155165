#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "core/tensor.hpp"

namespace ffcl {

// An in-memory binary-labelled image set. Images are a leaf [N,C,H,W]
// tensor; the digest fingerprints shape, pixels, and labels so two datasets
// can be checked for bit-exact identity.
struct Dataset {
  Tensor images;
  std::vector<int> labels;  // values in {0,1}
  uint64_t digest = 0;
  std::string normalization = "none";

  int size() const { return labels.empty() ? 0 : static_cast<int>(labels.size()); }
  std::array<int, 3> image_shape() const;
  std::string digest_hex() const;
};

uint64_t dataset_digest(const Tensor& images, const std::vector<int>& labels);
void refresh_digest(Dataset& ds);

// IDX (big-endian) image/label file pair. Only the two classes named by
// `class_filter` are kept and they are remapped to 0/1 in filter order.
Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 std::pair<int, int> class_filter);

// Writes images quantized to bytes (values are clamped to [0,1] and scaled
// by 255) plus the matching label file.
void save_idx(const Dataset& ds, const std::string& images_path, const std::string& labels_path);

// Two synthetic pattern families on a [0,1] canvas:
//   class 0: isotropic Gaussian blob, jittered center;
//   class 1: oriented sinusoidal stripes, random frequency/angle/phase.
// Optional additive Gaussian pixel noise, clamped back to [0,1]. Class-0
// images come first. Identical spec+seed reproduce identical pixels.
struct SyntheticSpec {
  int n_per_class = 200;
  int image_size = 32;
  double noise_sigma = 0.0;
  uint64_t seed = 0;
  struct Blob {
    double sigma = 0.18;          // radius as a fraction of the unit canvas
    double center_jitter = 0.15;  // max offset of the center from 0.5
  } blob;
  struct Stripes {
    double cycles_min = 2.5;  // full periods across the canvas
    double cycles_max = 5.0;
  } stripes;
};

Dataset gen_synthetic(const SyntheticSpec& spec);

enum class NormMode { zero_one, mean_std };

// zero_one: affine map sending the dataset min to 0 and max to 1 (all zeros
// when the data is constant). mean_std: x -> (x - mean[c]) / std[c] per
// channel; `mean`/`stddev` may hold one value per channel or a single value
// applied to all channels.
Dataset normalize(const Dataset& ds, NormMode mode, std::vector<double> mean = {},
                  std::vector<double> stddev = {});

struct SplitSpec {
  bool use_counts = false;
  double train_frac = 0.6, val_frac = 0.2, test_frac = 0.2;
  int64_t train_count = 0, val_count = 0, test_count = 0;
  bool stratified = true;
  uint64_t seed = 0;
};

struct Splits {
  Dataset train, val, test;
};

// Deterministic shuffle + partition. Stratified splits allocate per class
// with largest-remainder rounding, keeping class ratios within one sample.
Splits split(const Dataset& ds, const SplitSpec& spec);

// Bilinear resize with corner-aligned sampling:
// src = dst * (S-1)/(D-1), so corners map to corners exactly. Resizing to
// the identical size returns a bitwise copy.
Dataset resize(const Dataset& ds, int out_h, int out_w);

// Batch assembly: copies the selected images/labels into fresh leaves.
Tensor gather_images(const Dataset& ds, std::span<const int> indices);
Tensor gather_label_tensor(const Dataset& ds, std::span<const int> indices);

}  // namespace ffcl
