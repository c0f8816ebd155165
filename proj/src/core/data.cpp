#include "core/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "core/digest.hpp"
#include "core/error.hpp"
#include "core/rng.hpp"

namespace ffcl {

namespace {

constexpr uint32_t kIdxImagesMagic = 0x00000803;  // unsigned byte, 3 dims
constexpr uint32_t kIdxLabelsMagic = 0x00000801;  // unsigned byte, 1 dim
constexpr double kPi = 3.14159265358979323846;

uint32_t read_be32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw IdxTruncatedError(path + ": truncated header");
  return (uint32_t(b[0]) << 24) | (uint32_t(b[1]) << 16) | (uint32_t(b[2]) << 8) | uint32_t(b[3]);
}

void write_be32(std::ostream& out, uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

std::array<int, 3> Dataset::image_shape() const {
  const Shape& s = images.shape();
  if (s.size() != 4) throw ShapeError("dataset images must be [N,C,H,W], got " + shape_str(s));
  return {s[1], s[2], s[3]};
}

std::string Dataset::digest_hex() const { return to_hex(digest); }

uint64_t dataset_digest(const Tensor& images, const std::vector<int>& labels) {
  uint64_t h = kFnvOffset;
  for (int d : images.shape()) {
    int32_t v = d;
    h = fnv1a64(&v, sizeof(v), h);
  }
  auto data = images.data();
  h = fnv1a64(data.data(), data.size_bytes(), h);
  for (int l : labels) {
    int32_t v = l;
    h = fnv1a64(&v, sizeof(v), h);
  }
  return h;
}

void refresh_digest(Dataset& ds) { ds.digest = dataset_digest(ds.images, ds.labels); }

Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 std::pair<int, int> class_filter) {
  std::ifstream imf(images_path, std::ios::binary);
  if (!imf) throw IoError("cannot open image file: " + images_path);
  const uint32_t im_magic = read_be32(imf, images_path);
  if (im_magic != kIdxImagesMagic)
    throw IdxMagicError(images_path + ": expected image magic 0x00000803, got 0x" +
                        to_hex(im_magic).substr(8));
  const uint32_t count = read_be32(imf, images_path);
  const uint32_t rows = read_be32(imf, images_path);
  const uint32_t cols = read_be32(imf, images_path);
  std::vector<unsigned char> pixels(static_cast<size_t>(count) * rows * cols);
  if (!imf.read(reinterpret_cast<char*>(pixels.data()),
                static_cast<std::streamsize>(pixels.size())))
    throw IdxTruncatedError(images_path + ": payload shorter than header promises (" +
                            std::to_string(count) + " images of " + std::to_string(rows) + "x" +
                            std::to_string(cols) + ")");

  std::ifstream lbf(labels_path, std::ios::binary);
  if (!lbf) throw IoError("cannot open label file: " + labels_path);
  const uint32_t lb_magic = read_be32(lbf, labels_path);
  if (lb_magic != kIdxLabelsMagic)
    throw IdxMagicError(labels_path + ": expected label magic 0x00000801, got 0x" +
                        to_hex(lb_magic).substr(8));
  const uint32_t lcount = read_be32(lbf, labels_path);
  if (lcount != count)
    throw IdxCountError("image/label count mismatch: " + images_path + " has " +
                        std::to_string(count) + ", " + labels_path + " has " +
                        std::to_string(lcount));
  std::vector<unsigned char> raw_labels(lcount);
  if (!lbf.read(reinterpret_cast<char*>(raw_labels.data()),
                static_cast<std::streamsize>(raw_labels.size())))
    throw IdxTruncatedError(labels_path + ": payload shorter than header promises");

  const int a = class_filter.first, b = class_filter.second;
  if (a == b) throw ConfigError("class filter must name two distinct classes");
  std::vector<int> keep;
  for (uint32_t i = 0; i < count; ++i)
    if (raw_labels[i] == a || raw_labels[i] == b) keep.push_back(static_cast<int>(i));

  Dataset ds;
  const size_t plane = static_cast<size_t>(rows) * cols;
  std::vector<float> out(keep.size() * plane);
  ds.labels.reserve(keep.size());
  int n0 = 0, n1 = 0;
  for (size_t k = 0; k < keep.size(); ++k) {
    const unsigned char* src = pixels.data() + static_cast<size_t>(keep[k]) * plane;
    float* dst = out.data() + k * plane;
    for (size_t i = 0; i < plane; ++i) dst[i] = static_cast<float>(src[i]);
    const int remapped = raw_labels[static_cast<size_t>(keep[k])] == a ? 0 : 1;
    (remapped == 0 ? n0 : n1)++;
    ds.labels.push_back(remapped);
  }
  if (n0 == 0 || n1 == 0)
    throw ValidationError("class filter (" + std::to_string(a) + "," + std::to_string(b) +
                          ") leaves a single class: " + std::to_string(n0) + " vs " +
                          std::to_string(n1) + " samples");
  ds.images = Tensor({static_cast<int>(keep.size()), 1, static_cast<int>(rows),
                      static_cast<int>(cols)},
                     std::move(out));
  refresh_digest(ds);
  return ds;
}

void save_idx(const Dataset& ds, const std::string& images_path, const std::string& labels_path) {
  const auto shape = ds.image_shape();
  if (shape[0] != 1)
    throw ValidationError("save_idx: only single-channel images can be written, got " +
                          std::to_string(shape[0]) + " channels");
  std::ofstream imf(images_path, std::ios::binary);
  if (!imf) throw IoError("cannot create image file: " + images_path);
  write_be32(imf, kIdxImagesMagic);
  write_be32(imf, static_cast<uint32_t>(ds.size()));
  write_be32(imf, static_cast<uint32_t>(shape[1]));
  write_be32(imf, static_cast<uint32_t>(shape[2]));
  auto data = ds.images.data();
  std::vector<unsigned char> bytes(data.size());
  for (size_t i = 0; i < data.size(); ++i) {
    const float v = std::min(std::max(data[i], 0.0f), 1.0f);
    bytes[i] = static_cast<unsigned char>(std::lround(v * 255.0f));
  }
  imf.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!imf) throw IoError("failed writing " + images_path);

  std::ofstream lbf(labels_path, std::ios::binary);
  if (!lbf) throw IoError("cannot create label file: " + labels_path);
  write_be32(lbf, kIdxLabelsMagic);
  write_be32(lbf, static_cast<uint32_t>(ds.size()));
  std::vector<unsigned char> lbytes(ds.labels.size());
  for (size_t i = 0; i < ds.labels.size(); ++i)
    lbytes[i] = static_cast<unsigned char>(ds.labels[i]);
  lbf.write(reinterpret_cast<const char*>(lbytes.data()),
            static_cast<std::streamsize>(lbytes.size()));
  if (!lbf) throw IoError("failed writing " + labels_path);
}

Dataset gen_synthetic(const SyntheticSpec& spec) {
  if (spec.n_per_class < 1) throw ConfigError("synthetic: n_per_class must be >= 1");
  if (spec.image_size < 4) throw ConfigError("synthetic: image size must be >= 4");
  if (spec.noise_sigma < 0.0) throw ConfigError("synthetic: noise sigma must be >= 0");
  if (spec.blob.sigma <= 0.0) throw ConfigError("synthetic: blob sigma must be > 0");
  if (spec.stripes.cycles_min <= 0.0 || spec.stripes.cycles_max < spec.stripes.cycles_min)
    throw ConfigError("synthetic: stripe cycle range must be positive and ordered");

  const int S = spec.image_size;
  const int n = spec.n_per_class;
  const size_t plane = static_cast<size_t>(S) * S;
  RngStream rng(spec.seed);

  Dataset ds;
  std::vector<float> out(2 * static_cast<size_t>(n) * plane);
  ds.labels.assign(static_cast<size_t>(2 * n), 0);

  // Per image: draw the pattern parameters, evaluate the closed form on the
  // unit grid u = col/(S-1), v = row/(S-1), then (optionally) add noise.
  for (int k = 0; k < n; ++k) {
    const double cu = 0.5 + spec.blob.center_jitter * rng.uniform(-1.0, 1.0);
    const double cv = 0.5 + spec.blob.center_jitter * rng.uniform(-1.0, 1.0);
    float* img = out.data() + static_cast<size_t>(k) * plane;
    for (int r = 0; r < S; ++r)
      for (int c = 0; c < S; ++c) {
        const double u = static_cast<double>(c) / (S - 1);
        const double v = static_cast<double>(r) / (S - 1);
        const double d2 = (u - cu) * (u - cu) + (v - cv) * (v - cv);
        img[r * S + c] =
            static_cast<float>(std::exp(-d2 / (2.0 * spec.blob.sigma * spec.blob.sigma)));
      }
    if (spec.noise_sigma > 0.0)
      for (size_t i = 0; i < plane; ++i) {
        const double noisy = img[i] + spec.noise_sigma * rng.normal();
        img[i] = static_cast<float>(std::min(std::max(noisy, 0.0), 1.0));
      }
  }
  for (int k = 0; k < n; ++k) {
    const double freq = rng.uniform(spec.stripes.cycles_min, spec.stripes.cycles_max);
    const double angle = rng.uniform(0.0, kPi);
    const double phase = rng.uniform(0.0, 2.0 * kPi);
    const double ca = std::cos(angle), sa = std::sin(angle);
    float* img = out.data() + static_cast<size_t>(n + k) * plane;
    for (int r = 0; r < S; ++r)
      for (int c = 0; c < S; ++c) {
        const double u = static_cast<double>(c) / (S - 1);
        const double v = static_cast<double>(r) / (S - 1);
        img[r * S + c] = static_cast<float>(
            0.5 + 0.5 * std::sin(2.0 * kPi * freq * (u * ca + v * sa) + phase));
      }
    ds.labels[static_cast<size_t>(n + k)] = 1;
    if (spec.noise_sigma > 0.0)
      for (size_t i = 0; i < plane; ++i) {
        const double noisy = img[i] + spec.noise_sigma * rng.normal();
        img[i] = static_cast<float>(std::min(std::max(noisy, 0.0), 1.0));
      }
  }

  ds.images = Tensor({2 * n, 1, S, S}, std::move(out));
  refresh_digest(ds);
  return ds;
}

Dataset normalize(const Dataset& ds, NormMode mode, std::vector<double> mean,
                  std::vector<double> stddev) {
  const auto shape = ds.image_shape();
  const int C = shape[0];
  auto src = ds.images.data();
  std::vector<float> out(src.size());

  if (mode == NormMode::zero_one) {
    float lo = src.empty() ? 0.0f : src[0], hi = lo;
    for (float v : src) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (hi > lo) {
      const float inv = 1.0f / (hi - lo);
      for (size_t i = 0; i < src.size(); ++i) out[i] = (src[i] - lo) * inv;
    }
    // constant data: all zeros
  } else {
    if (mean.empty() || stddev.empty())
      throw ConfigError("mean_std normalization needs mean and std values");
    if ((mean.size() != 1 && static_cast<int>(mean.size()) != C) ||
        (stddev.size() != 1 && static_cast<int>(stddev.size()) != C))
      throw ConfigError("mean_std: expected 1 or " + std::to_string(C) +
                        " values per channel, got " + std::to_string(mean.size()) + "/" +
                        std::to_string(stddev.size()));
    for (double s : stddev)
      if (!(s > 0.0)) throw ValidationError("mean_std: std must be > 0");
    const size_t plane = static_cast<size_t>(shape[1]) * shape[2];
    const int N = ds.size();
    for (int ni = 0; ni < N; ++ni)
      for (int c = 0; c < C; ++c) {
        const float mu = static_cast<float>(mean[mean.size() == 1 ? 0 : c]);
        const float inv = static_cast<float>(1.0 / stddev[stddev.size() == 1 ? 0 : c]);
        const size_t off = (static_cast<size_t>(ni) * C + c) * plane;
        for (size_t i = 0; i < plane; ++i) out[off + i] = (src[off + i] - mu) * inv;
      }
  }

  Dataset res;
  res.images = Tensor(ds.images.shape(), std::move(out));
  res.labels = ds.labels;
  res.normalization = mode == NormMode::zero_one ? "zero_one" : "mean_std";
  refresh_digest(res);
  return res;
}

namespace {

Dataset take_subset(const Dataset& ds, const std::vector<int>& idx) {
  Dataset out;
  out.images = gather_images(ds, idx);
  out.labels.reserve(idx.size());
  for (int i : idx) out.labels.push_back(ds.labels[static_cast<size_t>(i)]);
  out.normalization = ds.normalization;
  refresh_digest(out);
  return out;
}

// Largest-remainder allocation of n items to the three fractions; exact when
// they sum to 1, never exceeds n otherwise.
std::array<int64_t, 3> allocate(int64_t n, double ftrain, double fval, double ftest) {
  const double fr[3] = {ftrain, fval, ftest};
  std::array<int64_t, 3> counts{};
  double rem[3];
  int64_t used = 0;
  for (int i = 0; i < 3; ++i) {
    const double ideal = fr[i] * static_cast<double>(n);
    counts[i] = static_cast<int64_t>(std::floor(ideal + 1e-9));
    rem[i] = ideal - static_cast<double>(counts[i]);
    used += counts[i];
  }
  int64_t target = static_cast<int64_t>(std::floor((ftrain + fval + ftest) * n + 1e-9));
  target = std::min(target, n);
  while (used < target) {
    int best = 0;
    for (int i = 1; i < 3; ++i)
      if (rem[i] > rem[best]) best = i;
    counts[best]++;
    rem[best] = -1.0;
    used++;
  }
  return counts;
}

}  // namespace

Splits split(const Dataset& ds, const SplitSpec& spec) {
  const int64_t n = ds.size();
  if (n == 0) throw ValidationError("split: empty dataset");

  std::array<int64_t, 3> want{};
  if (spec.use_counts) {
    want = {spec.train_count, spec.val_count, spec.test_count};
    for (int64_t c : want)
      if (c < 0) throw ConfigError("split: counts must be >= 0");
    if (want[0] + want[1] + want[2] > n)
      throw ConfigError("split: counts sum to " + std::to_string(want[0] + want[1] + want[2]) +
                        " but dataset has " + std::to_string(n) + " samples");
  } else {
    const double fsum = spec.train_frac + spec.val_frac + spec.test_frac;
    if (spec.train_frac < 0 || spec.val_frac < 0 || spec.test_frac < 0 || fsum > 1.0 + 1e-9)
      throw ConfigError("split: fractions must be >= 0 and sum to <= 1");
  }

  std::vector<int> train_idx, val_idx, test_idx;
  std::vector<int>* outs[3] = {&train_idx, &val_idx, &test_idx};
  RngStream rng(spec.seed);

  if (!spec.stratified) {
    std::vector<int> all(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) all[static_cast<size_t>(i)] = i;
    rng.shuffle(all);
    const std::array<int64_t, 3> counts =
        spec.use_counts ? want : allocate(n, spec.train_frac, spec.val_frac, spec.test_frac);
    size_t at = 0;
    for (int k = 0; k < 3; ++k)
      for (int64_t c = 0; c < counts[static_cast<size_t>(k)]; ++c)
        outs[k]->push_back(all[at++]);
  } else {
    std::vector<int> pool[2];
    for (int i = 0; i < ds.size(); ++i) {
      const int l = ds.labels[static_cast<size_t>(i)];
      if (l != 0 && l != 1)
        throw ValidationError("split: label " + std::to_string(l) + " at index " +
                              std::to_string(i) + " is not binary");
      pool[l].push_back(i);
    }
    rng.shuffle(pool[0]);
    rng.shuffle(pool[1]);
    if (!spec.use_counts) {
      // Largest-remainder allocation inside each class keeps per-split class
      // ratios within one sample of the dataset's.
      size_t at[2] = {0, 0};
      for (int cls = 0; cls < 2; ++cls) {
        const std::array<int64_t, 3> counts = allocate(
            static_cast<int64_t>(pool[cls].size()), spec.train_frac, spec.val_frac,
            spec.test_frac);
        for (int k = 0; k < 3; ++k)
          for (int64_t c = 0; c < counts[static_cast<size_t>(k)]; ++c)
            outs[k]->push_back(pool[cls][at[cls]++]);
      }
    } else {
      // Exact split sizes; each split draws the two classes in proportion to
      // what remains in the pools, rounded to the nearest sample.
      size_t at[2] = {0, 0};
      int64_t left[2] = {static_cast<int64_t>(pool[0].size()),
                         static_cast<int64_t>(pool[1].size())};
      for (int k = 0; k < 3; ++k) {
        const int64_t m = want[static_cast<size_t>(k)];
        const double share0 = left[0] + left[1] > 0
                                  ? static_cast<double>(left[0]) / (left[0] + left[1])
                                  : 0.0;
        int64_t take0 = std::llround(m * share0);
        take0 = std::max(take0, m - left[1]);
        take0 = std::min(take0, left[0]);
        const int64_t take1 = m - take0;
        for (int64_t c = 0; c < take0; ++c) outs[k]->push_back(pool[0][at[0]++]);
        for (int64_t c = 0; c < take1; ++c) outs[k]->push_back(pool[1][at[1]++]);
        left[0] -= take0;
        left[1] -= take1;
      }
    }
  }

  Splits out;
  out.train = take_subset(ds, train_idx);
  out.val = take_subset(ds, val_idx);
  out.test = take_subset(ds, test_idx);
  return out;
}

Dataset resize(const Dataset& ds, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw ConfigError("resize: target size must be >= 1");
  const auto shape = ds.image_shape();
  const int C = shape[0], H = shape[1], W = shape[2];
  if (out_h == H && out_w == W) {
    Dataset copy = ds;  // tensors share storage; nothing mutates datasets
    return copy;
  }
  const int N = ds.size();
  auto src = ds.images.data();
  std::vector<float> out(static_cast<size_t>(N) * C * out_h * out_w);

  // Corner-aligned source coordinate; for a single output row/col the scale
  // degenerates and we sample the first source row/col.
  const double sh = out_h > 1 ? static_cast<double>(H - 1) / (out_h - 1) : 0.0;
  const double sw = out_w > 1 ? static_cast<double>(W - 1) / (out_w - 1) : 0.0;

  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const float* plane = src.data() + (static_cast<size_t>(n) * C + c) * H * W;
      float* oplane = out.data() + (static_cast<size_t>(n) * C + c) * out_h * out_w;
      for (int r = 0; r < out_h; ++r) {
        const double fy = r * sh;
        const int y0 = std::min(static_cast<int>(fy), H - 1);
        const int y1 = std::min(y0 + 1, H - 1);
        const double wy = fy - y0;
        for (int cc = 0; cc < out_w; ++cc) {
          const double fx = cc * sw;
          const int x0 = std::min(static_cast<int>(fx), W - 1);
          const int x1 = std::min(x0 + 1, W - 1);
          const double wx = fx - x0;
          const double top = (1.0 - wx) * plane[y0 * W + x0] + wx * plane[y0 * W + x1];
          const double bot = (1.0 - wx) * plane[y1 * W + x0] + wx * plane[y1 * W + x1];
          oplane[r * out_w + cc] = static_cast<float>((1.0 - wy) * top + wy * bot);
        }
      }
    }

  Dataset res;
  res.images = Tensor({N, C, out_h, out_w}, std::move(out));
  res.labels = ds.labels;
  res.normalization = ds.normalization;
  refresh_digest(res);
  return res;
}

Tensor gather_images(const Dataset& ds, std::span<const int> indices) {
  const auto shape = ds.image_shape();
  const size_t item = static_cast<size_t>(shape[0]) * shape[1] * shape[2];
  auto src = ds.images.data();
  std::vector<float> out(indices.size() * item);
  for (size_t k = 0; k < indices.size(); ++k) {
    const int i = indices[k];
    if (i < 0 || i >= ds.size())
      throw ShapeError("gather: index " + std::to_string(i) + " out of range for " +
                       std::to_string(ds.size()) + " samples");
    std::memcpy(out.data() + k * item, src.data() + static_cast<size_t>(i) * item,
                item * sizeof(float));
  }
  return Tensor({static_cast<int>(indices.size()), shape[0], shape[1], shape[2]},
                std::move(out));
}

Tensor gather_label_tensor(const Dataset& ds, std::span<const int> indices) {
  std::vector<float> out(indices.size());
  for (size_t k = 0; k < indices.size(); ++k)
    out[k] = static_cast<float>(ds.labels[static_cast<size_t>(indices[k])]);
  return Tensor({static_cast<int>(indices.size())}, std::move(out));
}

}  // namespace ffcl
