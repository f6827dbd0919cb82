/* Copyright 2026 The dcss Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#include "dcss/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace dcss {

nlohmann::json DatasetSpec::to_json() const {
  return {{"num_classes", num_classes}, {"height", height},
          {"width", width},           {"count_train_a", count_train_a},
          {"count_train_b", count_train_b}, {"count_val", count_val},
          {"seed", seed}};
}

DatasetSpec DatasetSpec::from_json(const nlohmann::json& j) {
  DatasetSpec s;
  s.num_classes = j.at("num_classes").get<int>();
  s.height = j.at("height").get<index_t>();
  s.width = j.at("width").get<index_t>();
  s.count_train_a = j.at("count_train_a").get<index_t>();
  s.count_train_b = j.at("count_train_b").get<index_t>();
  s.count_val = j.at("count_val").get<index_t>();
  s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

namespace {

// Piecewise-linear hue wheel (no trig). Classes get well separated colors;
// class 0 is the textured gray background.
void class_color(int cls, int num_classes, double rgb[3]) {
  const double frac = num_classes > 2
                          ? static_cast<double>(cls - 1) / (num_classes - 1)
                          : 0.0;
  const double h6 = 5.0 * frac;
  const double s = 0.7, v = 0.85;
  const double i = std::floor(h6);
  const double f = h6 - i;
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - s * f);
  const double t = v * (1.0 - s * (1.0 - f));
  switch (static_cast<int>(i)) {
    case 0: rgb[0] = v; rgb[1] = t; rgb[2] = p; break;
    case 1: rgb[0] = q; rgb[1] = v; rgb[2] = p; break;
    case 2: rgb[0] = p; rgb[1] = v; rgb[2] = t; break;
    case 3: rgb[0] = p; rgb[1] = q; rgb[2] = v; break;
    case 4: rgb[0] = t; rgb[1] = p; rgb[2] = v; break;
    default: rgb[0] = v; rgb[1] = p; rgb[2] = q; break;
  }
}

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

}  // namespace

SegSample make_sample(const DatasetSpec& spec, int split_id, index_t index) {
  const index_t H = spec.height, W = spec.width;
  Rng rng(hash_seed({spec.seed, 0x5eedda7aull,
                     static_cast<std::uint64_t>(split_id),
                     static_cast<std::uint64_t>(index)}));

  SegSample s;
  s.image = Tensor({3, H, W});
  s.label = LabelMap(1, H, W);
  auto& img = s.image.data();

  // Textured background: a coarse random grid interpolated bilinearly, gray
  // with a faint per-pixel color wobble.
  const index_t G = 5;
  std::vector<double> grid(static_cast<std::size_t>(G * G));
  for (auto& g : grid) g = rng.uniform(0.35, 0.65);
  for (index_t y = 0; y < H; ++y) {
    const double gy = static_cast<double>(y) * (G - 1) / static_cast<double>(H - 1);
    const index_t y0 = static_cast<index_t>(gy);
    const index_t y1 = std::min<index_t>(y0 + 1, G - 1);
    const double fy = gy - static_cast<double>(y0);
    for (index_t x = 0; x < W; ++x) {
      const double gx = static_cast<double>(x) * (G - 1) / static_cast<double>(W - 1);
      const index_t x0 = static_cast<index_t>(gx);
      const index_t x1 = std::min<index_t>(x0 + 1, G - 1);
      const double fx = gx - static_cast<double>(x0);
      const double base =
          (1.0 - fy) * ((1.0 - fx) * grid[static_cast<std::size_t>(y0 * G + x0)] +
                        fx * grid[static_cast<std::size_t>(y0 * G + x1)]) +
          fy * ((1.0 - fx) * grid[static_cast<std::size_t>(y1 * G + x0)] +
                fx * grid[static_cast<std::size_t>(y1 * G + x1)]);
      for (index_t c = 0; c < 3; ++c) {
        img[static_cast<std::size_t>((c * H + y) * W + x)] =
            clamp01(base + rng.uniform(-0.04, 0.04));
      }
    }
  }

  const int n_shapes = 3 + static_cast<int>(rng.below(4));
  for (int k = 0; k < n_shapes; ++k) {
    const int cls = 1 + static_cast<int>(
                            rng.below(static_cast<std::uint64_t>(spec.num_classes - 1)));
    double rgb[3];
    class_color(cls, spec.num_classes, rgb);
    double shade[3];
    for (int c = 0; c < 3; ++c) shade[c] = rgb[c] + rng.uniform(-0.08, 0.08);

    const int kind = static_cast<int>(rng.below(3));
    const double cy = rng.uniform(0.0, static_cast<double>(H));
    const double cx = rng.uniform(0.0, static_cast<double>(W));
    auto paint = [&](index_t y, index_t x) {
      s.label.at(0, y, x) = cls;
      for (index_t c = 0; c < 3; ++c) {
        img[static_cast<std::size_t>((c * H + y) * W + x)] =
            clamp01(shade[c] + rng.uniform(-0.03, 0.03));
      }
    };
    if (kind == 0) {  // rectangle
      const double hh = rng.uniform(H / 10.0, H / 3.5);
      const double hw = rng.uniform(W / 10.0, W / 3.5);
      for (index_t y = 0; y < H; ++y) {
        if (std::abs(y - cy) > hh) continue;
        for (index_t x = 0; x < W; ++x) {
          if (std::abs(x - cx) <= hw) paint(y, x);
        }
      }
    } else if (kind == 1) {  // disk
      const double r = rng.uniform(H / 9.0, H / 3.5);
      const double r2 = r * r;
      for (index_t y = 0; y < H; ++y) {
        const double dy = y - cy;
        for (index_t x = 0; x < W; ++x) {
          const double dx = x - cx;
          if (dy * dy + dx * dx <= r2) paint(y, x);
        }
      }
    } else {  // stripe
      double dy = rng.uniform(-1.0, 1.0);
      double dx = rng.uniform(-1.0, 1.0);
      const double norm = std::sqrt(dy * dy + dx * dx);
      if (norm < 1e-6) { dy = 1.0; dx = 0.0; }
      else { dy /= norm; dx /= norm; }
      const double half = rng.uniform(H / 16.0, H / 7.0);
      for (index_t y = 0; y < H; ++y) {
        for (index_t x = 0; x < W; ++x) {
          const double d = dy * (y - cy) + dx * (x - cx);
          if (d >= -half && d <= half) paint(y, x);
        }
      }
    }
  }
  return s;
}

Dataset generate_dataset(const DatasetSpec& spec) {
  DCSS_CHECK(spec.num_classes >= 2, "dataset: need at least 2 classes");
  DCSS_CHECK(spec.height >= 8 && spec.width >= 8, "dataset: image too small");
  Dataset ds;
  ds.spec = spec;
  ds.train_a.reserve(static_cast<std::size_t>(spec.count_train_a));
  for (index_t i = 0; i < spec.count_train_a; ++i) {
    ds.train_a.push_back(make_sample(spec, 0, i));
  }
  ds.train_b.reserve(static_cast<std::size_t>(spec.count_train_b));
  for (index_t i = 0; i < spec.count_train_b; ++i) {
    ds.train_b.push_back(make_sample(spec, 1, i));
  }
  ds.val.reserve(static_cast<std::size_t>(spec.count_val));
  for (index_t i = 0; i < spec.count_val; ++i) {
    ds.val.push_back(make_sample(spec, 2, i));
  }
  return ds;
}

SplitIndices split_dataset(index_t count, const SplitSpec& split,
                           std::uint64_t seed) {
  DCSS_CHECK(split.frac_train_a >= 0 && split.frac_train_b >= 0 &&
                 split.frac_val >= 0,
             "split: negative fraction");
  const double total = split.frac_train_a + split.frac_train_b + split.frac_val;
  DCSS_CHECK(std::abs(total - 1.0) < 1e-9, "split: fractions sum to ", total,
             ", expected 1");
  std::vector<index_t> idx(static_cast<std::size_t>(count));
  for (index_t i = 0; i < count; ++i) idx[static_cast<std::size_t>(i)] = i;
  Rng rng(hash_seed({seed, 0x5b117ull}));
  rng.shuffle(idx);
  index_t na = static_cast<index_t>(std::llround(split.frac_train_a * count));
  index_t nb = static_cast<index_t>(std::llround(split.frac_train_b * count));
  na = std::min(na, count);
  nb = std::min(nb, count - na);
  SplitIndices out;
  out.train_a.assign(idx.begin(), idx.begin() + na);
  out.train_b.assign(idx.begin() + na, idx.begin() + na + nb);
  out.val.assign(idx.begin() + na + nb, idx.end());
  return out;
}

Tensor resize_bilinear(const Tensor& chw, index_t out_h, index_t out_w) {
  DCSS_CHECK(chw.rank() == 3, "resize: expected CHW, got ",
             shape_str(chw.shape()));
  const index_t C = chw.dim(0), H = chw.dim(1), W = chw.dim(2);
  DCSS_CHECK(out_h >= 1 && out_w >= 1, "resize: bad target size ", out_h, "x",
             out_w);
  if (out_h == H && out_w == W) return chw.detached_copy();
  Tensor out({C, out_h, out_w});
  const double sy = static_cast<double>(H) / static_cast<double>(out_h);
  const double sx = static_cast<double>(W) / static_cast<double>(out_w);
  const auto& iv = chw.data();
  auto& ov = out.data();
  for (index_t c = 0; c < C; ++c) {
    for (index_t y = 0; y < out_h; ++y) {
      const double src_y = (static_cast<double>(y) + 0.5) * sy - 0.5;
      const double fl_y = std::floor(src_y);
      const index_t y0 = std::clamp<index_t>(static_cast<index_t>(fl_y), 0, H - 1);
      const index_t y1 = std::clamp<index_t>(static_cast<index_t>(fl_y) + 1, 0, H - 1);
      const double fy = std::clamp(src_y - fl_y, 0.0, 1.0);
      for (index_t x = 0; x < out_w; ++x) {
        const double src_x = (static_cast<double>(x) + 0.5) * sx - 0.5;
        const double fl_x = std::floor(src_x);
        const index_t x0 = std::clamp<index_t>(static_cast<index_t>(fl_x), 0, W - 1);
        const index_t x1 = std::clamp<index_t>(static_cast<index_t>(fl_x) + 1, 0, W - 1);
        const double fx = std::clamp(src_x - fl_x, 0.0, 1.0);
        const double v00 = iv[static_cast<std::size_t>((c * H + y0) * W + x0)];
        const double v01 = iv[static_cast<std::size_t>((c * H + y0) * W + x1)];
        const double v10 = iv[static_cast<std::size_t>((c * H + y1) * W + x0)];
        const double v11 = iv[static_cast<std::size_t>((c * H + y1) * W + x1)];
        ov[static_cast<std::size_t>((c * out_h + y) * out_w + x)] =
            (1.0 - fy) * ((1.0 - fx) * v00 + fx * v01) +
            fy * ((1.0 - fx) * v10 + fx * v11);
      }
    }
  }
  return out;
}

LabelMap resize_nearest(const LabelMap& label, index_t out_h, index_t out_w) {
  DCSS_CHECK(label.n == 1, "resize_nearest: expected a single label map");
  if (out_h == label.h && out_w == label.w) return label;
  LabelMap out(1, out_h, out_w);
  const double sy = static_cast<double>(label.h) / static_cast<double>(out_h);
  const double sx = static_cast<double>(label.w) / static_cast<double>(out_w);
  for (index_t y = 0; y < out_h; ++y) {
    index_t src_y = static_cast<index_t>((static_cast<double>(y) + 0.5) * sy);
    src_y = std::clamp<index_t>(src_y, 0, label.h - 1);
    for (index_t x = 0; x < out_w; ++x) {
      index_t src_x = static_cast<index_t>((static_cast<double>(x) + 0.5) * sx);
      src_x = std::clamp<index_t>(src_x, 0, label.w - 1);
      out.at(0, y, x) = label.at(0, src_y, src_x);
    }
  }
  return out;
}

SegSample augment(const SegSample& sample, const AugmentConfig& cfg, Rng& rng) {
  const index_t H = sample.image.dim(1), W = sample.image.dim(2);
  const double scale = rng.uniform(cfg.scale_min, cfg.scale_max);
  const index_t hs = std::max<index_t>(1, static_cast<index_t>(
                                              std::llround(scale * H)));
  const index_t ws = std::max<index_t>(1, static_cast<index_t>(
                                              std::llround(scale * W)));
  Tensor img = resize_bilinear(sample.image, hs, ws);
  LabelMap lab = resize_nearest(sample.label, hs, ws);

  // Pad (image: zeros, labels: ignore) so the crop always fits.
  const index_t hp = std::max(hs, cfg.crop_h);
  const index_t wp = std::max(ws, cfg.crop_w);
  if (hp != hs || wp != ws) {
    Tensor padded({3, hp, wp});
    LabelMap plab(1, hp, wp);
    std::fill(plab.v.begin(), plab.v.end(), kIgnoreIndex);
    for (index_t c = 0; c < 3; ++c) {
      for (index_t y = 0; y < hs; ++y) {
        std::memcpy(padded.data().data() + (c * hp + y) * wp,
                    img.data().data() + (c * hs + y) * ws,
                    static_cast<std::size_t>(ws) * sizeof(double));
      }
    }
    for (index_t y = 0; y < hs; ++y) {
      std::memcpy(plab.v.data() + y * wp, lab.v.data() + y * ws,
                  static_cast<std::size_t>(ws) * sizeof(std::int32_t));
    }
    img = padded;
    lab = plab;
  }

  const index_t oy = static_cast<index_t>(
      rng.below(static_cast<std::uint64_t>(img.dim(1) - cfg.crop_h + 1)));
  const index_t ox = static_cast<index_t>(
      rng.below(static_cast<std::uint64_t>(img.dim(2) - cfg.crop_w + 1)));
  const bool flip = rng.uniform() < cfg.flip_prob;

  SegSample out;
  out.image = Tensor({3, cfg.crop_h, cfg.crop_w});
  out.label = LabelMap(1, cfg.crop_h, cfg.crop_w);
  const index_t hc = img.dim(1), wc = img.dim(2);
  for (index_t c = 0; c < 3; ++c) {
    for (index_t y = 0; y < cfg.crop_h; ++y) {
      for (index_t x = 0; x < cfg.crop_w; ++x) {
        const index_t sx = flip ? (cfg.crop_w - 1 - x) : x;
        out.image.data()[static_cast<std::size_t>((c * cfg.crop_h + y) *
                                                  cfg.crop_w + x)] =
            img.data()[static_cast<std::size_t>((c * hc + oy + y) * wc + ox +
                                                sx)];
      }
    }
  }
  for (index_t y = 0; y < cfg.crop_h; ++y) {
    for (index_t x = 0; x < cfg.crop_w; ++x) {
      const index_t sx = flip ? (cfg.crop_w - 1 - x) : x;
      out.label.at(0, y, x) = lab.at(0, oy + y, ox + sx);
    }
  }
  return out;
}

void write_split(const std::string& path, const DatasetSpec& spec,
                 const std::string& split_name,
                 const std::vector<SegSample>& samples) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os.good()) throw IoError(cat("dataset: cannot write '", path, "'"));
  nlohmann::json header = {{"spec", spec.to_json()},
                           {"split", split_name},
                           {"count", samples.size()}};
  os << header.dump() << "\n";
  for (const auto& s : samples) {
    const auto& iv = s.image.data();
    os.write(reinterpret_cast<const char*>(iv.data()),
             static_cast<std::streamsize>(iv.size() * sizeof(double)));
    os.write(reinterpret_cast<const char*>(s.label.v.data()),
             static_cast<std::streamsize>(s.label.v.size() * sizeof(std::int32_t)));
  }
  os.flush();
  if (!os.good()) throw IoError(cat("dataset: write to '", path, "' failed"));
}

std::vector<SegSample> read_split(const std::string& path,
                                  DatasetSpec* spec_out) {
  std::ifstream is(path, std::ios::binary);
  if (!is.good()) throw IoError(cat("dataset: cannot open '", path, "'"));
  std::string line;
  if (!std::getline(is, line)) throw IoError(cat("dataset: '", path, "' empty"));
  nlohmann::json header = nlohmann::json::parse(line, nullptr, false);
  DCSS_CHECK(!header.is_discarded(), "dataset: malformed header in '", path, "'");
  DatasetSpec spec = DatasetSpec::from_json(header.at("spec"));
  if (spec_out) *spec_out = spec;
  const index_t count = header.at("count").get<index_t>();
  std::vector<SegSample> out;
  out.reserve(static_cast<std::size_t>(count));
  const index_t pix = spec.height * spec.width;
  for (index_t i = 0; i < count; ++i) {
    SegSample s;
    s.image = Tensor({3, spec.height, spec.width});
    s.label = LabelMap(1, spec.height, spec.width);
    is.read(reinterpret_cast<char*>(s.image.data().data()),
            static_cast<std::streamsize>(3 * pix * sizeof(double)));
    is.read(reinterpret_cast<char*>(s.label.v.data()),
            static_cast<std::streamsize>(pix * sizeof(std::int32_t)));
    if (!is.good()) {
      throw IoError(cat("dataset: truncated split file '", path, "'"));
    }
    out.push_back(std::move(s));
  }
  return out;
}

Dataset read_dataset_dir(const std::string& dir) {
  Dataset ds;
  ds.train_a = read_split(dir + "/trainA.bin", &ds.spec);
  ds.train_b = read_split(dir + "/trainB.bin", nullptr);
  ds.val = read_split(dir + "/val.bin", nullptr);
  return ds;
}

}  // namespace dcss
