#ifndef MLKP_SYNTH_HPP
#define MLKP_SYNTH_HPP

#include <fstream>
#include <string>
#include <vector>

#include "mlkp/detection.hpp"
#include "mlkp/tensor.hpp"

namespace mlkp {

// Synthetic detection scenes: colored rectangles over a noisy background.
// Classes differ by fill pattern only (solid / striped / checkered), and all
// three patterns share the same mean intensity, so class identity lives in
// local texture rather than in color or brightness.
struct SceneSpec {
  Index height = 128;
  Index width = 128;
  int classes = 3;  // 1 = solid, 2 = striped, 3 = checkered
  int min_objects = 1;
  int max_objects = 3;
  double min_size = 20.0;  // object side length, pixels
  double max_size = 56.0;
  double noise = 0.08;  // background noise amplitude
  std::uint64_t seed = 7;

  void validate() const {
    MLKP_CHECK(height >= 16 && width >= 16, "scene must be at least 16x16");
    MLKP_CHECK(classes >= 1 && classes <= 3,
               "supported class counts are 1..3, got " << classes);
    MLKP_CHECK(min_objects >= 0 && max_objects >= min_objects,
               "bad object count range [" << min_objects << ", " << max_objects
                                          << "]");
    MLKP_CHECK(min_size >= 4.0 && max_size >= min_size,
               "object sizes must be >= 4 px (area >= 16)");
    MLKP_CHECK(max_size <= std::min(height, width),
               "objects must fit in the scene");
    MLKP_CHECK(noise >= 0.0 && noise <= 0.3, "noise amplitude outside [0, 0.3]");
  }
};

struct Scene {
  TensorD image;  // (1, 3, H, W), values in [0, 1]
  std::vector<Box> gt_boxes;   // image coordinates
  std::vector<int> gt_labels;  // 1..K
};

namespace detail {

inline void fillRect(TensorD& img, const Box& b, int label, double r, double g,
                     double bl, Index phase_y, Index phase_x, bool vertical) {
  const Index x0 = static_cast<Index>(std::lround(b[0]));
  const Index y0 = static_cast<Index>(std::lround(b[1]));
  const Index x1 = static_cast<Index>(std::lround(b[2]));
  const Index y1 = static_cast<Index>(std::lround(b[3]));
  const double rgb[3] = {r, g, bl};
  for (Index y = y0; y < y1; ++y)
    for (Index x = x0; x < x1; ++x) {
      // 50% duty-cycle patterns; "solid" uses the midpoint shade so that all
      // classes share the same mean intensity. Stripes run in a random
      // orientation per object, so telling stripes from checker requires
      // combining both orientations' edge responses.
      double shade = 0.75;
      if (label == 2) {  // striped: 4-px bands
        const Index along = vertical ? (x + phase_x) : (y + phase_y);
        shade = ((along / 4) % 2 == 0) ? 1.0 : 0.5;
      } else if (label == 3) {  // checkered: 4-px tiles
        shade = ((((y + phase_y) / 4) + ((x + phase_x) / 4)) % 2 == 0) ? 1.0
                                                                       : 0.5;
      }
      for (Index c = 0; c < 3; ++c) img(0, c, y, x) = rgb[c] * shade;
    }
}

}  // namespace detail

// Deterministic: the pair (spec, index) fully determines the scene. Placement
// uses rejection sampling; a placement that cannot satisfy the overlap bound
// after 100 attempts is dropped, never an error.
inline Scene generateScene(const SceneSpec& spec, Index index) {
  spec.validate();
  Rng rng(mix_seed(spec.seed, static_cast<std::uint64_t>(index)));

  Scene scene;
  scene.image = TensorD(1, 3, spec.height, spec.width);
  for (Index c = 0; c < 3; ++c) {
    auto ch = scene.image.channel(0, c);
    for (Index i = 0; i < ch.size(); ++i)
      ch[i] = std::clamp(0.35 + spec.noise * rng.uniform(-1.0, 1.0), 0.0, 1.0);
  }

  const int count =
      static_cast<int>(rng.uniformInt(spec.min_objects, spec.max_objects));
  for (int obj = 0; obj < count; ++obj) {
    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
      const double w = rng.uniform(spec.min_size, spec.max_size);
      const double h = rng.uniform(spec.min_size, spec.max_size);
      const double x0 = rng.uniform(0.0, spec.width - w);
      const double y0 = rng.uniform(0.0, spec.height - h);
      const Box box{x0, y0, x0 + w, y0 + h};
      bool ok = true;
      for (const auto& other : scene.gt_boxes)
        if (iou(box, other) > 0.3) {
          ok = false;
          break;
        }
      if (!ok) continue;
      const int label = static_cast<int>(rng.uniformInt(1, spec.classes));
      // random per-object color; class is never encoded in color
      const double r = rng.uniform(0.55, 1.0);
      const double g = rng.uniform(0.55, 1.0);
      const double b = rng.uniform(0.55, 1.0);
      const Index phase_y = rng.uniformInt(0, 7);
      const Index phase_x = rng.uniformInt(0, 7);
      const bool vertical = rng.uniformInt(0, 1) == 1;
      detail::fillRect(scene.image, box, label, r, g, b, phase_y, phase_x,
                       vertical);
      scene.gt_boxes.push_back(box);
      scene.gt_labels.push_back(label);
      placed = true;
    }
  }
  return scene;
}

// Box regression parameterization: (dx/w, dy/h, log w ratio, log h ratio).
inline std::array<double, 4> encodeDeltas(const Box& proposal, const Box& gt) {
  const double pw = proposal[2] - proposal[0], ph = proposal[3] - proposal[1];
  MLKP_CHECK(pw > 0 && ph > 0, "cannot encode deltas against a degenerate box");
  const double gw = gt[2] - gt[0], gh = gt[3] - gt[1];
  MLKP_CHECK(gw > 0 && gh > 0, "degenerate ground-truth box");
  const double pcx = proposal[0] + 0.5 * pw, pcy = proposal[1] + 0.5 * ph;
  const double gcx = gt[0] + 0.5 * gw, gcy = gt[1] + 0.5 * gh;
  return {(gcx - pcx) / pw, (gcy - pcy) / ph, std::log(gw / pw),
          std::log(gh / ph)};
}

inline Box applyDeltas(const Box& proposal, const std::array<double, 4>& d) {
  const double pw = proposal[2] - proposal[0], ph = proposal[3] - proposal[1];
  const double pcx = proposal[0] + 0.5 * pw, pcy = proposal[1] + 0.5 * ph;
  const double cx = pcx + d[0] * pw, cy = pcy + d[1] * ph;
  const double w = pw * std::exp(d[2]), h = ph * std::exp(d[3]);
  return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
}

// Labeled training proposal in image coordinates.
struct Proposal {
  Box box{0, 0, 0, 0};
  int label = 0;  // 0 = background
  std::array<double, 4> deltas{0, 0, 0, 0};
};

struct ProposalSpec {
  Index rois_per_image = 32;
  double positive_fraction = 0.25;  // rest is background
  double jitter = 0.2;              // +-20% of center / size
  std::uint64_t seed = 1;
};

namespace detail {

inline double maxIouVsGt(const Box& box, const std::vector<Box>& gts) {
  double best = 0.0;
  for (const auto& g : gts) best = std::max(best, iou(box, g));
  return best;
}

}  // namespace detail

// Stand-in for the region proposal network: positives are ground-truth boxes
// jittered uniformly within +-jitter of center and size (resampled until IoU
// with the source stays >= 0.5), negatives are random boxes with max IoU
// < 0.3 against every ground truth. Deterministic given (spec seed, salt).
inline std::vector<Proposal> generateProposals(const Scene& scene,
                                               const SceneSpec& sspec,
                                               const ProposalSpec& pspec,
                                               std::uint64_t salt = 0) {
  Rng rng(mix_seed(pspec.seed, salt));
  std::vector<Proposal> out;
  const int n_gt = static_cast<int>(scene.gt_boxes.size());
  const Index n_pos =
      n_gt == 0 ? 0
                : static_cast<Index>(std::lround(pspec.rois_per_image *
                                                 pspec.positive_fraction));

  for (Index i = 0; i < n_pos; ++i) {
    const int gi = static_cast<int>(i) % n_gt;
    const Box& g = scene.gt_boxes[gi];
    const double gw = g[2] - g[0], gh = g[3] - g[1];
    const double gcx = g[0] + 0.5 * gw, gcy = g[1] + 0.5 * gh;
    Box jittered = g;
    for (int attempt = 0; attempt < 100 && pspec.jitter > 0.0; ++attempt) {
      const double cx = gcx + rng.uniform(-pspec.jitter, pspec.jitter) * gw;
      const double cy = gcy + rng.uniform(-pspec.jitter, pspec.jitter) * gh;
      const double w = gw * (1.0 + rng.uniform(-pspec.jitter, pspec.jitter));
      const double h = gh * (1.0 + rng.uniform(-pspec.jitter, pspec.jitter));
      Box cand{cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
      cand[0] = std::max(cand[0], 0.0);
      cand[1] = std::max(cand[1], 0.0);
      cand[2] = std::min(cand[2], static_cast<double>(sspec.width));
      cand[3] = std::min(cand[3], static_cast<double>(sspec.height));
      if (iou(cand, g) >= 0.5) {
        jittered = cand;
        break;
      }
    }
    Proposal p;
    p.box = jittered;
    p.label = scene.gt_labels[gi];
    p.deltas = encodeDeltas(jittered, g);
    out.push_back(p);
  }

  const Index n_neg = pspec.rois_per_image - n_pos;
  for (Index i = 0; i < n_neg; ++i) {
    Proposal p;
    bool found = false;
    for (int attempt = 0; attempt < 100 && !found; ++attempt) {
      const double w = rng.uniform(sspec.min_size * 0.5, sspec.max_size);
      const double h = rng.uniform(sspec.min_size * 0.5, sspec.max_size);
      const double x0 = rng.uniform(0.0, sspec.width - w);
      const double y0 = rng.uniform(0.0, sspec.height - h);
      const Box cand{x0, y0, x0 + w, y0 + h};
      if (detail::maxIouVsGt(cand, scene.gt_boxes) < 0.3) {
        p.box = cand;
        found = true;
      }
    }
    if (!found) {
      // fall back to a coarse grid scan for any sufficiently free 8x8 box
      for (Index y = 0; y + 8 <= sspec.height && !found; y += 8)
        for (Index x = 0; x + 8 <= sspec.width && !found; x += 8) {
          const Box cand{static_cast<double>(x), static_cast<double>(y),
                         static_cast<double>(x + 8), static_cast<double>(y + 8)};
          if (detail::maxIouVsGt(cand, scene.gt_boxes) < 0.3) {
            p.box = cand;
            found = true;
          }
        }
      MLKP_CHECK(found, "no admissible negative proposal exists in this scene");
    }
    out.push_back(p);
  }
  return out;
}

// Binary PPM (P6), 8 bits per channel.
inline void saveScenePPM(const Scene& scene, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  MLKP_IO_CHECK(f.good(), "cannot open '" << path << "' for writing");
  const Index h = scene.image.h(), w = scene.image.w();
  f << "P6\n" << w << " " << h << "\n255\n";
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x)
      for (Index c = 0; c < 3; ++c) {
        const double v = std::clamp(scene.image(0, c, y, x), 0.0, 1.0);
        f.put(static_cast<char>(std::lround(v * 255.0)));
      }
  MLKP_IO_CHECK(f.good(), "write to '" << path << "' failed");
}

}  // namespace mlkp

#endif  // MLKP_SYNTH_HPP
