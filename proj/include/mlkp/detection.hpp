#ifndef MLKP_DETECTION_HPP
#define MLKP_DETECTION_HPP

#include <algorithm>
#include <array>
#include <iomanip>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "mlkp/core.hpp"

namespace mlkp {

using Box = std::array<double, 4>;  // x0, y0, x1, y1

inline double boxArea(const Box& b) {
  return std::max(0.0, b[2] - b[0]) * std::max(0.0, b[3] - b[1]);
}

// Continuous-coordinate IoU (no +1 pixel convention anywhere in this
// codebase; boxes are half-open real rectangles).
inline double iou(const Box& a, const Box& b) {
  const double iw = std::min(a[2], b[2]) - std::max(a[0], b[0]);
  const double ih = std::min(a[3], b[3]) - std::max(a[1], b[1]);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  const double uni = boxArea(a) + boxArea(b) - inter;
  return uni > 0 ? inter / uni : 0.0;
}

struct Detection {
  int image_id = 0;
  int class_id = 0;
  double score = 0.0;
  Box box{0, 0, 0, 0};
};

struct GroundTruth {
  int image_id = 0;
  int class_id = 0;
  Box box{0, 0, 0, 0};
};

// Greedy NMS, descending score, ties broken by lower input index. Boxes only
// suppress others of the same class.
inline std::vector<Detection> nms(const std::vector<Detection>& dets,
                                  double iou_threshold) {
  MLKP_CHECK(iou_threshold > 0.0 && iou_threshold < 1.0,
             "NMS IoU threshold must be in (0, 1), got " << iou_threshold);
  std::vector<size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (dets[a].score != dets[b].score) return dets[a].score > dets[b].score;
    return a < b;
  });

  std::vector<Detection> survivors;
  std::vector<bool> suppressed(dets.size(), false);
  for (size_t oi = 0; oi < order.size(); ++oi) {
    const size_t i = order[oi];
    if (suppressed[i]) continue;
    survivors.push_back(dets[i]);
    for (size_t oj = oi + 1; oj < order.size(); ++oj) {
      const size_t j = order[oj];
      if (suppressed[j] || dets[j].class_id != dets[i].class_id ||
          dets[j].image_id != dets[i].image_id)
        continue;
      if (iou(dets[i].box, dets[j].box) >= iou_threshold) suppressed[j] = true;
    }
  }
  return survivors;
}

struct EvalResult {
  std::map<int, double> ap_per_class;  // classes with >= 1 ground truth
  double map = 0.0;
};

// VOC-style AP with greedy matching and continuous (all-point) interpolation
// of the precision-recall curve. Each ground-truth box is matched at most
// once; detections are visited in descending score order.
inline EvalResult evaluateMap(const std::vector<Detection>& detections,
                              const std::vector<GroundTruth>& ground_truth,
                              double iou_threshold = 0.5) {
  EvalResult result;

  std::map<int, std::vector<size_t>> gt_by_class;
  for (size_t i = 0; i < ground_truth.size(); ++i)
    gt_by_class[ground_truth[i].class_id].push_back(i);

  for (const auto& [cls, gt_indices] : gt_by_class) {
    std::vector<size_t> det_indices;
    for (size_t i = 0; i < detections.size(); ++i)
      if (detections[i].class_id == cls) det_indices.push_back(i);
    std::sort(det_indices.begin(), det_indices.end(), [&](size_t a, size_t b) {
      if (detections[a].score != detections[b].score)
        return detections[a].score > detections[b].score;
      return a < b;
    });

    std::vector<bool> matched(gt_indices.size(), false);
    std::vector<double> tp, fp;
    for (size_t di : det_indices) {
      double best_iou = 0.0;
      int best_gt = -1;
      for (size_t gi = 0; gi < gt_indices.size(); ++gi) {
        const auto& gt = ground_truth[gt_indices[gi]];
        if (gt.image_id != detections[di].image_id) continue;
        const double v = iou(detections[di].box, gt.box);
        if (v > best_iou) {
          best_iou = v;
          best_gt = static_cast<int>(gi);
        }
      }
      if (best_gt >= 0 && best_iou >= iou_threshold && !matched[best_gt]) {
        matched[best_gt] = true;
        tp.push_back(1.0);
        fp.push_back(0.0);
      } else {
        tp.push_back(0.0);
        fp.push_back(1.0);
      }
    }

    const double n_gt = static_cast<double>(gt_indices.size());
    std::vector<double> recall(tp.size()), precision(tp.size());
    double tp_cum = 0, fp_cum = 0;
    for (size_t i = 0; i < tp.size(); ++i) {
      tp_cum += tp[i];
      fp_cum += fp[i];
      recall[i] = tp_cum / n_gt;
      precision[i] = tp_cum / (tp_cum + fp_cum);
    }
    for (size_t i = precision.size(); i-- > 1;)
      precision[i - 1] = std::max(precision[i - 1], precision[i]);

    double ap = 0.0;
    double prev_recall = 0.0;
    for (size_t i = 0; i < recall.size(); ++i) {
      ap += (recall[i] - prev_recall) * precision[i];
      prev_recall = recall[i];
    }
    result.ap_per_class[cls] = ap;
  }

  if (!result.ap_per_class.empty()) {
    double sum = 0.0;
    for (const auto& [cls, ap] : result.ap_per_class) sum += ap;
    result.map = sum / static_cast<double>(result.ap_per_class.size());
  }
  return result;
}

// Line format: `image_id class_id score x0 y0 x1 y1`, reals as 6-decimal
// fixed point.
inline std::string formatDetection(const Detection& d) {
  std::ostringstream oss;
  oss << d.image_id << " " << d.class_id << " " << std::fixed
      << std::setprecision(6) << d.score << " " << d.box[0] << " " << d.box[1]
      << " " << d.box[2] << " " << d.box[3];
  return oss.str();
}

}  // namespace mlkp

#endif  // MLKP_DETECTION_HPP
