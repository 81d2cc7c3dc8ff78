#ifndef MLKP_TRAIN_HPP
#define MLKP_TRAIN_HPP

#include <iostream>
#include <limits>

#include "mlkp/detector.hpp"
#include "mlkp/serialize.hpp"

namespace mlkp {

// SGD with momentum and weight decay in the Caffe convention:
//   v <- momentum * v + lr * (grad + weight_decay * theta); theta <- theta - v
template <typename Scalar>
class SgdOptimizer {
 public:
  SgdOptimizer(ParamStore<Scalar>& params, Scalar momentum, Scalar weight_decay)
      : params_(params), momentum_(momentum), weight_decay_(weight_decay) {
    for (const auto& e : params.entries())
      velocity_.push_back(Vector<Scalar>::Zero(e.size));
  }

  void step(Scalar lr) {
    for (size_t i = 0; i < params_.entries().size(); ++i) {
      const auto& e = params_.entries()[i];
      Eigen::Map<Vector<Scalar>> theta(e.value, e.size);
      Eigen::Map<const Vector<Scalar>> grad(e.grad, e.size);
      velocity_[i] =
          momentum_ * velocity_[i] + lr * (grad + weight_decay_ * theta);
      theta -= velocity_[i];
    }
  }

 private:
  ParamStore<Scalar>& params_;
  Scalar momentum_, weight_decay_;
  std::vector<Vector<Scalar>> velocity_;
};

struct TrainStats {
  Index iterations_run = 0;
  double loss_iter10 = std::numeric_limits<double>::quiet_NaN();
  // Training loss per scene is noisy, so the terminal loss is reported as
  // the mean over the last (up to) 10 iterations.
  double final_loss = std::numeric_limits<double>::quiet_NaN();
  double final_map = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::string> log_lines;
};

// Thrown when the training loss leaves the finite range; names the iteration.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(Index iteration, double loss)
      : std::runtime_error("non-finite loss at iteration " +
                           std::to_string(iteration)),
        iteration(iteration),
        loss(loss) {}
  Index iteration;
  double loss;
};

namespace detail {

inline std::vector<RoI> toFeatureRois(const std::vector<Proposal>& proposals,
                                      int stride) {
  std::vector<RoI> rois;
  for (const auto& p : proposals) {
    RoI r;
    r.batch_index = 0;
    r.x0 = p.box[0] / stride;
    r.y0 = p.box[1] / stride;
    r.x1 = p.box[2] / stride;
    r.y1 = p.box[3] / stride;
    rois.push_back(r);
  }
  return rois;
}

inline std::vector<RoiTarget> toTargets(const std::vector<Proposal>& proposals) {
  std::vector<RoiTarget> targets;
  for (const auto& p : proposals) targets.push_back(RoiTarget{p.label, p.deltas});
  return targets;
}

}  // namespace detail

// Held-out evaluation: scenes at indices [train_scenes, train_scenes +
// eval_scenes), proposals from the synthetic generator on a fixed eval
// stream, detections scored against ground truth at IoU 0.5.
template <typename Scalar>
EvalResult evaluateDetector(Detector<Scalar>& det, const RunConfig& cfg) {
  const SceneSpec sspec = cfg.sceneSpec();
  ProposalSpec pspec = cfg.proposalSpec();
  pspec.seed = mix_seed(cfg.train_seed, 0x45564cULL);  // eval stream

  std::vector<Detection> detections;
  std::vector<GroundTruth> ground_truth;
  for (Index i = 0; i < cfg.eval_scenes; ++i) {
    const Index scene_index = cfg.train_scenes + i;
    const Scene scene = generateScene(sspec, scene_index);
    const auto proposals =
        generateProposals(scene, sspec, pspec, static_cast<std::uint64_t>(i));
    std::vector<Box> boxes;
    for (const auto& p : proposals) boxes.push_back(p.box);
    const auto image = normalizeImage(scene.image);
    auto dets = det.detect(image, boxes, static_cast<int>(i));
    detections.insert(detections.end(), dets.begin(), dets.end());
    for (size_t g = 0; g < scene.gt_boxes.size(); ++g)
      ground_truth.push_back(GroundTruth{static_cast<int>(i),
                                         scene.gt_labels[g],
                                         scene.gt_boxes[g]});
  }
  return evaluateMap(detections, ground_truth, 0.5);
}

// One full training run. Scenes cycle in index order; the proposal stream is
// salted by iteration, so the whole run is a pure function of the config.
// Metric lines (`iter=<n> loss=<f> map50=<f>`) are emitted at every
// eval_every-th iteration and at the final one.
template <typename Scalar>
TrainStats trainDetector(Detector<Scalar>& det, const RunConfig& cfg,
                         std::ostream* log = nullptr) {
  cfg.validate();
  const SceneSpec sspec = cfg.sceneSpec();
  const ProposalSpec pspec = cfg.proposalSpec();
  SgdOptimizer<Scalar> sgd(det.params(), static_cast<Scalar>(cfg.momentum),
                           static_cast<Scalar>(cfg.weight_decay));

  TrainStats stats;
  std::vector<double> loss_window;
  for (Index iter = 1; iter <= cfg.iterations; ++iter) {
    const Index scene_index = (iter - 1) % cfg.train_scenes;
    const Scene scene = generateScene(sspec, scene_index);
    const auto proposals = generateProposals(
        scene, sspec, pspec, 0x7261694eULL + static_cast<std::uint64_t>(iter));
    const auto rois = detail::toFeatureRois(proposals, det.featureStride());
    const auto targets = detail::toTargets(proposals);
    const auto image = normalizeImage(scene.image);

    auto out = det.forward(image, rois);
    auto loss = detectionLoss(out.logits, out.deltas, targets);
    if (!std::isfinite(static_cast<double>(loss.loss)))
      throw TrainingDiverged(iter, static_cast<double>(loss.loss));

    det.zeroGrads();
    det.backward(loss.grad_logits, loss.grad_deltas);
    const double lr =
        cfg.base_lr * (iter > cfg.lr_decay_step ? cfg.lr_decay_factor : 1.0);
    sgd.step(static_cast<Scalar>(lr));

    stats.iterations_run = iter;
    const double loss_value = static_cast<double>(loss.loss);
    if (iter == 10) stats.loss_iter10 = loss_value;
    loss_window.push_back(loss_value);
    if (loss_window.size() > 10) loss_window.erase(loss_window.begin());

    const bool eval_point =
        (cfg.eval_every > 0 && iter % cfg.eval_every == 0) ||
        iter == cfg.iterations;
    if (eval_point) {
      const auto eval = evaluateDetector(det, cfg);
      stats.final_map = eval.map;
      std::ostringstream line;
      line << "iter=" << iter << " loss=" << std::fixed << std::setprecision(6)
           << loss_value << " map50=" << eval.map;
      stats.log_lines.push_back(line.str());
      if (log) (*log) << line.str() << "\n" << std::flush;
    }
  }
  if (!loss_window.empty()) {
    double sum = 0.0;
    for (double v : loss_window) sum += v;
    stats.final_loss = sum / static_cast<double>(loss_window.size());
  }
  return stats;
}

}  // namespace mlkp

#endif  // MLKP_TRAIN_HPP
