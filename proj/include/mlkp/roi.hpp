#ifndef MLKP_ROI_HPP
#define MLKP_ROI_HPP

#include <vector>

#include "mlkp/tensor.hpp"

namespace mlkp {

// Proposal rectangle in feature-map coordinates. Coordinates are inclusive
// cell positions after clipping; a zero-area RoI is legal and pools from the
// single nearest cell.
struct RoI {
  Index batch_index = 0;
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
};

inline RoI clipRoI(const RoI& r, Index map_h, Index map_w) {
  RoI c = r;
  c.x0 = std::min(std::max(r.x0, 0.0), static_cast<double>(map_w - 1));
  c.y0 = std::min(std::max(r.y0, 0.0), static_cast<double>(map_h - 1));
  c.x1 = std::min(std::max(r.x1, c.x0), static_cast<double>(map_w - 1));
  c.y1 = std::min(std::max(r.y1, c.y0), static_cast<double>(map_h - 1));
  return c;
}

// Max RoI pooling with the floor/ceil quantization of the original RoI
// pooling layer: cell (i, j) of the pool grid spans input rows
// floor(y0) + floor(i*H/ph) .. floor(y0) + ceil((i+1)*H/ph) - 1 (columns
// analogously), clamped non-empty and to the map. argmax_out records the
// flat input index that won each cell, which the backward pass routes to.
template <typename Scalar>
Tensor<Scalar> maxRoiPool(const Tensor<Scalar>& G, const std::vector<RoI>& rois,
                          Index pool_h, Index pool_w,
                          std::vector<Index>* argmax_out = nullptr) {
  MLKP_CHECK(pool_h >= 1 && pool_w >= 1,
             "pool dims must be >= 1, got " << pool_h << "x" << pool_w);
  MLKP_CHECK(!rois.empty(), "maxRoiPool: no RoIs");
  Tensor<Scalar> out(static_cast<Index>(rois.size()), G.c(), pool_h, pool_w);
  if (argmax_out) argmax_out->assign(out.size(), -1);

  for (size_t ri = 0; ri < rois.size(); ++ri) {
    const RoI& roi = rois[ri];
    MLKP_CHECK(roi.batch_index >= 0 && roi.batch_index < G.n(),
               "RoI batch index " << roi.batch_index << " out of range for "
                                  << G.n() << " batch items");
    const RoI r = clipRoI(roi, G.h(), G.w());
    const Index y_start = static_cast<Index>(std::floor(r.y0));
    const Index x_start = static_cast<Index>(std::floor(r.x0));
    const Index y_end = static_cast<Index>(std::floor(r.y1));
    const Index x_end = static_cast<Index>(std::floor(r.x1));
    const Index H = std::max<Index>(y_end - y_start + 1, 1);
    const Index W = std::max<Index>(x_end - x_start + 1, 1);

    for (Index i = 0; i < pool_h; ++i) {
      Index h0 = y_start + (i * H) / pool_h;
      Index h1 = y_start + ((i + 1) * H + pool_h - 1) / pool_h - 1;
      h0 = std::min(std::max<Index>(h0, 0), G.h() - 1);
      h1 = std::min(std::max(h1, h0), G.h() - 1);  // each cell covers >= 1 row
      for (Index j = 0; j < pool_w; ++j) {
        Index w0 = x_start + (j * W) / pool_w;
        Index w1 = x_start + ((j + 1) * W + pool_w - 1) / pool_w - 1;
        w0 = std::min(std::max<Index>(w0, 0), G.w() - 1);
        w1 = std::min(std::max(w1, w0), G.w() - 1);
        for (Index c = 0; c < G.c(); ++c) {
          Scalar best = G(roi.batch_index, c, h0, w0);
          Index best_idx =
              ((roi.batch_index * G.c() + c) * G.h() + h0) * G.w() + w0;
          for (Index y = h0; y <= h1; ++y)
            for (Index x = w0; x <= w1; ++x) {
              const Scalar v = G(roi.batch_index, c, y, x);
              if (v > best) {
                best = v;
                best_idx =
                    ((roi.batch_index * G.c() + c) * G.h() + y) * G.w() + x;
              }
            }
          out(static_cast<Index>(ri), c, i, j) = best;
          if (argmax_out)
            (*argmax_out)[((static_cast<Index>(ri) * G.c() + c) * pool_h + i) *
                              pool_w +
                          j] = best_idx;
        }
      }
    }
  }
  return out;
}

// Routes each pooled gradient entirely to its argmax input location.
template <typename Scalar>
Tensor<Scalar> maxRoiPoolBackward(const Tensor<Scalar>& grad_pooled,
                                  const std::vector<Index>& argmax,
                                  Index n, Index c, Index h, Index w) {
  MLKP_CHECK(static_cast<Index>(argmax.size()) == grad_pooled.size(),
             "argmax size " << argmax.size() << " != pooled grad size "
                            << grad_pooled.size());
  Tensor<Scalar> grad_G(n, c, h, w);
  for (Index i = 0; i < grad_pooled.size(); ++i) {
    const Index target = argmax[i];
    MLKP_CHECK(target >= 0 && target < grad_G.size(),
               "argmax index " << target << " out of range");
    grad_G.data()[target] += grad_pooled.data()[i];
  }
  return grad_G;
}

}  // namespace mlkp

#endif  // MLKP_ROI_HPP
