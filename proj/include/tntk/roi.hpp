#pragma once

// Perspective RoI transform: solve the homography mapping a fixed-height,
// variable-width rectangle onto the quad (in feature-map coordinates) and
// sample the shared feature map bilinearly. Gradients flow into the feature
// map only; the sampling grid is constant.

#include "tntk/geometry.hpp"
#include "tntk/nn_ops.hpp"

namespace tntk {

template <class T>
struct RoiFeature {
    Tensor<T> feat;  // [h_t, w_t, C]
    Quad source;     // quad in input-image pixels
    int w_t = 0;
};

// fmap is one image's fused feature map [Hf, Wf, C]; quad is given in input
// image pixels and divided by the feature stride before solving.
template <class T>
RoiFeature<T> extract_roi(Tape<T>& tape, const Tensor<T>& fmap, const Quad& quad,
                          int h_t, int w_max, int stride = 4) {
    RoiFeature<T> roi;
    roi.source = quad;
    roi.w_t = roi_width(quad, h_t, w_max);
    const Homography hom =
        solve_homography(quad.scaled(1.0 / static_cast<double>(stride)), roi.w_t, h_t);
    roi.feat = perspective_sample(tape, fmap, hom, roi.w_t, h_t);
    return roi;
}

}  // namespace tntk
