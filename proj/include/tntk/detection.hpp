#pragma once

// Detection supervision and decoding: ground-truth score/geometry/mask maps
// from annotated quads, the balanced detection loss, and quad decoding from
// predicted maps.

#include <algorithm>
#include <string>
#include <vector>

#include "tntk/geometry.hpp"
#include "tntk/model.hpp"
#include "tntk/nn_ops.hpp"

namespace tntk {

struct Instance {
    Quad quad;
    std::string text;
    bool ignore = false;
};

// Single-image training targets at stride 4. Feature pixel (i,j) corresponds
// to input coordinates (4j+2, 4i+2); geometry channels 2k/2k+1 hold
// (corner_k - pixel)/nd for the enclosing quad.
template <class T>
struct DetectionTargets {
    Tensor<T> score_gt;     // [Hf, Wf, 1], binary
    Tensor<T> geometry_gt;  // [Hf, Wf, 8]
    Tensor<T> mask;         // [Hf, Wf, 1]; 0 inside ignore quads and in the
                            // shrink margin of positive quads
    int skipped = 0;        // degenerate annotations dropped
};

namespace detail {

inline Quad clip_to_image(const Quad& q, int img_w, int img_h) {
    Quad c = q;
    for (auto& p : c.v) {
        p.x = std::clamp(p.x, 0.0, static_cast<double>(img_w));
        p.y = std::clamp(p.y, 0.0, static_cast<double>(img_h));
    }
    return c;
}

// Iterate feature pixels whose input-space center lies inside `region`.
template <class F>
inline void for_pixels_inside(const Quad& region, int hf, int wf, F&& fn) {
    double lox = 1e30, loy = 1e30, hix = -1e30, hiy = -1e30;
    for (const Vec2& p : region.v) {
        lox = std::min(lox, p.x);
        loy = std::min(loy, p.y);
        hix = std::max(hix, p.x);
        hiy = std::max(hiy, p.y);
    }
    const int j0 = std::max(0, static_cast<int>((lox - 2.0) / 4.0));
    const int j1 = std::min(wf - 1, static_cast<int>((hix - 2.0) / 4.0 + 1.0));
    const int i0 = std::max(0, static_cast<int>((loy - 2.0) / 4.0));
    const int i1 = std::min(hf - 1, static_cast<int>((hiy - 2.0) / 4.0 + 1.0));
    for (int i = i0; i <= i1; ++i)
        for (int j = j0; j <= j1; ++j) {
            const Vec2 center{4.0 * j + 2.0, 4.0 * i + 2.0};
            if (point_in_convex(region, center)) fn(i, j, center);
        }
}

}  // namespace detail

// Positive region: the quad shrunk toward its centroid by factor 0.3
// (v' = c + 0.7 (v - c)). Pixels of a positive quad outside the shrunk core
// are excluded from the classification loss; ignore-flagged quads zero the
// mask over their full extent.
template <class T>
DetectionTargets<T> make_targets(const std::vector<Instance>& instances,
                                 int img_w, int img_h, double nd) {
    if (img_w % 4 != 0 || img_h % 4 != 0)
        throw ValueError("make_targets: image dims must be divisible by 4");
    const int wf = img_w / 4;
    const int hf = img_h / 4;
    DetectionTargets<T> t;
    t.score_gt = Tensor<T>::zeros({hf, wf, 1});
    t.geometry_gt = Tensor<T>::zeros({hf, wf, 8});
    t.mask = Tensor<T>::full({hf, wf, 1}, T(1));

    std::vector<Quad> valid;
    std::vector<const Instance*> valid_src;
    for (const Instance& inst : instances) {
        if (inst.ignore) continue;
        const Quad q = detail::clip_to_image(inst.quad, img_w, img_h);
        if (q.area() < 1.0 || !q.convex()) {
            ++t.skipped;
            continue;
        }
        valid.push_back(q);
        valid_src.push_back(&inst);
    }

    // shrink margin first, positives restore the mask afterwards
    for (const Quad& q : valid)
        detail::for_pixels_inside(q, hf, wf, [&](int i, int j, Vec2) {
            t.mask[static_cast<std::size_t>(i * wf + j)] = T(0);
        });
    for (const Quad& q : valid) {
        const Quad core = q.shrunk(0.7);
        detail::for_pixels_inside(core, hf, wf, [&](int i, int j, Vec2 center) {
            const std::size_t px = static_cast<std::size_t>(i * wf + j);
            t.score_gt[px] = T(1);
            t.mask[px] = T(1);
            for (int k = 0; k < 4; ++k) {
                const Vec2 corner = q.v[static_cast<std::size_t>(k)];
                t.geometry_gt[px * 8 + static_cast<std::size_t>(2 * k)] =
                    static_cast<T>((corner.x - center.x) / nd);
                t.geometry_gt[px * 8 + static_cast<std::size_t>(2 * k + 1)] =
                    static_cast<T>((corner.y - center.y) / nd);
            }
        });
    }
    for (const Instance& inst : instances) {
        if (!inst.ignore) continue;
        const Quad q = detail::clip_to_image(inst.quad, img_w, img_h);
        if (q.area() < 1.0 || !q.convex()) continue;
        detail::for_pixels_inside(q, hf, wf, [&](int i, int j, Vec2) {
            const std::size_t px = static_cast<std::size_t>(i * wf + j);
            t.mask[px] = T(0);
            t.score_gt[px] = T(0);
        });
    }
    return t;
}

// Stack per-image targets into batch tensors [N,Hf,Wf,*].
template <class T>
struct BatchTargets {
    Tensor<T> score_gt, geometry_gt, mask;
    int skipped = 0;
};

template <class T>
BatchTargets<T> stack_targets(const std::vector<DetectionTargets<T>>& per_image) {
    if (per_image.empty()) throw UsageError("stack_targets: empty batch");
    const Shape& s0 = per_image[0].score_gt.shape();
    const int n = static_cast<int>(per_image.size());
    BatchTargets<T> b;
    b.score_gt = Tensor<T>::zeros({n, s0[0], s0[1], 1});
    b.geometry_gt = Tensor<T>::zeros({n, s0[0], s0[1], 8});
    b.mask = Tensor<T>::zeros({n, s0[0], s0[1], 1});
    for (int i = 0; i < n; ++i) {
        const auto& t = per_image[static_cast<std::size_t>(i)];
        b.skipped += t.skipped;
        std::copy(t.score_gt.value().begin(), t.score_gt.value().end(),
                  b.score_gt.data() + static_cast<std::size_t>(i) * t.score_gt.size());
        std::copy(t.geometry_gt.value().begin(), t.geometry_gt.value().end(),
                  b.geometry_gt.data() +
                      static_cast<std::size_t>(i) * t.geometry_gt.size());
        std::copy(t.mask.value().begin(), t.mask.value().end(),
                  b.mask.data() + static_cast<std::size_t>(i) * t.mask.size());
    }
    return b;
}

template <class T>
struct DetectionLoss {
    Tensor<T> total;  // L_quad + lambda * L_cls
    double l_quad = 0.0;
    double l_cls = 0.0;
    bool no_positives = false;
};

// L_cls: class-balanced binary cross-entropy over masked pixels (positive and
// negative classes weighted inversely to their counts). L_quad: mean over
// positive pixels of the 8-channel smooth-L1 on normalized offsets.
template <class T>
DetectionLoss<T> detection_loss(Tape<T>& tape, const DetectionMaps<T>& maps,
                                const BatchTargets<T>& gt, T lambda) {
    detail::check_same_shape("detection_loss", maps.score_logits, gt.score_gt);
    detail::check_same_shape("detection_loss", maps.geometry, gt.geometry_gt);

    const std::size_t npix = gt.mask.size();
    double n_pos = 0.0, n_neg = 0.0;
    for (std::size_t i = 0; i < npix; ++i) {
        if (gt.mask[i] == T(0)) continue;
        if (gt.score_gt[i] > T(0.5))
            n_pos += 1.0;
        else
            n_neg += 1.0;
    }
    const double n_mask = n_pos + n_neg;
    const double w_pos = n_mask / (2.0 * std::max(n_pos, 1.0));
    const double w_neg = n_mask / (2.0 * std::max(n_neg, 1.0));

    Tensor<T> weights = Tensor<T>::zeros(gt.mask.shape());
    Tensor<T> pos_mask = Tensor<T>::zeros(gt.mask.shape());
    for (std::size_t i = 0; i < npix; ++i) {
        if (gt.mask[i] == T(0)) continue;
        const bool pos = gt.score_gt[i] > T(0.5);
        weights[i] = static_cast<T>(pos ? w_pos : w_neg);
        if (pos) pos_mask[i] = T(1);
    }

    auto cls_sum = bce_logits_sum(tape, maps.score_logits, gt.score_gt, weights);
    auto l_cls = scale(tape, cls_sum, static_cast<T>(1.0 / std::max(n_mask, 1.0)));

    auto diff = sub(tape, maps.geometry, gt.geometry_gt);
    auto per_px = mul_bcast_last(tape, smooth_l1(tape, diff), pos_mask);
    auto l_quad =
        scale(tape, sum(tape, per_px), static_cast<T>(1.0 / std::max(n_pos, 1.0)));

    DetectionLoss<T> out;
    out.total = add(tape, l_quad, scale(tape, l_cls, lambda));
    out.l_quad = static_cast<double>(l_quad.item());
    out.l_cls = static_cast<double>(l_cls.item());
    out.no_positives = n_pos == 0.0;
    return out;
}

// Emit a quad for every pixel above the score threshold:
// corner_k = pixel_center + nd * offset_k. Non-convex or non-positive-area
// candidates are dropped so downstream IoU/NMS stay well defined.
template <class T>
std::vector<Quad> decode_quads(const DetectionMaps<T>& maps, int image_index,
                               double score_thresh, double nd) {
    if (!(score_thresh > 0.0 && score_thresh < 1.0))
        throw ValueError("decode_quads: score threshold must lie in (0,1)");
    const Shape& s = maps.score.shape();
    const int hf = s[1], wf = s[2];
    const std::size_t img_off =
        static_cast<std::size_t>(image_index) * static_cast<std::size_t>(hf) *
        static_cast<std::size_t>(wf);
    std::vector<Quad> out;
    for (int i = 0; i < hf; ++i) {
        for (int j = 0; j < wf; ++j) {
            const std::size_t px = img_off + static_cast<std::size_t>(i * wf + j);
            const double p = static_cast<double>(maps.score[px]);
            if (p <= score_thresh) continue;
            const Vec2 center{4.0 * j + 2.0, 4.0 * i + 2.0};
            Quad q;
            q.score = p;
            for (int k = 0; k < 4; ++k) {
                q.v[static_cast<std::size_t>(k)] = {
                    center.x + nd * static_cast<double>(
                                        maps.geometry[px * 8 + static_cast<std::size_t>(2 * k)]),
                    center.y + nd * static_cast<double>(
                                        maps.geometry[px * 8 + static_cast<std::size_t>(2 * k + 1)])};
            }
            if (!q.convex() || q.signed_area() <= 0.0) continue;
            out.push_back(q);
        }
    }
    return out;
}

}  // namespace tntk
