#pragma once

// Shared feature extractor: a small multi-scale CNN backbone, the per-pixel
// scale-attention fusion producing the stride-4 feature map F, and the
// fully-convolutional detection head predicting score and geometry maps.

#include <array>
#include <string>
#include <vector>

#include "tntk/layers.hpp"
#include "tntk/ops.hpp"

namespace tntk {

struct ModelConfig {
    std::array<int, 4> backbone_widths{32, 64, 96, 128};
    int convblock_c1 = 64;  // 3x3 width inside each fusion conv block
    static constexpr int fused_channels = 128;
    int h_t = 8;
    int w_max = 64;
    int recog_conv_channels = 128;
    int recog_conv_layers = 4;
    int enc_hidden = 128;
    int dec_hidden = 128;
    int embed_dim = 64;
    int attn_dim = 128;
    bool enc_bidirectional = false;
    int max_decode_steps = 32;
    double nd = 128.0;  // geometry offset normalization, in pixels
};

// Four feature maps at strides 4, 8, 16, 32.
template <class T>
using PyramidFeatures = std::array<Tensor<T>, 4>;

template <class T>
class Backbone {
  public:
    Backbone(const ModelConfig& cfg, ParamSet<T>& ps, Rng& rng) {
        int ci = 3;
        for (int s = 0; s < 4; ++s) {
            const int co = cfg.backbone_widths[static_cast<std::size_t>(s)];
            const std::string prefix = "backbone.stage" + std::to_string(s);
            // stage 0 downsamples twice to reach stride 4 directly
            stages_[static_cast<std::size_t>(s)][0] =
                ConvBn<T>(rng, ps, prefix + ".conv0", 3, 3, ci, co, 2);
            stages_[static_cast<std::size_t>(s)][1] =
                ConvBn<T>(rng, ps, prefix + ".conv1", 3, 3, co, co, s == 0 ? 2 : 1);
            ci = co;
        }
    }

    // image [N,H,W,3] with H, W divisible by 32
    PyramidFeatures<T> extract_pyramid(Tape<T>& tape, const Tensor<T>& image,
                                       bool training) {
        if (image.rank() != 4 || image.dim(3) != 3)
            throw ShapeError("extract_pyramid: expected [N,H,W,3], got " +
                             shape_str(image.shape()));
        if (image.dim(1) % 32 != 0 || image.dim(2) % 32 != 0)
            throw ValueError("extract_pyramid: spatial dims must be divisible by "
                             "32 (pad the image first)");
        PyramidFeatures<T> levels;
        Tensor<T> x = image;
        for (std::size_t s = 0; s < 4; ++s) {
            x = stages_[s][0].forward(tape, x, training);
            x = stages_[s][1].forward(tape, x, training);
            levels[s] = x;
        }
        return levels;
    }

  private:
    std::array<std::array<ConvBn<T>, 2>, 4> stages_;
};

template <class T>
struct FusedFeature {
    Tensor<T> f;        // [N, H/4, W/4, 128]
    Tensor<T> weights;  // [N, H/4, W/4, 4] scale-attention, softmax-normalized
};

// Per-level conv blocks, bilinear upsampling to stride 4, and a per-location
// softmax over the four scales; F is the attention-weighted sum.
template <class T>
class FusionNeck {
  public:
    FusionNeck(const ModelConfig& cfg, ParamSet<T>& ps, Rng& rng) {
        for (int s = 0; s < 4; ++s) {
            const std::string prefix = "fusion.block" + std::to_string(s);
            auto& b = blocks_[static_cast<std::size_t>(s)];
            b.conv3 = ConvBn<T>(rng, ps, prefix + ".conv3", 3, 3,
                                cfg.backbone_widths[static_cast<std::size_t>(s)],
                                cfg.convblock_c1, 1);
            b.w1 = ps.add_param(prefix + ".w1",
                                init::conv_kernel<T>(rng, 1, 1, cfg.convblock_c1,
                                                     ModelConfig::fused_channels));
            b.b1 = ps.add_param(prefix + ".b1",
                                Tensor<T>::zeros({ModelConfig::fused_channels}));
        }
        fuse_w_ = ps.add_param(
            "fusion.fuse.w",
            init::conv_kernel<T>(rng, 1, 1, 4 * ModelConfig::fused_channels, 4));
        fuse_b_ = ps.add_param("fusion.fuse.b", Tensor<T>::zeros({4}));
    }

    FusedFeature<T> fuse(Tape<T>& tape, const PyramidFeatures<T>& pyr,
                         bool training) {
        std::vector<Tensor<T>> feats;
        feats.reserve(4);
        for (std::size_t s = 0; s < 4; ++s) {
            auto& b = blocks_[s];
            auto y = b.conv3.forward(tape, pyr[s], training);
            y = add_bias(tape, conv2d(tape, y, b.w1, 1, Padding::same), b.b1);
            if (s > 0) y = upsample_bilinear(tape, y, 1 << s);
            feats.push_back(y);
        }
        auto stacked = concat_last(tape, feats);
        auto logits =
            add_bias(tape, conv2d(tape, stacked, fuse_w_, 1, Padding::same), fuse_b_);
        auto weights = softmax(tape, logits, 3);
        std::vector<Tensor<T>> weighted;
        weighted.reserve(4);
        for (int s = 0; s < 4; ++s) {
            auto ws = slice_channels(tape, weights, s, 1);
            weighted.push_back(mul_bcast_last(tape, feats[static_cast<std::size_t>(s)], ws));
        }
        return FusedFeature<T>{add_n(tape, weighted), weights};
    }

  private:
    struct Block {
        ConvBn<T> conv3;
        Tensor<T> w1, b1;
    };
    std::array<Block, 4> blocks_;
    Tensor<T> fuse_w_, fuse_b_;
};

template <class T>
struct DetectionMaps {
    Tensor<T> score_logits;  // [N, Hf, Wf, 1]
    Tensor<T> score;         // sigmoid(score_logits)
    Tensor<T> geometry;      // [N, Hf, Wf, 8], corner offsets / nd
};

template <class T>
class DetectionHead {
  public:
    DetectionHead(ParamSet<T>& ps, Rng& rng) {
        score_w_ = ps.add_param(
            "det.score.w",
            init::conv_kernel<T>(rng, 3, 3, ModelConfig::fused_channels, 1));
        score_b_ = ps.add_param("det.score.b", Tensor<T>::zeros({1}));
        geo_w_ = ps.add_param(
            "det.geo.w",
            init::conv_kernel<T>(rng, 3, 3, ModelConfig::fused_channels, 8));
        geo_b_ = ps.add_param("det.geo.b", Tensor<T>::zeros({8}));
    }

    DetectionMaps<T> predict(Tape<T>& tape, const Tensor<T>& f) const {
        DetectionMaps<T> maps;
        maps.score_logits =
            add_bias(tape, conv2d(tape, f, score_w_, 1, Padding::same), score_b_);
        maps.score = sigmoid(tape, maps.score_logits);
        maps.geometry =
            add_bias(tape, conv2d(tape, f, geo_w_, 1, Padding::same), geo_b_);
        return maps;
    }

  private:
    Tensor<T> score_w_, score_b_, geo_w_, geo_b_;
};

}  // namespace tntk
