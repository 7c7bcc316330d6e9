#pragma once

#include "parallax/core/adam.hpp"
#include "parallax/core/ops.hpp"
#include "parallax/core/random.hpp"

namespace parallax {

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

namespace detail {

struct ConvLayer {
    Tensor w;  // (O,C,kh,kw)
    Tensor b;  // (O,1,1)
    int stride = 1;

    static ConvLayer make(Rng& rng, int in_ch, int out_ch, int ksize, int stride,
                          bool zero_init = false) {
        ConvLayer l;
        std::vector<double> wv(static_cast<size_t>(out_ch) * in_ch * ksize * ksize, 0.0);
        if (!zero_init) {
            const double stddev = std::sqrt(2.0 / (in_ch * ksize * ksize));
            for (double& v : wv) v = rng.normal(0.0, stddev);
        }
        l.w = Tensor::from({out_ch, in_ch, ksize, ksize}, std::move(wv)).set_requires_grad();
        l.b = Tensor::zeros({out_ch, 1, 1}).set_requires_grad();
        l.stride = stride;
        return l;
    }

    Tensor operator()(const Tensor& x) const {
        return add(conv2d(x, w, stride, Padding::same), b);
    }

    void collect(const std::string& prefix, NamedTensors& out) const {
        out.emplace_back(prefix + ".w", w);
        out.emplace_back(prefix + ".b", b);
    }
};

// Nearest upsample by 2 then crop to the skip connection's spatial size
// (odd encoder sizes round up under stride-2 same padding).
inline Tensor up_to(const Tensor& x, int h, int w) {
    Tensor u = upsample_nearest2(x);
    const int c = u.shape()[0];
    check(u.shape()[1] >= h && u.shape()[2] >= w, "up_to: upsampled size too small");
    if (u.shape()[1] == h && u.shape()[2] == w) return u;
    return slice(u, {0, 0, 0}, {c, h, w});
}

}  // namespace detail

// Fully convolutional encoder-decoder predicting strictly positive dense
// depth at scales {1, 1/2, 1/4, 1/8}. Encoder: four stride-2 3x3 conv blocks
// (16/32/64/128 channels); decoder: nearest upsampling with skip connections.
// Depth positivity via 1/(10*sigmoid(x) + 0.01), range approximately
// [0.1, 100] scene units.
class DepthNet {
public:
    explicit DepthNet(uint64_t seed = 1) {
        Rng rng(seed);
        enc1_ = detail::ConvLayer::make(rng, 3, 16, 3, 2);
        enc2_ = detail::ConvLayer::make(rng, 16, 32, 3, 2);
        enc3_ = detail::ConvLayer::make(rng, 32, 64, 3, 2);
        enc4_ = detail::ConvLayer::make(rng, 64, 128, 3, 2);
        dec3_ = detail::ConvLayer::make(rng, 128 + 64, 64, 3, 1);
        dec2_ = detail::ConvLayer::make(rng, 64 + 32, 32, 3, 1);
        dec1_ = detail::ConvLayer::make(rng, 32 + 16, 16, 3, 1);
        dec0_ = detail::ConvLayer::make(rng, 16, 16, 3, 1);
        head0_ = detail::ConvLayer::make(rng, 16, 1, 3, 1);
        head1_ = detail::ConvLayer::make(rng, 16, 1, 3, 1);
        head2_ = detail::ConvLayer::make(rng, 32, 1, 3, 1);
        head3_ = detail::ConvLayer::make(rng, 64, 1, 3, 1);
    }

    // Returns depth maps (H,W), (H/2,W/2), (H/4,W/4), (H/8,W/8).
    std::array<Tensor, 4> forward(const Tensor& image) const {
        check(image.shape().size() == 3 && image.shape()[0] == 3,
              "DepthNet: input must be (3,H,W), got " + shape_str(image.shape()));
        const int h = image.shape()[1], w = image.shape()[2];
        check(h % 8 == 0 && w % 8 == 0,
              "DepthNet: H and W must be divisible by 8, got " + shape_str(image.shape()));
        Tensor e1 = relu(enc1_(image));                    // (16, H/2,  W/2)
        Tensor e2 = relu(enc2_(e1));                       // (32, H/4,  W/4)
        Tensor e3 = relu(enc3_(e2));                       // (64, H/8,  W/8)
        Tensor e4 = relu(enc4_(e3));                       // (128,~H/16,~W/16)
        Tensor d3 = relu(dec3_(concat({detail::up_to(e4, e3.shape()[1], e3.shape()[2]), e3}, 0)));
        Tensor d2 = relu(dec2_(concat({detail::up_to(d3, e2.shape()[1], e2.shape()[2]), e2}, 0)));
        Tensor d1 = relu(dec1_(concat({detail::up_to(d2, e1.shape()[1], e1.shape()[2]), e1}, 0)));
        Tensor d0 = relu(dec0_(detail::up_to(d1, h, w)));
        return {to_depth(head0_(d0)), to_depth(head1_(d1)), to_depth(head2_(d2)),
                to_depth(head3_(d3))};
    }

    NamedTensors named_parameters() const {
        NamedTensors out;
        enc1_.collect("depth.enc1", out);
        enc2_.collect("depth.enc2", out);
        enc3_.collect("depth.enc3", out);
        enc4_.collect("depth.enc4", out);
        dec3_.collect("depth.dec3", out);
        dec2_.collect("depth.dec2", out);
        dec1_.collect("depth.dec1", out);
        dec0_.collect("depth.dec0", out);
        head0_.collect("depth.head0", out);
        head1_.collect("depth.head1", out);
        head2_.collect("depth.head2", out);
        head3_.collect("depth.head3", out);
        return out;
    }

    // Convolution weight tensors (no biases), for L2 regularization.
    std::vector<Tensor> weight_tensors() const {
        return {enc1_.w, enc2_.w, enc3_.w, enc4_.w, dec3_.w, dec2_.w,
                dec1_.w, dec0_.w, head0_.w, head1_.w, head2_.w, head3_.w};
    }

private:
    static Tensor to_depth(const Tensor& logits) {
        const int h = logits.shape()[1], w = logits.shape()[2];
        return reshape(div(Tensor::scalar(1.0), sigmoid(logits) * 10.0 + 0.01), {h, w});
    }

    detail::ConvLayer enc1_, enc2_, enc3_, enc4_;
    detail::ConvLayer dec3_, dec2_, dec1_, dec0_;
    detail::ConvLayer head0_, head1_, head2_, head3_;
};

// Shared architecture for the ego-motion and object-motion estimators: the
// depth encoder followed by global average pooling and a zero-initialized
// linear head emitting two 6-vectors (t,r per transform), scaled by 0.01 so
// initial motions are exactly zero.
class MotionNet {
public:
    explicit MotionNet(uint64_t seed = 2) {
        Rng rng(seed);
        enc1_ = detail::ConvLayer::make(rng, 9, 16, 3, 2);
        enc2_ = detail::ConvLayer::make(rng, 16, 32, 3, 2);
        enc3_ = detail::ConvLayer::make(rng, 32, 64, 3, 2);
        enc4_ = detail::ConvLayer::make(rng, 64, 128, 3, 2);
        head_w_ = Tensor::zeros({12, 128}).set_requires_grad();
        head_b_ = Tensor::zeros({12}).set_requires_grad();
    }

    // Input: channel-stacked triplet (9,H,W). Output: two 6-vectors
    // (first -> second frame, second -> third frame).
    std::pair<Tensor, Tensor> forward(const Tensor& stacked) const {
        check(stacked.shape().size() == 3 && stacked.shape()[0] == 9,
              "MotionNet: input must be (9,H,W), got " + shape_str(stacked.shape()));
        Tensor e = relu(enc1_(stacked));
        e = relu(enc2_(e));
        e = relu(enc3_(e));
        e = relu(enc4_(e));
        Tensor pooled = mean(e, {1, 2});                        // (128)
        Tensor prod = mul(head_w_, reshape(pooled, {1, 128}));  // (12,128)
        Tensor out = (sum(prod, {1}) + head_b_) * 0.01;         // (12)
        return {slice(out, {0}, {6}), slice(out, {6}, {12})};
    }

    NamedTensors named_parameters() const {
        NamedTensors out;
        enc1_.collect(prefix_ + ".enc1", out);
        enc2_.collect(prefix_ + ".enc2", out);
        enc3_.collect(prefix_ + ".enc3", out);
        enc4_.collect(prefix_ + ".enc4", out);
        out.emplace_back(prefix_ + ".head.w", head_w_);
        out.emplace_back(prefix_ + ".head.b", head_b_);
        return out;
    }

    std::vector<Tensor> weight_tensors() const {
        return {enc1_.w, enc2_.w, enc3_.w, enc4_.w, head_w_};
    }

    void set_name(std::string prefix) { prefix_ = std::move(prefix); }
    const std::string& name() const { return prefix_; }

private:
    std::string prefix_ = "motion";
    detail::ConvLayer enc1_, enc2_, enc3_, enc4_;
    Tensor head_w_, head_b_;
};

inline int parameter_count(const NamedTensors& params) {
    int n = 0;
    for (const auto& [name, t] : params) n += t.size();
    return n;
}

}  // namespace parallax
