#pragma once

#include "ctdn/encoders.hpp"
#include "ctdn/nn.hpp"

namespace ctdn {

// Small 4-level encoder-decoder with skip connections for stage 3.
// Feature maps are (h*w, C) row-major; input height/width must be
// divisible by 8.
class Segmenter {
public:
    Segmenter(int n_classes, int base_channels, uint64_t seed);

    // Returns per-pixel logits, shape (h*w, n_classes + 1), column 0 = background.
    ag::Tensor forward(const ImageTensor& image) const;
    Eigen::MatrixXi predict(const ImageTensor& image) const;

    nn::ParamStore& params() { return params_; }
    const nn::ParamStore& params() const { return params_; }
    int n_classes() const { return n_classes_; }
    int base_channels() const { return base_; }

private:
    struct Conv {
        ag::Tensor weight, bias;
    };
    Conv make_conv(const std::string& name, int cin, int cout, Rng& rng);

    int n_classes_;
    int base_;
    nn::ParamStore params_;
    Conv enc0_, enc1_, enc2_, enc3_, dec2_, dec1_, dec0_, head_;
};

}  // namespace ctdn
