#include "ctdn/segmenter.hpp"

#include <cmath>

namespace ctdn {

Segmenter::Conv Segmenter::make_conv(const std::string& name, int cin, int cout, Rng& rng) {
    double s = std::sqrt(2.0 / (9.0 * cin));
    Mat w(9 * cin, cout);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.normal(0.0, s);
    Conv c;
    c.weight = params_.add(name + ".weight", std::move(w));
    c.bias = params_.add(name + ".bias", Mat::Zero(1, cout));
    return c;
}

Segmenter::Segmenter(int n_classes, int base_channels, uint64_t seed)
    : n_classes_(n_classes), base_(base_channels) {
    check_arg(n_classes >= 1 && base_channels >= 1, "Segmenter: bad sizes");
    Rng rng(seed);
    const int c = base_channels;
    enc0_ = make_conv("seg.enc0", 3, c, rng);
    enc1_ = make_conv("seg.enc1", c, 2 * c, rng);
    enc2_ = make_conv("seg.enc2", 2 * c, 4 * c, rng);
    enc3_ = make_conv("seg.enc3", 4 * c, 8 * c, rng);
    dec2_ = make_conv("seg.dec2", 12 * c, 4 * c, rng);
    dec1_ = make_conv("seg.dec1", 6 * c, 2 * c, rng);
    dec0_ = make_conv("seg.dec0", 3 * c, c, rng);
    head_ = make_conv("seg.head", c, n_classes + 1, rng);
}

ag::Tensor Segmenter::forward(const ImageTensor& image) const {
    const int h = image.h, w = image.w;
    check_arg(h % 8 == 0 && w % 8 == 0, "Segmenter: input size must be divisible by 8");
    using namespace ag;
    Tensor x = constant(image.rgb);

    Tensor e0 = relu(conv3x3(x, enc0_.weight, enc0_.bias, h, w));
    Tensor e1 = relu(conv3x3(avg_pool2x2(e0, h, w), enc1_.weight, enc1_.bias, h / 2, w / 2));
    Tensor e2 =
        relu(conv3x3(avg_pool2x2(e1, h / 2, w / 2), enc2_.weight, enc2_.bias, h / 4, w / 4));
    Tensor e3 =
        relu(conv3x3(avg_pool2x2(e2, h / 4, w / 4), enc3_.weight, enc3_.bias, h / 8, w / 8));

    Tensor d2 = relu(conv3x3(concat_cols({upsample2x_nearest(e3, h / 8, w / 8), e2}), dec2_.weight,
                             dec2_.bias, h / 4, w / 4));
    Tensor d1 = relu(conv3x3(concat_cols({upsample2x_nearest(d2, h / 4, w / 4), e1}), dec1_.weight,
                             dec1_.bias, h / 2, w / 2));
    Tensor d0 = relu(conv3x3(concat_cols({upsample2x_nearest(d1, h / 2, w / 2), e0}), dec0_.weight,
                             dec0_.bias, h, w));
    return conv3x3(d0, head_.weight, head_.bias, h, w);
}

Eigen::MatrixXi Segmenter::predict(const ImageTensor& image) const {
    Mat logits = forward(image)->value;
    Eigen::MatrixXi out(image.h, image.w);
    for (int y = 0; y < image.h; ++y)
        for (int x = 0; x < image.w; ++x) {
            Eigen::Index best;
            logits.row(static_cast<Eigen::Index>(y) * image.w + x).maxCoeff(&best);
            out(y, x) = static_cast<int>(best);
        }
    return out;
}

}  // namespace ctdn
