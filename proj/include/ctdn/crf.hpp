#pragma once

#include "ctdn/encoders.hpp"

#include <vector>

namespace ctdn {

struct CrfParams {
    int n_iters = 5;
    double w_appearance = 4.0;
    double w_smoothness = 3.0;
    double theta_alpha = 30.0;  // appearance position bandwidth (pixels)
    double theta_beta = 13.0;   // appearance color bandwidth (0-255 scale)
    double theta_gamma = 3.0;   // smoothness position bandwidth (pixels)

    void validate() const;
};

// Fully-connected mean-field CRF with Potts compatibility, exact O(N^2)
// message passing. `unary` holds K channel maps of shape (H, W) whose
// per-pixel sums are 1. Returns distributions of the same layout.
std::vector<Mat> dense_crf(const std::vector<Mat>& unary, const ImageTensor& image,
                           const CrfParams& params);

// Per-pixel argmax, ties broken toward the smaller class index.
Eigen::MatrixXi crf_argmax(const std::vector<Mat>& probs);

}  // namespace ctdn
