#pragma once

#include "ctdn/autograd.hpp"
#include "ctdn/encoders.hpp"

#include <functional>
#include <vector>

namespace ctdn {

struct CamMap {
    Mat values;  // (h, w), nonnegative
    int class_id = -1;

    void validate() const;
};

struct AffinityMatrix {
    Mat values;  // (h*w, h*w), symmetric, doubly stochastic up to tolerance
};

struct BoxMask {
    Mat values;  // (h, w), entries in {0, 1}
};

struct PseudoMask {
    Eigen::MatrixXi labels;          // (H, W), 0 = background
    std::vector<Mat> unary;          // K+1 channel maps, each (H, W); per-pixel sums = 1
    Mat fg_max;                      // (H, W), max upsampled CAM value per pixel
};

// Scalar class-score function over one forward pass; must be built on the
// same graph as `features`.
using ClassLogitFn = std::function<ag::Tensor(const VisualFeatures&)>;

// Grad-CAM: channel weights are the spatial means of d(score)/d(activation);
// the map is min-max normalized to [0, 1] after the ReLU (all-zero maps stay
// zero).
CamMap gradcam(const VisualFeatures& features, const ClassLogitFn& class_logit_fn, int class_id);

// Head-averaged attention, averaged over the final `last_k` blocks, patch
// block only (class-token row/column dropped).
Mat aggregate_affinity(const VisualFeatures& features, int last_k);

// Alternating row/column normalization.
Mat sinkhorn(const Mat& matrix, int max_iters, double tol);

// (sinkhorn(raw) + sinkhorn(raw)^T) / 2
AffinityMatrix affinity_matrix(const Mat& raw, int max_iters = 10, double tol = 1e-3);

// Threshold at tau_box * max, 4-connected components, filled bounding boxes.
BoxMask box_mask(const CamMap& cam, double tau_box);

// Eq-style refinement: box .* (Aff * vec(cam)), then min-max re-normalized.
CamMap refine_cam(const CamMap& cam, const AffinityMatrix& aff, const BoxMask& box);

// Upsample refined CAMs to (H, W), build the background channel as
// clamp(1 - max_c cam_c)^gamma, normalize per pixel, and argmax with the
// foreground threshold tau_fg.
PseudoMask assemble_pseudo_mask(const std::vector<CamMap>& refined,
                                const std::vector<int>& present_classes, double tau_fg,
                                int out_h, int out_w, double gamma = 1.0);

}  // namespace ctdn
