#pragma once

#include "ctdn/common.hpp"

#include <string>
#include <vector>

namespace ctdn {

struct MetricsReport {
    std::vector<double> per_class_iou;   // length K+1, index 0 = background; NaN if excluded
    double miou = 0.0;                   // mean over classes with nonzero union
    double pixel_accuracy = 0.0;
    Eigen::MatrixXd confusion;           // (K+1, K+1), row = ground truth, col = prediction
    std::vector<std::pair<std::string, double>> scalars;  // loss curves, wall-clock, ...

    std::string to_text() const;
};

// Per-class IoU including background as a class; classes absent from both
// prediction and ground truth carry no union and are excluded from the mean.
MetricsReport evaluate_miou(const std::vector<Eigen::MatrixXi>& pred_masks,
                            const std::vector<Eigen::MatrixXi>& gt_masks, int n_classes);

}  // namespace ctdn
