#include "ctdn/metrics.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace ctdn {

MetricsReport evaluate_miou(const std::vector<Eigen::MatrixXi>& pred_masks,
                            const std::vector<Eigen::MatrixXi>& gt_masks, int n_classes) {
    check_arg(n_classes >= 1, "evaluate_miou: n_classes must be positive");
    check_arg(pred_masks.size() == gt_masks.size() && !pred_masks.empty(),
              "evaluate_miou: prediction/ground-truth count mismatch");
    const int k1 = n_classes + 1;

    MetricsReport r;
    r.confusion = Eigen::MatrixXd::Zero(k1, k1);
    for (size_t i = 0; i < pred_masks.size(); ++i) {
        const auto& p = pred_masks[i];
        const auto& g = gt_masks[i];
        check_arg(p.rows() == g.rows() && p.cols() == g.cols(),
                  "evaluate_miou: mask shape mismatch at index " + std::to_string(i));
        check_arg(p.minCoeff() >= 0 && p.maxCoeff() <= n_classes && g.minCoeff() >= 0 &&
                      g.maxCoeff() <= n_classes,
                  "evaluate_miou: label out of range at index " + std::to_string(i));
        for (Eigen::Index j = 0; j < p.size(); ++j)
            r.confusion(g.data()[j], p.data()[j]) += 1.0;
    }

    r.per_class_iou.assign(static_cast<size_t>(k1), std::numeric_limits<double>::quiet_NaN());
    double iou_sum = 0.0;
    int counted = 0;
    for (int k = 0; k < k1; ++k) {
        double inter = r.confusion(k, k);
        double uni = r.confusion.row(k).sum() + r.confusion.col(k).sum() - inter;
        if (uni <= 0.0) continue;  // absent from both: excluded from the mean
        r.per_class_iou[static_cast<size_t>(k)] = inter / uni;
        iou_sum += inter / uni;
        ++counted;
    }
    check(counted > 0, "evaluate_miou: no class has nonzero union");
    r.miou = iou_sum / counted;
    r.pixel_accuracy = r.confusion.trace() / r.confusion.sum();
    return r;
}

std::string MetricsReport::to_text() const {
    std::ostringstream ss;
    ss.setf(std::ios::fixed);
    ss.precision(4);
    ss << "miou " << miou << "\npixel_accuracy " << pixel_accuracy << "\n";
    for (size_t k = 0; k < per_class_iou.size(); ++k)
        if (!std::isnan(per_class_iou[k])) ss << "iou_class_" << k << " " << per_class_iou[k] << "\n";
    for (const auto& [name, value] : scalars) ss << name << " " << value << "\n";
    return ss.str();
}

}  // namespace ctdn
