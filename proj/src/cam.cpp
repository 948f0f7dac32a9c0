#include "ctdn/cam.hpp"

#include "ctdn/interp.hpp"

#include <cmath>
#include <deque>

namespace ctdn {

void CamMap::validate() const {
    check_arg(values.allFinite() && values.minCoeff() >= 0.0,
              "CamMap: values must be finite and nonnegative");
}

namespace {

// Min-max to [0, 1]. All-zero maps stay zero; constant positive maps become
// all-ones.
Mat min_max_normalize(const Mat& m) {
    const double lo = m.minCoeff(), hi = m.maxCoeff();
    if (hi - lo < 1e-12) return hi > 0.0 ? Mat::Ones(m.rows(), m.cols()) : Mat::Zero(m.rows(), m.cols());
    return (m.array() - lo) / (hi - lo);
}

}  // namespace

CamMap gradcam(const VisualFeatures& features, const ClassLogitFn& class_logit_fn, int class_id) {
    check_arg(features.activation_node != nullptr && features.activation_node->requires_grad,
              "gradcam: activation carries no gradient (detached or frozen encoder)");
    const int h = features.grid_h, w = features.grid_w;
    const Eigen::Index hw = static_cast<Eigen::Index>(h) * w;
    check_arg(features.activation_node->value.rows() == hw, "gradcam: activation shape mismatch");

    ag::Tensor score = class_logit_fn(features);
    check_arg(score->value.size() == 1, "gradcam: class score must be scalar");
    features.activation_node->clear_grad();
    ag::backward(score);

    const Mat& g = features.activation_node->grad_or_zero();  // (hw, Z)
    Vec omega = g.colwise().mean();                           // spatial mean per channel
    Mat cam_flat = (features.activation_node->value * omega.transpose()).cwiseMax(0.0);
    Mat cam = Eigen::Map<Mat>(cam_flat.data(), h, w);

    CamMap out;
    out.class_id = class_id;
    out.values = min_max_normalize(cam);
    return out;
}

Mat aggregate_affinity(const VisualFeatures& features, int last_k) {
    const int layers = static_cast<int>(features.attention.size());
    check_arg(layers > 0, "aggregate_affinity: no captured attention");
    check_arg(last_k >= 1 && last_k <= layers, "aggregate_affinity: last_k out of range");
    const Eigen::Index n = features.attention.back().rows();
    Mat avg = Mat::Zero(n, n);
    for (int l = layers - last_k; l < layers; ++l) avg += features.attention[l];
    avg /= static_cast<double>(last_k);
    return avg.block(1, 1, n - 1, n - 1);  // drop the class-token row/column
}

Mat sinkhorn(const Mat& matrix, int max_iters, double tol) {
    check_arg(matrix.rows() == matrix.cols() && matrix.rows() > 0, "sinkhorn: matrix must be square");
    check_arg(matrix.minCoeff() >= 0.0, "sinkhorn: entries must be nonnegative");
    for (Eigen::Index i = 0; i < matrix.rows(); ++i) {
        check_arg(matrix.row(i).maxCoeff() > 0.0,
                  "sinkhorn: degenerate matrix, row " + std::to_string(i) + " is zero");
        check_arg(matrix.col(i).maxCoeff() > 0.0,
                  "sinkhorn: degenerate matrix, column " + std::to_string(i) + " is zero");
    }
    Mat m = matrix;
    for (int it = 0; it < max_iters; ++it) {
        for (Eigen::Index i = 0; i < m.rows(); ++i) m.row(i) /= m.row(i).sum();
        for (Eigen::Index j = 0; j < m.cols(); ++j) m.col(j) /= m.col(j).sum();
        double dev = 0.0;
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            dev = std::max(dev, std::abs(m.row(i).sum() - 1.0));
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            dev = std::max(dev, std::abs(m.col(j).sum() - 1.0));
        if (dev < tol) break;
    }
    return m;
}

AffinityMatrix affinity_matrix(const Mat& raw, int max_iters, double tol) {
    Mat s = sinkhorn(raw, max_iters, tol);
    AffinityMatrix aff;
    aff.values = 0.5 * (s + s.transpose());
    return aff;
}

BoxMask box_mask(const CamMap& cam, double tau_box) {
    check_arg(tau_box > 0.0 && tau_box < 1.0, "box_mask: tau_box must be in (0, 1)");
    const int h = static_cast<int>(cam.values.rows());
    const int w = static_cast<int>(cam.values.cols());
    BoxMask mask;
    mask.values = Mat::Zero(h, w);
    const double peak = cam.values.maxCoeff();
    if (peak <= 0.0) return mask;
    const double thresh = tau_box * peak;

    Eigen::MatrixXi comp = Eigen::MatrixXi::Constant(h, w, -1);
    int n_comp = 0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (cam.values(y, x) < thresh || comp(y, x) >= 0) continue;
            // BFS over the 4-neighborhood
            int y_min = y, y_max = y, x_min = x, x_max = x;
            std::deque<std::pair<int, int>> queue{{y, x}};
            comp(y, x) = n_comp;
            while (!queue.empty()) {
                auto [cy, cx] = queue.front();
                queue.pop_front();
                y_min = std::min(y_min, cy); y_max = std::max(y_max, cy);
                x_min = std::min(x_min, cx); x_max = std::max(x_max, cx);
                const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
                for (int k = 0; k < 4; ++k) {
                    int ny = cy + dy[k], nx = cx + dx[k];
                    if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
                    if (cam.values(ny, nx) < thresh || comp(ny, nx) >= 0) continue;
                    comp(ny, nx) = n_comp;
                    queue.emplace_back(ny, nx);
                }
            }
            ++n_comp;
            mask.values.block(y_min, x_min, y_max - y_min + 1, x_max - x_min + 1).setOnes();
        }
    }
    return mask;
}

CamMap refine_cam(const CamMap& cam, const AffinityMatrix& aff, const BoxMask& box) {
    const Eigen::Index h = cam.values.rows(), w = cam.values.cols();
    check_arg(box.values.rows() == h && box.values.cols() == w, "refine_cam: box shape mismatch");
    check_arg(aff.values.rows() == h * w && aff.values.cols() == h * w,
              "refine_cam: affinity shape mismatch");
    Mat flat = Eigen::Map<const Mat>(cam.values.data(), h * w, 1);
    Mat refined_flat = aff.values * flat;
    Mat refined = Eigen::Map<Mat>(refined_flat.data(), h, w);
    refined = refined.cwiseProduct(box.values);
    CamMap out;
    out.class_id = cam.class_id;
    out.values = min_max_normalize(refined);
    return out;
}

PseudoMask assemble_pseudo_mask(const std::vector<CamMap>& refined,
                                const std::vector<int>& present_classes, double tau_fg,
                                int out_h, int out_w, double gamma) {
    check_arg(!present_classes.empty() && refined.size() == present_classes.size(),
              "assemble_pseudo_mask: need one refined CAM per present class");
    const size_t k = refined.size();
    std::vector<Mat> up(k);
    for (size_t c = 0; c < k; ++c) {
        refined[c].validate();
        up[c] = bilinear_resize(refined[c].values, out_h, out_w);
    }

    PseudoMask pm;
    pm.labels.setZero(out_h, out_w);
    pm.unary.assign(k + 1, Mat::Zero(out_h, out_w));
    pm.fg_max = Mat::Zero(out_h, out_w);
    for (int y = 0; y < out_h; ++y) {
        for (int x = 0; x < out_w; ++x) {
            double best = 0.0;
            int best_c = -1;
            double fg_max = 0.0;
            for (size_t c = 0; c < k; ++c) {
                double v = up[c](y, x);
                fg_max = std::max(fg_max, v);
                if (best_c < 0 || v > best) {
                    best = v;
                    best_c = static_cast<int>(c);
                }
            }
            pm.fg_max(y, x) = fg_max;
            double bg = std::pow(std::clamp(1.0 - fg_max, 0.0, 1.0), gamma);
            double sum = bg;
            for (size_t c = 0; c < k; ++c) sum += up[c](y, x);
            pm.unary[0](y, x) = bg / sum;
            for (size_t c = 0; c < k; ++c) pm.unary[c + 1](y, x) = up[c](y, x) / sum;

            // Argmax over [bg, cams], ties toward background; weak foreground
            // is forced to background.
            pm.labels(y, x) =
                (fg_max >= tau_fg && best > bg) ? present_classes[static_cast<size_t>(best_c)] : 0;
        }
    }
    return pm;
}

}  // namespace ctdn
