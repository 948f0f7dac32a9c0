#include "ctdn/crf.hpp"

#include <cmath>

namespace ctdn {

void CrfParams::validate() const {
    check_arg(n_iters >= 0, "CrfParams: n_iters must be >= 0");
    check_arg(w_appearance >= 0.0 && w_smoothness >= 0.0,
              "CrfParams: pairwise weights must be nonnegative");
    check_arg(theta_alpha > 0.0 && theta_beta > 0.0 && theta_gamma > 0.0,
              "CrfParams: kernel bandwidths must be positive");
}

std::vector<Mat> dense_crf(const std::vector<Mat>& unary, const ImageTensor& image,
                           const CrfParams& params) {
    params.validate();
    const size_t k = unary.size();
    check_arg(k >= 2, "dense_crf: need at least two classes");
    const int h = image.h, w = image.w;
    const Eigen::Index n = static_cast<Eigen::Index>(h) * w;
    check_arg(n <= 16384, "dense_crf: resolution exceeds the exact O(N^2) bound (H*W <= 16384)");
    for (const auto& u : unary)
        check_arg(u.rows() == h && u.cols() == w, "dense_crf: unary/image shape mismatch");
    for (Eigen::Index i = 0; i < n; ++i) {
        double s = 0.0;
        for (const auto& u : unary) s += u.data()[i];
        check_arg(std::abs(s - 1.0) <= 1e-6, "dense_crf: unary is not a per-pixel distribution");
    }

    if (params.n_iters == 0 || (params.w_appearance == 0.0 && params.w_smoothness == 0.0))
        return unary;  // exact fixed point

    // Combined pairwise kernel, kept in float: 16384^2 doubles would not fit.
    using MatF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    MatF kernel(n, n);
    const double ia = 0.5 / (params.theta_alpha * params.theta_alpha);
    const double ib = 0.5 / (params.theta_beta * params.theta_beta);
    const double ig = 0.5 / (params.theta_gamma * params.theta_gamma);
    for (Eigen::Index i = 0; i < n; ++i) {
        const int yi = static_cast<int>(i) / w, xi = static_cast<int>(i) % w;
        kernel(i, i) = 0.0f;  // mean field excludes the self message
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const int yj = static_cast<int>(j) / w, xj = static_cast<int>(j) % w;
            const double d2 = double(yi - yj) * (yi - yj) + double(xi - xj) * (xi - xj);
            double c2 = 0.0;
            for (int c = 0; c < 3; ++c) {
                const double dc = 255.0 * (image.rgb(i, c) - image.rgb(j, c));
                c2 += dc * dc;
            }
            const double val = params.w_appearance * std::exp(-d2 * ia - c2 * ib) +
                               params.w_smoothness * std::exp(-d2 * ig);
            kernel(i, j) = static_cast<float>(val);
            kernel(j, i) = static_cast<float>(val);
        }
    }

    // Negative log unary energies.
    Mat energy(n, k);
    for (size_t l = 0; l < k; ++l)
        for (Eigen::Index i = 0; i < n; ++i)
            energy(i, static_cast<Eigen::Index>(l)) = -std::log(std::max(unary[l].data()[i], 1e-12));

    Mat q(n, k);
    for (size_t l = 0; l < k; ++l)
        for (Eigen::Index i = 0; i < n; ++i) q(i, static_cast<Eigen::Index>(l)) = unary[l].data()[i];

    for (int it = 0; it < params.n_iters; ++it) {
        MatF m = kernel * q.cast<float>();  // (n, k) messages
        for (Eigen::Index i = 0; i < n; ++i) {
            const double total = m.row(i).cast<double>().sum();
            double best = -1e300;
            for (size_t l = 0; l < k; ++l) {
                // Potts compatibility: penalty from all labels except l.
                const double pen = total - double(m(i, static_cast<Eigen::Index>(l)));
                q(i, static_cast<Eigen::Index>(l)) = -energy(i, static_cast<Eigen::Index>(l)) - pen;
                best = std::max(best, q(i, static_cast<Eigen::Index>(l)));
            }
            double z = 0.0;
            for (size_t l = 0; l < k; ++l) {
                double& v = q(i, static_cast<Eigen::Index>(l));
                v = std::exp(v - best);
                z += v;
            }
            q.row(i) /= z;
        }
    }

    std::vector<Mat> out(k, Mat(h, w));
    for (size_t l = 0; l < k; ++l)
        for (Eigen::Index i = 0; i < n; ++i) out[l].data()[i] = q(i, static_cast<Eigen::Index>(l));
    return out;
}

Eigen::MatrixXi crf_argmax(const std::vector<Mat>& probs) {
    check_arg(!probs.empty(), "crf_argmax: empty input");
    const Eigen::Index h = probs[0].rows(), w = probs[0].cols();
    Eigen::MatrixXi labels(h, w);
    for (Eigen::Index y = 0; y < h; ++y) {
        for (Eigen::Index x = 0; x < w; ++x) {
            int best = 0;
            double best_v = probs[0](y, x);
            for (size_t l = 1; l < probs.size(); ++l) {
                if (probs[l](y, x) > best_v) {  // ties keep the smaller index
                    best_v = probs[l](y, x);
                    best = static_cast<int>(l);
                }
            }
            labels(y, x) = best;
        }
    }
    return labels;
}

}  // namespace ctdn
