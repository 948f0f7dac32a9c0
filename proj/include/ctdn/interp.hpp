#pragma once

#include "ctdn/common.hpp"

namespace ctdn {

// Dense bilinear resampling operator: returns a (to_h*to_w, from_h*from_w)
// matrix W so that vec(out) = W * vec(in) with row-major vec(). Half-pixel
// center convention with edge clamping.
inline Mat bilinear_matrix(int from_h, int from_w, int to_h, int to_w) {
    check_arg(from_h > 0 && from_w > 0 && to_h > 0 && to_w > 0, "bilinear_matrix: empty grid");
    Mat w = Mat::Zero(static_cast<Eigen::Index>(to_h) * to_w,
                      static_cast<Eigen::Index>(from_h) * from_w);
    const double sy = static_cast<double>(from_h) / to_h;
    const double sx = static_cast<double>(from_w) / to_w;
    for (int y = 0; y < to_h; ++y) {
        double fy = (y + 0.5) * sy - 0.5;
        fy = std::min(std::max(fy, 0.0), static_cast<double>(from_h - 1));
        int y0 = static_cast<int>(fy);
        int y1 = std::min(y0 + 1, from_h - 1);
        double wy = fy - y0;
        for (int x = 0; x < to_w; ++x) {
            double fx = (x + 0.5) * sx - 0.5;
            fx = std::min(std::max(fx, 0.0), static_cast<double>(from_w - 1));
            int x0 = static_cast<int>(fx);
            int x1 = std::min(x0 + 1, from_w - 1);
            double wx = fx - x0;
            Eigen::Index r = static_cast<Eigen::Index>(y) * to_w + x;
            w(r, static_cast<Eigen::Index>(y0) * from_w + x0) += (1 - wy) * (1 - wx);
            w(r, static_cast<Eigen::Index>(y0) * from_w + x1) += (1 - wy) * wx;
            w(r, static_cast<Eigen::Index>(y1) * from_w + x0) += wy * (1 - wx);
            w(r, static_cast<Eigen::Index>(y1) * from_w + x1) += wy * wx;
        }
    }
    return w;
}

// Resizes a single-channel map stored as (h, w) matrix.
inline Mat bilinear_resize(const Mat& in, int to_h, int to_w) {
    Mat w = bilinear_matrix(static_cast<int>(in.rows()), static_cast<int>(in.cols()), to_h, to_w);
    Mat flat = Eigen::Map<const Mat>(in.data(), in.size(), 1);
    Mat out = w * flat;
    return Eigen::Map<Mat>(out.data(), to_h, to_w);
}

}  // namespace ctdn
