#include "ctdn/autograd.hpp"

namespace ctdn::ag {

namespace {

// Gathers the 3x3 neighborhood of every pixel into one row: (h*w, 9*Cin).
Mat im2col3x3(const Mat& x, int h, int w) {
    const Eigen::Index cin = x.cols();
    Mat cols = Mat::Zero(static_cast<Eigen::Index>(h) * w, 9 * cin);
    for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) {
            Eigen::Index row = static_cast<Eigen::Index>(y) * w + xx;
            int tap = 0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx, ++tap) {
                    int ny = y + dy, nx = xx + dx;
                    if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
                    cols.block(row, tap * cin, 1, cin) =
                        x.row(static_cast<Eigen::Index>(ny) * w + nx);
                }
        }
    return cols;
}

void col2im3x3_add(const Mat& cols, int h, int w, Mat& out) {
    const Eigen::Index cin = out.cols();
    for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) {
            Eigen::Index row = static_cast<Eigen::Index>(y) * w + xx;
            int tap = 0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx, ++tap) {
                    int ny = y + dy, nx = xx + dx;
                    if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
                    out.row(static_cast<Eigen::Index>(ny) * w + nx) +=
                        cols.block(row, tap * cin, 1, cin);
                }
        }
}

}  // namespace

Tensor conv3x3(const Tensor& x, const Tensor& weight, const Tensor& bias, int h, int w) {
    check_arg(x->value.rows() == static_cast<Eigen::Index>(h) * w, "conv3x3: bad map shape");
    check_arg(weight->value.rows() == 9 * x->value.cols(), "conv3x3: weight/input mismatch");
    check_arg(bias->value.rows() == 1 && bias->value.cols() == weight->value.cols(),
              "conv3x3: bad bias shape");
    Mat cols = im2col3x3(x->value, h, w);
    Mat v = (cols * weight->value).rowwise() + bias->value.row(0);
    return make_op(std::move(v), {x, weight, bias},
                   [cols = std::move(cols), h, w](Node& n) {
                       Node& xp = *n.parents[0];
                       Node& wp = *n.parents[1];
                       Node& bp = *n.parents[2];
                       if (wp.requires_grad) wp.accumulate(cols.transpose() * n.grad);
                       if (bp.requires_grad) bp.accumulate(n.grad.colwise().sum());
                       if (xp.requires_grad) {
                           Mat dcols = n.grad * wp.value.transpose();
                           Mat dx = Mat::Zero(xp.value.rows(), xp.value.cols());
                           col2im3x3_add(dcols, h, w, dx);
                           xp.accumulate(dx);
                       }
                   });
}

Tensor avg_pool2x2(const Tensor& x, int h, int w) {
    check_arg(h % 2 == 0 && w % 2 == 0, "avg_pool2x2: odd map size");
    check_arg(x->value.rows() == static_cast<Eigen::Index>(h) * w, "avg_pool2x2: bad map shape");
    const int oh = h / 2, ow = w / 2;
    const Eigen::Index c = x->value.cols();
    Mat v = Mat::Zero(static_cast<Eigen::Index>(oh) * ow, c);
    for (int y = 0; y < oh; ++y)
        for (int xx = 0; xx < ow; ++xx) {
            Eigen::Index o = static_cast<Eigen::Index>(y) * ow + xx;
            for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx)
                    v.row(o) += x->value.row(static_cast<Eigen::Index>(2 * y + dy) * w + 2 * xx + dx);
            v.row(o) *= 0.25;
        }
    return make_op(std::move(v), {x}, [h, w, oh, ow](Node& n) {
        Mat dx = Mat::Zero(static_cast<Eigen::Index>(h) * w, n.grad.cols());
        for (int y = 0; y < oh; ++y)
            for (int xx = 0; xx < ow; ++xx) {
                Eigen::Index o = static_cast<Eigen::Index>(y) * ow + xx;
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx2 = 0; dx2 < 2; ++dx2)
                        dx.row(static_cast<Eigen::Index>(2 * y + dy) * w + 2 * xx + dx2) =
                            0.25 * n.grad.row(o);
            }
        n.parents[0]->accumulate(dx);
    });
}

Tensor upsample2x_nearest(const Tensor& x, int h, int w) {
    check_arg(x->value.rows() == static_cast<Eigen::Index>(h) * w,
              "upsample2x_nearest: bad map shape");
    const int oh = 2 * h, ow = 2 * w;
    Mat v(static_cast<Eigen::Index>(oh) * ow, x->value.cols());
    for (int y = 0; y < oh; ++y)
        for (int xx = 0; xx < ow; ++xx)
            v.row(static_cast<Eigen::Index>(y) * ow + xx) =
                x->value.row(static_cast<Eigen::Index>(y / 2) * w + xx / 2);
    return make_op(std::move(v), {x}, [h, w, oh, ow](Node& n) {
        Mat dx = Mat::Zero(static_cast<Eigen::Index>(h) * w, n.grad.cols());
        for (int y = 0; y < oh; ++y)
            for (int xx = 0; xx < ow; ++xx)
                dx.row(static_cast<Eigen::Index>(y / 2) * w + xx / 2) +=
                    n.grad.row(static_cast<Eigen::Index>(y) * ow + xx);
        n.parents[0]->accumulate(dx);
    });
}

}  // namespace ctdn::ag
