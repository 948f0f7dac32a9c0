#pragma once

#include "ctdn/common.hpp"

#include <functional>
#include <memory>
#include <vector>

namespace ctdn::ag {

using ctdn::Mat;

class Node;
using Tensor = std::shared_ptr<Node>;

// One node of the backward tape. Values are dense row-major matrices;
// vectors are represented as 1xN matrices.
class Node {
public:
    Mat value;
    Mat grad;  // allocated lazily; valid iff has_grad
    bool has_grad = false;
    bool requires_grad = false;
    bool retain = false;  // keep grad after backward even for non-leaf nodes
    std::vector<Tensor> parents;
    std::function<void(Node&)> backprop;  // reads this->grad, accumulates into parents

    explicit Node(Mat v) : value(std::move(v)) {}

    void accumulate(const Mat& g);
    void clear_grad();
    const Mat& grad_or_zero() const;
};

Tensor constant(Mat v);
Tensor parameter(Mat v);

// Runs reverse-mode accumulation from a 1x1 root.
void backward(const Tensor& root);

Tensor detach(const Tensor& t);

// Arithmetic
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor cmul(const Tensor& a, const Tensor& b);  // elementwise
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Shape
Tensor slice_rows(const Tensor& a, int row0, int nrows);
Tensor slice_cols(const Tensor& a, int col0, int ncols);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);

// Broadcast over rows: g and b are 1xC
Tensor mul_rows(const Tensor& x, const Tensor& g);
Tensor add_rows(const Tensor& x, const Tensor& b);

// Reductions
Tensor sum_all(const Tensor& a);          // 1x1
Tensor mean_of_rows(const Tensor& a);     // 1xC, average over rows

// Nonlinearities
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor abs_of(const Tensor& a);
Tensor exp_of(const Tensor& a);

// Row-wise normalizations
Tensor softmax_rows(const Tensor& a);
Tensor layernorm_rows(const Tensor& a, double eps = 1e-5);
Tensor l2_normalize_rows(const Tensor& a, double floor = 1e-12);

// Losses (all return 1x1)
// Mean over entries of -[y log s(z) + (1-y) log(1-s(z))], logs clamped at 1e-12.
Tensor bce_with_logits(const Tensor& logits, const Mat& labels);
// sum_i p_i log(p_i / q_i); q floored at 1e-12, p==0 terms contribute 0.
Tensor kl_divergence(const Tensor& p, const Tensor& q);
// Mean over all entries of (a-b)^2.
Tensor mse(const Tensor& a, const Tensor& b);
// Mean over rows of -log softmax(row)[target]; targets.size() == rows.
Tensor cross_entropy_rows(const Tensor& logits, const std::vector<int>& targets);

// Multiplies by a fixed matrix on the left: out = W * x (W constant).
Tensor left_apply(const Mat& w, const Tensor& x);

// Hook for defining further ops: propagates requires_grad and drops the
// tape entries when no parent needs gradients.
Tensor make_op(Mat v, std::vector<Tensor> parents, std::function<void(Node&)> bp);

// Spatial ops over feature maps stored as (h*w, C) row-major matrices.
// conv3x3: zero padding 1, stride 1; weight (9*Cin, Cout), bias (1, Cout).
Tensor conv3x3(const Tensor& x, const Tensor& weight, const Tensor& bias, int h, int w);
Tensor avg_pool2x2(const Tensor& x, int h, int w);       // -> (h/2 * w/2, C)
Tensor upsample2x_nearest(const Tensor& x, int h, int w);  // -> (2h * 2w, C)

}  // namespace ctdn::ag
