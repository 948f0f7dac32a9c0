#include "ctdn/autograd.hpp"

#include <cmath>
#include <unordered_set>

namespace ctdn::ag {

void Node::accumulate(const Mat& g) {
    if (!has_grad) {
        grad = g;
        has_grad = true;
    } else {
        grad += g;
    }
}

void Node::clear_grad() {
    grad.resize(0, 0);
    has_grad = false;
}

const Mat& Node::grad_or_zero() const {
    static thread_local Mat zero;
    if (has_grad) return grad;
    zero = Mat::Zero(value.rows(), value.cols());
    return zero;
}

Tensor constant(Mat v) { return std::make_shared<Node>(std::move(v)); }

Tensor parameter(Mat v) {
    auto t = std::make_shared<Node>(std::move(v));
    t->requires_grad = true;
    return t;
}

Tensor make_op(Mat v, std::vector<Tensor> parents, std::function<void(Node&)> bp) {
    auto t = std::make_shared<Node>(std::move(v));
    for (const auto& p : parents)
        if (p->requires_grad) t->requires_grad = true;
    if (t->requires_grad) {
        t->parents = std::move(parents);
        t->backprop = std::move(bp);
    }
    return t;
}

namespace {

void topo_visit(Node* n, std::unordered_set<Node*>& seen, std::vector<Node*>& order) {
    // Iterative post-order DFS; graphs get deep for multi-block transformers.
    struct Frame {
        Node* node;
        size_t next = 0;
    };
    std::vector<Frame> stack{{n}};
    seen.insert(n);
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next < f.node->parents.size()) {
            Node* p = f.node->parents[f.next++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.push_back({p});
            }
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }
}

}  // namespace

void backward(const Tensor& root) {
    check_arg(root->value.rows() == 1 && root->value.cols() == 1,
              "backward: root must be a scalar (1x1)");
    check(root->requires_grad, "backward: root does not require grad");
    std::unordered_set<Node*> seen;
    std::vector<Node*> order;
    topo_visit(root.get(), seen, order);
    root->accumulate(Mat::Ones(1, 1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop && n->has_grad) n->backprop(*n);
    }
    // Intermediate grads are not needed after the pass; parameters keep theirs.
    for (Node* n : order) {
        if (n->backprop && !n->retain) n->clear_grad();
    }
}

Tensor detach(const Tensor& t) { return constant(t->value); }

Tensor add(const Tensor& a, const Tensor& b) {
    check_arg(a->value.rows() == b->value.rows() && a->value.cols() == b->value.cols(),
              "add: shape mismatch");
    return make_op(a->value + b->value, {a, b}, [](Node& n) {
        n.parents[0]->accumulate(n.grad);
        n.parents[1]->accumulate(n.grad);
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_arg(a->value.rows() == b->value.rows() && a->value.cols() == b->value.cols(),
              "sub: shape mismatch");
    return make_op(a->value - b->value, {a, b}, [](Node& n) {
        n.parents[0]->accumulate(n.grad);
        n.parents[1]->accumulate(-n.grad);
    });
}

Tensor scale(const Tensor& a, double s) {
    return make_op(a->value * s, {a}, [s](Node& n) { n.parents[0]->accumulate(n.grad * s); });
}

Tensor cmul(const Tensor& a, const Tensor& b) {
    check_arg(a->value.rows() == b->value.rows() && a->value.cols() == b->value.cols(),
              "cmul: shape mismatch");
    return make_op(a->value.cwiseProduct(b->value), {a, b}, [](Node& n) {
        n.parents[0]->accumulate(n.grad.cwiseProduct(n.parents[1]->value));
        n.parents[1]->accumulate(n.grad.cwiseProduct(n.parents[0]->value));
    });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    check_arg(a->value.cols() == b->value.rows(), "matmul: inner dimension mismatch");
    return make_op(a->value * b->value, {a, b}, [](Node& n) {
        n.parents[0]->accumulate(n.grad * n.parents[1]->value.transpose());
        n.parents[1]->accumulate(n.parents[0]->value.transpose() * n.grad);
    });
}

Tensor transpose(const Tensor& a) {
    return make_op(a->value.transpose(), {a},
                   [](Node& n) { n.parents[0]->accumulate(n.grad.transpose()); });
}

Tensor slice_rows(const Tensor& a, int row0, int nrows) {
    check_arg(row0 >= 0 && nrows >= 0 && row0 + nrows <= a->value.rows(),
              "slice_rows: range out of bounds");
    return make_op(a->value.middleRows(row0, nrows), {a}, [row0, nrows](Node& n) {
        Mat g = Mat::Zero(n.parents[0]->value.rows(), n.parents[0]->value.cols());
        g.middleRows(row0, nrows) = n.grad;
        n.parents[0]->accumulate(g);
    });
}

Tensor slice_cols(const Tensor& a, int col0, int ncols) {
    check_arg(col0 >= 0 && ncols >= 0 && col0 + ncols <= a->value.cols(),
              "slice_cols: range out of bounds");
    return make_op(a->value.middleCols(col0, ncols), {a}, [col0, ncols](Node& n) {
        Mat g = Mat::Zero(n.parents[0]->value.rows(), n.parents[0]->value.cols());
        g.middleCols(col0, ncols) = n.grad;
        n.parents[0]->accumulate(g);
    });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    check_arg(!parts.empty(), "concat_rows: empty input");
    Eigen::Index rows = 0;
    const Eigen::Index cols = parts[0]->value.cols();
    for (const auto& p : parts) {
        check_arg(p->value.cols() == cols, "concat_rows: column mismatch");
        rows += p->value.rows();
    }
    Mat v(rows, cols);
    Eigen::Index r = 0;
    for (const auto& p : parts) {
        v.middleRows(r, p->value.rows()) = p->value;
        r += p->value.rows();
    }
    return make_op(std::move(v), parts, [](Node& n) {
        Eigen::Index r = 0;
        for (auto& p : n.parents) {
            p->accumulate(n.grad.middleRows(r, p->value.rows()));
            r += p->value.rows();
        }
    });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    check_arg(!parts.empty(), "concat_cols: empty input");
    Eigen::Index cols = 0;
    const Eigen::Index rows = parts[0]->value.rows();
    for (const auto& p : parts) {
        check_arg(p->value.rows() == rows, "concat_cols: row mismatch");
        cols += p->value.cols();
    }
    Mat v(rows, cols);
    Eigen::Index c = 0;
    for (const auto& p : parts) {
        v.middleCols(c, p->value.cols()) = p->value;
        c += p->value.cols();
    }
    return make_op(std::move(v), parts, [](Node& n) {
        Eigen::Index c = 0;
        for (auto& p : n.parents) {
            p->accumulate(n.grad.middleCols(c, p->value.cols()));
            c += p->value.cols();
        }
    });
}

Tensor mul_rows(const Tensor& x, const Tensor& g) {
    check_arg(g->value.rows() == 1 && g->value.cols() == x->value.cols(),
              "mul_rows: g must be 1xC");
    Mat v = x->value.array().rowwise() * g->value.row(0).array();
    return make_op(std::move(v), {x, g}, [](Node& n) {
        const Mat& xv = n.parents[0]->value;
        const Mat& gv = n.parents[1]->value;
        n.parents[0]->accumulate(Mat(n.grad.array().rowwise() * gv.row(0).array()));
        n.parents[1]->accumulate(Mat(n.grad.cwiseProduct(xv).colwise().sum()));
    });
}

Tensor add_rows(const Tensor& x, const Tensor& b) {
    check_arg(b->value.rows() == 1 && b->value.cols() == x->value.cols(),
              "add_rows: b must be 1xC");
    Mat v = x->value.array().rowwise() + b->value.row(0).array();
    return make_op(std::move(v), {x, b}, [](Node& n) {
        n.parents[0]->accumulate(n.grad);
        n.parents[1]->accumulate(Mat(n.grad.colwise().sum()));
    });
}

Tensor sum_all(const Tensor& a) {
    Mat v(1, 1);
    v(0, 0) = a->value.sum();
    return make_op(std::move(v), {a}, [](Node& n) {
        n.parents[0]->accumulate(
            Mat::Constant(n.parents[0]->value.rows(), n.parents[0]->value.cols(), n.grad(0, 0)));
    });
}

Tensor mean_of_rows(const Tensor& a) {
    check_arg(a->value.rows() > 0, "mean_of_rows: empty matrix");
    const double inv = 1.0 / static_cast<double>(a->value.rows());
    Mat v = a->value.colwise().mean();
    return make_op(std::move(v), {a}, [inv](Node& n) {
        Mat g(n.parents[0]->value.rows(), n.parents[0]->value.cols());
        g = (n.grad * inv).replicate(n.parents[0]->value.rows(), 1);
        n.parents[0]->accumulate(g);
    });
}

Tensor relu(const Tensor& a) {
    return make_op(a->value.cwiseMax(0.0), {a}, [](Node& n) {
        Mat mask = (n.parents[0]->value.array() > 0.0).cast<double>();
        n.parents[0]->accumulate(n.grad.cwiseProduct(mask));
    });
}

Tensor gelu(const Tensor& a) {
    // tanh approximation
    constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
    auto x = a->value.array();
    Eigen::ArrayXXd inner = k * (x + 0.044715 * x.cube());
    Eigen::ArrayXXd t = inner.tanh();
    Mat v = (0.5 * x * (1.0 + t)).matrix();
    return make_op(std::move(v), {a}, [](Node& n) {
        constexpr double kk = 0.7978845608028654;
        auto x = n.parents[0]->value.array();
        Eigen::ArrayXXd inner = kk * (x + 0.044715 * x.cube());
        Eigen::ArrayXXd t = inner.tanh();
        Eigen::ArrayXXd dinner= kk * (1.0 + 3.0 * 0.044715 * x.square());
        Eigen::ArrayXXd d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t.square()) * dinner;
        n.parents[0]->accumulate(n.grad.cwiseProduct(d.matrix()));
    });
}

Tensor abs_of(const Tensor& a) {
    return make_op(a->value.cwiseAbs(), {a}, [](Node& n) {
        Mat s = n.parents[0]->value.array().sign();
        n.parents[0]->accumulate(n.grad.cwiseProduct(s));
    });
}

Tensor exp_of(const Tensor& a) {
    Mat v = a->value.array().exp();
    return make_op(std::move(v), {a}, [](Node& n) {
        n.parents[0]->accumulate(n.grad.cwiseProduct(n.value));
    });
}

Tensor softmax_rows(const Tensor& a) {
    Mat v = a->value;
    for (Eigen::Index i = 0; i < v.rows(); ++i) {
        double m = v.row(i).maxCoeff();
        v.row(i) = (v.row(i).array() - m).exp();
        v.row(i) /= v.row(i).sum();
    }
    return make_op(std::move(v), {a}, [](Node& n) {
        Mat g(n.value.rows(), n.value.cols());
        for (Eigen::Index i = 0; i < n.value.rows(); ++i) {
            double dot = n.grad.row(i).dot(n.value.row(i));
            g.row(i) = (n.grad.row(i).array() - dot) * n.value.row(i).array();
        }
        n.parents[0]->accumulate(g);
    });
}

Tensor layernorm_rows(const Tensor& a, double eps) {
    const Eigen::Index c = a->value.cols();
    Mat v(a->value.rows(), c);
    for (Eigen::Index i = 0; i < v.rows(); ++i) {
        double mu = a->value.row(i).mean();
        double var = (a->value.row(i).array() - mu).square().mean();
        v.row(i) = (a->value.row(i).array() - mu) / std::sqrt(var + eps);
    }
    return make_op(std::move(v), {a}, [eps, c](Node& n) {
        Mat g(n.value.rows(), c);
        for (Eigen::Index i = 0; i < n.value.rows(); ++i) {
            double mu = n.parents[0]->value.row(i).mean();
            double var = (n.parents[0]->value.row(i).array() - mu).square().mean();
            double inv = 1.0 / std::sqrt(var + eps);
            // dL/dx = inv * (dy - mean(dy) - y * mean(dy*y))
            double mdy = n.grad.row(i).mean();
            double mdyy = n.grad.row(i).cwiseProduct(n.value.row(i)).mean();
            g.row(i) =
                inv * (n.grad.row(i).array() - mdy - n.value.row(i).array() * mdyy);
        }
        n.parents[0]->accumulate(g);
    });
}

Tensor l2_normalize_rows(const Tensor& a, double floor) {
    Mat v = a->value;
    for (Eigen::Index i = 0; i < v.rows(); ++i) {
        double nrm = std::max(v.row(i).norm(), floor);
        v.row(i) /= nrm;
    }
    return make_op(std::move(v), {a, constant(Mat::Constant(1, 1, floor))}, [](Node& n) {
        const double floor = n.parents[1]->value(0, 0);
        Mat g(n.value.rows(), n.value.cols());
        for (Eigen::Index i = 0; i < n.value.rows(); ++i) {
            double nrm = std::max(n.parents[0]->value.row(i).norm(), floor);
            double dot = n.grad.row(i).dot(n.value.row(i));
            g.row(i) = (n.grad.row(i) - dot * n.value.row(i)) / nrm;
        }
        n.parents[0]->accumulate(g);
    });
}

Tensor bce_with_logits(const Tensor& logits, const Mat& labels) {
    check_arg(logits->value.rows() == labels.rows() && logits->value.cols() == labels.cols(),
              "bce_with_logits: shape mismatch");
    check_arg(logits->value.size() > 0, "bce_with_logits: empty input");
    check_arg(logits->value.allFinite(), "bce_with_logits: non-finite logits");
    const double n_elem = static_cast<double>(logits->value.size());
    double total = 0.0;
    for (Eigen::Index i = 0; i < logits->value.rows(); ++i) {
        for (Eigen::Index j = 0; j < logits->value.cols(); ++j) {
            double z = logits->value(i, j);
            double y = labels(i, j);
            double s = 1.0 / (1.0 + std::exp(-z));
            total -= y * std::log(std::max(s, 1e-12)) +
                     (1.0 - y) * std::log(std::max(1.0 - s, 1e-12));
        }
    }
    Mat v(1, 1);
    v(0, 0) = total / n_elem;
    Mat lab = labels;
    return make_op(std::move(v), {logits}, [lab, n_elem](Node& n) {
        const Mat& z = n.parents[0]->value;
        Mat s = (1.0 / (1.0 + (-z.array()).exp())).matrix();
        n.parents[0]->accumulate(Mat((s - lab) * (n.grad(0, 0) / n_elem)));
    });
}

Tensor kl_divergence(const Tensor& p, const Tensor& q) {
    check_arg(p->value.rows() == q->value.rows() && p->value.cols() == q->value.cols(),
              "kl_divergence: shape mismatch");
    check_arg(std::abs(p->value.sum() - 1.0) <= 1e-4 && std::abs(q->value.sum() - 1.0) <= 1e-4,
              "kl_divergence: inputs are not probability distributions");
    double total = 0.0;
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
        double pi = p->value.data()[i];
        double qi = std::max(q->value.data()[i], 1e-12);
        if (pi > 0.0) total += pi * std::log(std::max(pi, 1e-12) / qi);
    }
    Mat v(1, 1);
    v(0, 0) = total;
    return make_op(std::move(v), {p, q}, [](Node& n) {
        const Mat& pv = n.parents[0]->value;
        const Mat& qv = n.parents[1]->value;
        Mat gp(pv.rows(), pv.cols()), gq(qv.rows(), qv.cols());
        for (Eigen::Index i = 0; i < pv.size(); ++i) {
            double pi = std::max(pv.data()[i], 1e-12);
            double qi = std::max(qv.data()[i], 1e-12);
            gp.data()[i] = std::log(pi / qi) + 1.0;
            gq.data()[i] = -pi / qi;
        }
        n.parents[0]->accumulate(gp * n.grad(0, 0));
        n.parents[1]->accumulate(gq * n.grad(0, 0));
    });
}

Tensor mse(const Tensor& a, const Tensor& b) {
    check_arg(a->value.rows() == b->value.rows() && a->value.cols() == b->value.cols(),
              "mse: shape mismatch");
    const double n_elem = static_cast<double>(a->value.size());
    Mat v(1, 1);
    v(0, 0) = (a->value - b->value).squaredNorm() / n_elem;
    return make_op(std::move(v), {a, b}, [n_elem](Node& n) {
        Mat d = (n.parents[0]->value - n.parents[1]->value) * (2.0 * n.grad(0, 0) / n_elem);
        n.parents[0]->accumulate(d);
        n.parents[1]->accumulate(-d);
    });
}

Tensor cross_entropy_rows(const Tensor& logits, const std::vector<int>& targets) {
    check_arg(static_cast<Eigen::Index>(targets.size()) == logits->value.rows(),
              "cross_entropy_rows: target count mismatch");
    const Eigen::Index rows = logits->value.rows();
    Mat probs = logits->value;
    double total = 0.0;
    for (Eigen::Index i = 0; i < rows; ++i) {
        check_arg(targets[i] >= 0 && targets[i] < logits->value.cols(),
                  "cross_entropy_rows: target out of range");
        double m = probs.row(i).maxCoeff();
        probs.row(i) = (probs.row(i).array() - m).exp();
        probs.row(i) /= probs.row(i).sum();
        total -= std::log(std::max(probs(i, targets[i]), 1e-12));
    }
    Mat v(1, 1);
    v(0, 0) = total / static_cast<double>(rows);
    std::vector<int> tg = targets;
    return make_op(std::move(v), {logits}, [probs, tg, rows](Node& n) {
        Mat g = probs;
        for (Eigen::Index i = 0; i < rows; ++i) g(i, tg[i]) -= 1.0;
        n.parents[0]->accumulate(g * (n.grad(0, 0) / static_cast<double>(rows)));
    });
}

Tensor left_apply(const Mat& w, const Tensor& x) {
    check_arg(w.cols() == x->value.rows(), "left_apply: dimension mismatch");
    Mat wc = w;
    return make_op(w * x->value, {x}, [wc](Node& n) {
        n.parents[0]->accumulate(wc.transpose() * n.grad);
    });
}

}  // namespace ctdn::ag
