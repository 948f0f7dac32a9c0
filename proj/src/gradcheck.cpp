#include "ctdn/gradcheck.hpp"

#include "ctdn/losses.hpp"
#include "ctdn/rng.hpp"

#include <cmath>

namespace ctdn {

double finite_difference_max_rel_err(const std::function<ag::Tensor(const ag::Tensor&)>& f,
                                     const Mat& x0, double eps) {
    ag::Tensor x = ag::parameter(x0);
    ag::Tensor y = f(x);
    check(y->value.rows() == 1 && y->value.cols() == 1, "gradcheck: loss must be scalar");
    ag::backward(y);
    Mat analytic = x->grad_or_zero();

    double worst = 0.0;
    for (Eigen::Index i = 0; i < x0.size(); ++i) {
        Mat xp = x0, xm = x0;
        xp.data()[i] += eps;
        xm.data()[i] -= eps;
        double fp = f(ag::constant(xp))->value(0, 0);
        double fm = f(ag::constant(xm))->value(0, 0);
        double fd = (fp - fm) / (2.0 * eps);
        double ga = analytic.data()[i];
        double rel = std::abs(ga - fd) / std::max({std::abs(ga), std::abs(fd), 1e-3});
        worst = std::max(worst, rel);
    }
    return worst;
}

namespace {

Mat random_mat(Rng& rng, int r, int c, double scale = 1.0) {
    Mat m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal(0.0, scale);
    return m;
}

GradCheckReport check_relation(Rng& rng, int instances, double tol) {
    GradCheckReport rep{"l_rel", instances, 0.0, false};
    for (int t = 0; t < instances; ++t) {
        int k = 2 + rng.uniform_int(0, 10);
        ClassLabelVector labels;
        for (int i = 0; i < k; ++i) labels.labels.push_back(rng.uniform() < 0.5 ? 1 : 0);
        Mat logits = random_mat(rng, 1, k, 2.0);
        double err = finite_difference_max_rel_err(
            [&](const ag::Tensor& x) { return relation_loss(x, labels); }, logits);
        rep.max_rel_err = std::max(rep.max_rel_err, err);
    }
    rep.pass = rep.max_rel_err < tol;
    return rep;
}

GradCheckReport check_cognition_transfer(Rng& rng, int instances, double tol) {
    GradCheckReport rep{"l_ct", instances, 0.0, false};
    for (int t = 0; t < instances; ++t) {
        int n = 3 + rng.uniform_int(0, 9);
        Mat teacher = random_mat(rng, 1, n, 1.5);
        Mat student0 = random_mat(rng, 1, n, 1.5);
        double err = finite_difference_max_rel_err(
            [&](const ag::Tensor& x) {
                auto [p, q] = cognition_distributions(x, ag::constant(teacher));
                return cognition_transfer_loss(p, q);
            },
            student0);
        rep.max_rel_err = std::max(rep.max_rel_err, err);
    }
    rep.pass = rep.max_rel_err < tol;
    return rep;
}

GradCheckReport check_vrd(Rng& rng, int instances, double tol) {
    GradCheckReport rep{"l_vrd", instances, 0.0, false};
    for (int t = 0; t < instances; ++t) {
        int n = 3 + rng.uniform_int(0, 13);   // token rows (cls + patches)
        int c = 4 + rng.uniform_int(0, 28);   // visual width
        int d = 3 + rng.uniform_int(0, 13);   // joint width
        Mat w = random_mat(rng, c, d, 0.5);
        Mat b = random_mat(rng, 1, d, 0.3);
        Mat target = random_mat(rng, 1, d);
        Mat tokens = random_mat(rng, n, c);
        // Same computational path as the distillation term: drop the class
        // token, average the patch tokens, project, compare.
        double err = finite_difference_max_rel_err(
            [&](const ag::Tensor& x) {
                ag::Tensor mean = ag::mean_of_rows(ag::slice_rows(x, 1, n - 1));
                ag::Tensor proj = ag::add_rows(ag::matmul(mean, ag::constant(w)), ag::constant(b));
                return ag::mse(proj, ag::constant(target));
            },
            tokens);
        rep.max_rel_err = std::max(rep.max_rel_err, err);
    }
    rep.pass = rep.max_rel_err < tol;
    return rep;
}

GradCheckReport check_fbd(Rng& rng, int instances, double tol) {
    GradCheckReport rep{"l_fbd", instances, 0.0, false};
    for (int t = 0; t < instances; ++t) {
        int n = 4 + rng.uniform_int(0, 12);
        int c = 4 + rng.uniform_int(0, 28);
        Mat tokens;
        TokenPartition part;
        // |cos| is non-differentiable at zero; resample instances whose pair
        // cosines sit too close to the kink for finite differences.
        for (int attempt = 0; attempt < 50; ++attempt) {
            tokens = random_mat(rng, n, c);
            part = TokenPartition{};
            for (int i = 0; i < n; ++i) {
                double u = rng.uniform();
                if (u < 0.4)
                    part.fg_indices.push_back(i);
                else if (u < 0.8)
                    part.bg_indices.push_back(i);
                else
                    part.uncertain_indices.push_back(i);
            }
            Mat norm = tokens;
            for (Eigen::Index i = 0; i < norm.rows(); ++i) norm.row(i) /= norm.row(i).norm();
            Mat gram = norm * norm.transpose();
            double min_abs = 1.0;
            auto scan = [&](const std::vector<int>& a, const std::vector<int>& b) {
                for (int i : a)
                    for (int j : b)
                        if (i != j) min_abs = std::min(min_abs, std::abs(gram(i, j)));
            };
            scan(part.fg_indices, part.fg_indices);
            scan(part.bg_indices, part.bg_indices);
            scan(part.fg_indices, part.bg_indices);
            if (min_abs > 5e-3) break;
        }
        double err = finite_difference_max_rel_err(
            [&](const ag::Tensor& x) { return fbd_loss(x, part); }, tokens);
        rep.max_rel_err = std::max(rep.max_rel_err, err);
    }
    rep.pass = rep.max_rel_err < tol;
    return rep;
}

}  // namespace

std::vector<GradCheckReport> run_gradient_checks(uint64_t seed, int instances, double tolerance) {
    Rng rng(seed);
    return {check_relation(rng, instances, tolerance),
            check_cognition_transfer(rng, instances, tolerance),
            check_vrd(rng, instances, tolerance), check_fbd(rng, instances, tolerance)};
}

}  // namespace ctdn
