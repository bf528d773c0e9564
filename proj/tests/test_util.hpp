#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "mre/nn/graph.hpp"
#include "mre/nn/rng.hpp"

namespace mre::testutil {

using mre::nn::Mat;

inline Mat random_mat(Eigen::Index r, Eigen::Index c, mre::nn::Rng& rng, double scale = 1.0) {
    Mat m(r, c);
    for (Eigen::Index j = 0; j < c; ++j)
        for (Eigen::Index i = 0; i < r; ++i) m(i, j) = scale * rng.normal();
    return m;
}

// Worst relative error between the analytic gradients currently stored on
// `params` and central finite differences of `value_fn`, which must recompute
// the scalar loss from the parameters' current values on every call.
inline double fd_compare(const std::vector<mre::nn::Parameter*>& params,
                         const std::function<double()>& value_fn, double h = 1e-5) {
    double worst = 0.0;
    for (auto* p : params) {
        for (Eigen::Index j = 0; j < p->value.cols(); ++j) {
            for (Eigen::Index i = 0; i < p->value.rows(); ++i) {
                const double saved = p->value(i, j);
                p->value(i, j) = saved + h;
                const double up = value_fn();
                p->value(i, j) = saved - h;
                const double dn = value_fn();
                p->value(i, j) = saved;
                const double numeric = (up - dn) / (2.0 * h);
                const double analytic = p->grad(i, j);
                const double denom = std::max({1.0, std::abs(numeric), std::abs(analytic)});
                worst = std::max(worst, std::abs(numeric - analytic) / denom);
            }
        }
    }
    return worst;
}

}  // namespace mre::testutil
