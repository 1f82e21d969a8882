#pragma once

#include <functional>
#include <vector>

#include "nre/matrix.hpp"
#include "nre/nn.hpp"
#include "nre/rng.hpp"

namespace test_util {

inline nre::Matrix random_matrix(std::size_t rows, std::size_t cols, nre::Rng& rng,
                                 double scale = 1.0) {
    nre::Matrix m(rows, cols);
    for (double& v : m.storage()) v = scale * rng.normal();
    return m;
}

/// Central finite differences of a scalar function of the given parameter
/// matrices, one entry at a time.
inline std::vector<nre::Matrix> finite_diff_gradients(const std::function<double()>& fn,
                                                      const std::vector<nre::Matrix*>& params,
                                                      double step = 1e-5) {
    std::vector<nre::Matrix> grads;
    grads.reserve(params.size());
    for (nre::Matrix* p : params) {
        nre::Matrix g(p->rows(), p->cols());
        for (std::size_t i = 0; i < p->size(); ++i) {
            const double orig = p->data()[i];
            p->data()[i] = orig + step;
            const double lp = fn();
            p->data()[i] = orig - step;
            const double lm = fn();
            p->data()[i] = orig;
            g.data()[i] = (lp - lm) / (2.0 * step);
        }
        grads.push_back(std::move(g));
    }
    return grads;
}

/// True when every analytic entry matches finite differences within the
/// given relative tolerance (absolute floor covers near-zero gradients).
inline bool gradients_match(const std::vector<nre::Matrix*>& analytic,
                            const std::vector<nre::Matrix>& fd, double rel_tol = 1e-4,
                            double abs_floor = 1e-9, double* worst = nullptr) {
    bool ok = true;
    double max_rel = 0.0;
    for (std::size_t k = 0; k < analytic.size(); ++k) {
        for (std::size_t i = 0; i < analytic[k]->size(); ++i) {
            const double a = analytic[k]->data()[i];
            const double f = fd[k].data()[i];
            const double diff = std::abs(a - f);
            const double scale = std::max(std::abs(a), std::abs(f));
            if (diff > std::max(rel_tol * scale, abs_floor)) ok = false;
            if (scale > 0.0) max_rel = std::max(max_rel, diff / scale);
        }
    }
    if (worst != nullptr) *worst = max_rel;
    return ok;
}

}  // namespace test_util
