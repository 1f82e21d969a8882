#pragma once

#include <cmath>
#include <vector>

#include "nre/errors.hpp"
#include "nre/matrix.hpp"

namespace nre {

/// Adam with bias correction. Defaults follow the training recipe used
/// throughout: lr 5e-4, betas (0.9, 0.999), eps 1e-8, no weight decay.
struct AdamState {
    double lr = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    long step_count = 0;
    std::vector<Matrix> m, v;

    void init(const std::vector<Matrix*>& params) {
        m.clear();
        v.clear();
        for (const Matrix* p : params) {
            m.emplace_back(p->rows(), p->cols());
            v.emplace_back(p->rows(), p->cols());
        }
        step_count = 0;
    }

    void step(const std::vector<Matrix*>& params, const std::vector<Matrix*>& grads) {
        if (params.size() != grads.size() || params.size() != m.size())
            throw ShapeError("AdamState::step: parameter/gradient/moment count mismatch");
        ++step_count;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
        for (std::size_t k = 0; k < params.size(); ++k) {
            Matrix& p = *params[k];
            const Matrix& g = *grads[k];
            if (!p.same_shape(g) || !p.same_shape(m[k]))
                throw ShapeError("AdamState::step: shape mismatch at parameter " +
                                 std::to_string(k));
            for (std::size_t i = 0; i < p.size(); ++i) {
                double grad = g.data()[i];
                if (weight_decay != 0.0) grad += weight_decay * p.data()[i];
                m[k].data()[i] = beta1 * m[k].data()[i] + (1.0 - beta1) * grad;
                v[k].data()[i] = beta2 * v[k].data()[i] + (1.0 - beta2) * grad * grad;
                const double mhat = m[k].data()[i] / bc1;
                const double vhat = v[k].data()[i] / bc2;
                p.data()[i] -= lr * mhat / (std::sqrt(vhat) + eps);
            }
        }
    }
};

inline void adam_step(const std::vector<Matrix*>& params, const std::vector<Matrix*>& grads,
                      AdamState& state) {
    state.step(params, grads);
}

}  // namespace nre
