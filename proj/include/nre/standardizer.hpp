#pragma once

#include <cmath>
#include <iostream>
#include <vector>

#include "nre/errors.hpp"
#include "nre/matrix.hpp"

namespace nre {

/// Per-dimension standard scaling for parameters and observations, fit on
/// the first training batch.
struct Standardizer {
    std::vector<double> theta_mean, theta_std;
    std::vector<double> x_mean, x_std;

    static constexpr double kStdFloor = 1e-8;

    bool fitted() const { return !theta_mean.empty(); }

    static void fit_columns(const Matrix& batch, std::vector<double>& mean,
                            std::vector<double>& std, const char* what) {
        if (batch.rows() == 0) throw ConfigError("Standardizer::fit: empty batch");
        mean = column_means(batch);
        auto var = column_vars(batch);
        std.resize(var.size());
        for (std::size_t j = 0; j < var.size(); ++j) {
            std[j] = std::sqrt(var[j]);
            if (std[j] < kStdFloor) {
                std::cerr << "warning: standardizer: zero-variance " << what << " dimension " << j
                          << ", flooring std at " << kStdFloor << "\n";
                std[j] = kStdFloor;
            }
        }
    }

    static Matrix apply_columns(const Matrix& m, const std::vector<double>& mean,
                                const std::vector<double>& std) {
        if (m.cols() != mean.size())
            throw ShapeError("Standardizer::apply: expected " + std::to_string(mean.size()) +
                             " columns, got " + std::to_string(m.cols()));
        Matrix out(m.rows(), m.cols());
        for (std::size_t i = 0; i < m.rows(); ++i) {
            auto src = m.row(i);
            auto dst = out.row(i);
            for (std::size_t j = 0; j < m.cols(); ++j) dst[j] = (src[j] - mean[j]) / std[j];
        }
        return out;
    }

    Matrix apply_theta(const Matrix& theta) const {
        return apply_columns(theta, theta_mean, theta_std);
    }
    Matrix apply_x(const Matrix& x) const { return apply_columns(x, x_mean, x_std); }
};

inline Standardizer fit_standardizer(const Matrix& batch_theta, const Matrix& batch_x) {
    Standardizer s;
    Standardizer::fit_columns(batch_theta, s.theta_mean, s.theta_std, "theta");
    Standardizer::fit_columns(batch_x, s.x_mean, s.x_std, "x");
    return s;
}

inline std::pair<Matrix, Matrix> apply(const Standardizer& s, const Matrix& theta,
                                       const Matrix& x) {
    return {s.apply_theta(theta), s.apply_x(x)};
}

/// Identity standardizer for the given dimensions.
inline Standardizer identity_standardizer(std::size_t dim_theta, std::size_t dim_x) {
    Standardizer s;
    s.theta_mean.assign(dim_theta, 0.0);
    s.theta_std.assign(dim_theta, 1.0);
    s.x_mean.assign(dim_x, 0.0);
    s.x_std.assign(dim_x, 1.0);
    return s;
}

}  // namespace nre
