#pragma once

#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nre/errors.hpp"
#include "nre/matrix.hpp"
#include "nre/rng.hpp"

namespace nre {

/// Paired draws: row i of theta generated row i of x.
struct JointBatch {
    Matrix theta;
    Matrix x;
    std::size_t size() const { return theta.rows(); }
};

/// A simulator with its prior. The analytic log likelihood-to-evidence ratio
/// and the reference posterior sampler are present only on tasks where they
/// are tractable.
struct Task {
    std::string name;
    std::size_t dim_theta = 0;
    std::size_t dim_x = 0;
    std::vector<double> prior_std;  // per-coordinate, for sampler step sizes

    std::function<void(Rng&, std::span<double>)> prior_draw;
    std::function<double(std::span<const double>)> prior_logpdf;
    std::function<void(Rng&, std::span<const double>, std::span<double>)> simulate_one;
    std::function<double(std::span<const double>, std::span<const double>)> log_ratio;  // optional
    std::function<Matrix(std::span<const double> x, std::size_t n, Rng&)> reference_posterior;  // optional

    bool has_analytic_ratio() const { return static_cast<bool>(log_ratio); }
    bool has_reference_posterior() const { return static_cast<bool>(reference_posterior); }
};

inline Matrix sample_prior(const Task& task, std::size_t n, Rng& rng) {
    Matrix theta(n, task.dim_theta);
    for (std::size_t i = 0; i < n; ++i) task.prior_draw(rng, theta.row(i));
    return theta;
}

inline Matrix simulate(const Task& task, const Matrix& theta, Rng& rng) {
    if (theta.cols() != task.dim_theta)
        throw ShapeError("simulate: theta has " + std::to_string(theta.cols()) +
                         " dims, task " + task.name + " expects " +
                         std::to_string(task.dim_theta));
    Matrix x(theta.rows(), task.dim_x);
    for (std::size_t i = 0; i < theta.rows(); ++i) task.simulate_one(rng, theta.row(i), x.row(i));
    return x;
}

inline JointBatch sample_joint(const Task& task, std::size_t n, Rng& rng) {
    JointBatch batch;
    batch.theta = sample_prior(task, n, rng);
    batch.x = simulate(task, batch.theta, rng);
    return batch;
}

inline double analytic_log_ratio(const Task& task, std::span<const double> theta,
                                 std::span<const double> x) {
    if (!task.has_analytic_ratio())
        throw UnsupportedError("task " + task.name + " has no analytic log-ratio");
    return task.log_ratio(theta, x);
}

namespace density {

inline double log_normal(double x, double mean, double var) {
    const double d = x - mean;
    return -0.5 * (std::log(2.0 * std::numbers::pi * var) + d * d / var);
}

/// Isotropic multivariate normal.
inline double log_normal_iso(std::span<const double> x, std::span<const double> mean, double var) {
    double lp = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) lp += log_normal(x[j], mean[j], var);
    return lp;
}

inline double log_uniform_box(std::span<const double> theta, double lo, double hi) {
    for (double v : theta)
        if (v < lo || v > hi) return -std::numeric_limits<double>::infinity();
    return -static_cast<double>(theta.size()) * std::log(hi - lo);
}

}  // namespace density

namespace tasks {

/// 1-D development oracle: theta ~ N(0,1), x | theta ~ N(theta, sigma^2).
/// Marginal x ~ N(0, 1 + sigma^2); posterior N(x/(1+sigma^2), sigma^2/(1+sigma^2)).
inline Task conjugate_gaussian(double sigma = 1.0) {
    Task t;
    t.name = "conjugate_gaussian";
    t.dim_theta = 1;
    t.dim_x = 1;
    t.prior_std = {1.0};
    const double var = sigma * sigma;
    t.prior_draw = [](Rng& rng, std::span<double> out) { out[0] = rng.normal(); };
    t.prior_logpdf = [](std::span<const double> th) {
        return density::log_normal(th[0], 0.0, 1.0);
    };
    t.simulate_one = [var](Rng& rng, std::span<const double> th, std::span<double> out) {
        out[0] = rng.normal(th[0], std::sqrt(var));
    };
    t.log_ratio = [var](std::span<const double> th, std::span<const double> x) {
        return density::log_normal(x[0], th[0], var) - density::log_normal(x[0], 0.0, 1.0 + var);
    };
    t.reference_posterior = [var](std::span<const double> x, std::size_t n, Rng& rng) {
        const double post_var = var / (1.0 + var);
        const double post_mean = x[0] / (1.0 + var);
        Matrix draws(n, 1);
        for (std::size_t i = 0; i < n; ++i)
            draws(i, 0) = rng.normal(post_mean, std::sqrt(post_var));
        return draws;
    };
    return t;
}

/// 10-D Gaussian prior and Gaussian likelihood over the mean, both with
/// 0.1 I covariance.
inline Task gaussian_linear() {
    constexpr std::size_t d = 10;
    constexpr double v = 0.1;
    Task t;
    t.name = "gaussian_linear";
    t.dim_theta = d;
    t.dim_x = d;
    t.prior_std.assign(d, std::sqrt(v));
    t.prior_draw = [](Rng& rng, std::span<double> out) {
        for (double& o : out) o = rng.normal(0.0, std::sqrt(v));
    };
    t.prior_logpdf = [](std::span<const double> th) {
        std::vector<double> zero(d, 0.0);
        return density::log_normal_iso(th, zero, v);
    };
    t.simulate_one = [](Rng& rng, std::span<const double> th, std::span<double> out) {
        for (std::size_t j = 0; j < d; ++j) out[j] = rng.normal(th[j], std::sqrt(v));
    };
    t.log_ratio = [](std::span<const double> th, std::span<const double> x) {
        double lp = density::log_normal_iso(x, th, v);
        for (double xv : x) lp -= density::log_normal(xv, 0.0, 2.0 * v);
        return lp;
    };
    t.reference_posterior = [](std::span<const double> x, std::size_t n, Rng& rng) {
        // Posterior per dimension: N(x_j / 2, 0.05).
        Matrix draws(n, d);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j)
                draws(i, j) = rng.normal(0.5 * x[j], std::sqrt(0.5 * v));
        return draws;
    };
    return t;
}

/// As gaussian_linear but with a uniform prior from -1 to 1 per dimension.
inline Task gaussian_linear_uniform() {
    constexpr std::size_t d = 10;
    constexpr double v = 0.1;
    Task t;
    t.name = "gaussian_linear_uniform";
    t.dim_theta = d;
    t.dim_x = d;
    t.prior_std.assign(d, 2.0 / std::sqrt(12.0));
    t.prior_draw = [](Rng& rng, std::span<double> out) {
        for (double& o : out) o = rng.uniform(-1.0, 1.0);
    };
    t.prior_logpdf = [](std::span<const double> th) {
        return density::log_uniform_box(th, -1.0, 1.0);
    };
    t.simulate_one = [](Rng& rng, std::span<const double> th, std::span<double> out) {
        for (std::size_t j = 0; j < d; ++j) out[j] = rng.normal(th[j], std::sqrt(v));
    };
    t.reference_posterior = [](std::span<const double> x, std::size_t n, Rng& rng) {
        // Truncated normal via rejection against the prior box.
        Matrix draws(n, d);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t tries = 0;; ++tries) {
                if (tries > 1000000)
                    throw NumericError("gaussian_linear_uniform reference: rejection stalled");
                bool inside = true;
                for (std::size_t j = 0; j < d; ++j) {
                    draws(i, j) = rng.normal(x[j], std::sqrt(v));
                    if (draws(i, j) < -1.0 || draws(i, j) > 1.0) inside = false;
                }
                if (inside) break;
            }
        }
        return draws;
    };
    return t;
}

/// 2-D mixture of two normals centered on theta with covariances 1.0 I and
/// 0.01 I; uniform prior from -10 to 10.
inline Task gaussian_mixture() {
    constexpr std::size_t d = 2;
    constexpr double var_wide = 1.0;
    constexpr double var_narrow = 0.01;
    Task t;
    t.name = "gaussian_mixture";
    t.dim_theta = d;
    t.dim_x = d;
    t.prior_std.assign(d, 20.0 / std::sqrt(12.0));
    t.prior_draw = [](Rng& rng, std::span<double> out) {
        for (double& o : out) o = rng.uniform(-10.0, 10.0);
    };
    t.prior_logpdf = [](std::span<const double> th) {
        return density::log_uniform_box(th, -10.0, 10.0);
    };
    t.simulate_one = [](Rng& rng, std::span<const double> th, std::span<double> out) {
        const double sd = rng.uniform() < 0.5 ? std::sqrt(var_wide) : std::sqrt(var_narrow);
        for (std::size_t j = 0; j < d; ++j) out[j] = rng.normal(th[j], sd);
    };
    t.reference_posterior = [](std::span<const double> x, std::size_t n, Rng& rng) {
        // The mixture kernel is symmetric in theta - x, so the posterior is the
        // same mixture centered on x, truncated to the prior box.
        Matrix draws(n, d);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t tries = 0;; ++tries) {
                if (tries > 1000000)
                    throw NumericError("gaussian_mixture reference: rejection stalled");
                const double sd =
                    rng.uniform() < 0.5 ? std::sqrt(var_wide) : std::sqrt(var_narrow);
                bool inside = true;
                for (std::size_t j = 0; j < d; ++j) {
                    draws(i, j) = rng.normal(x[j], sd);
                    if (draws(i, j) < -10.0 || draws(i, j) > 10.0) inside = false;
                }
                if (inside) break;
            }
        }
        return draws;
    };
    return t;
}

namespace detail {

// Crescent noise shared by the two_moons simulator and its posterior inverse.
inline void two_moons_noise(Rng& rng, double& u, double& v) {
    const double a = rng.uniform(-std::numbers::pi / 2.0, std::numbers::pi / 2.0);
    const double r = rng.normal(0.1, 0.01);
    u = r * std::cos(a) + 0.25;
    v = r * std::sin(a);
}

}  // namespace detail

/// 2-D task with a bimodal crescent-shaped posterior; uniform prior from
/// -1 to 1.
inline Task two_moons() {
    constexpr std::size_t d = 2;
    const double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
    Task t;
    t.name = "two_moons";
    t.dim_theta = d;
    t.dim_x = d;
    t.prior_std.assign(d, 2.0 / std::sqrt(12.0));
    t.prior_draw = [](Rng& rng, std::span<double> out) {
        for (double& o : out) o = rng.uniform(-1.0, 1.0);
    };
    t.prior_logpdf = [](std::span<const double> th) {
        return density::log_uniform_box(th, -1.0, 1.0);
    };
    t.simulate_one = [inv_sqrt2](Rng& rng, std::span<const double> th, std::span<double> out) {
        double u, v;
        detail::two_moons_noise(rng, u, v);
        const double z0 = (th[0] + th[1]) * inv_sqrt2;
        const double z1 = (-th[0] + th[1]) * inv_sqrt2;
        out[0] = u - std::abs(z0);
        out[1] = v + z1;
    };
    t.reference_posterior = [inv_sqrt2](std::span<const double> x, std::size_t n, Rng& rng) {
        // Invert the forward model: draw the crescent noise, solve for the
        // rotated coordinates, pick the |z0| sign at random (the two modes),
        // and reject draws outside the prior box.
        Matrix draws(n, d);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t tries = 0;; ++tries) {
                if (tries > 1000000)
                    throw NumericError("two_moons reference: rejection stalled");
                double u, v;
                detail::two_moons_noise(rng, u, v);
                const double abs_z0 = u - x[0];
                if (abs_z0 < 0.0) continue;
                const double z0 = rng.uniform() < 0.5 ? abs_z0 : -abs_z0;
                const double z1 = x[1] - v;
                const double th0 = (z0 - z1) * inv_sqrt2;
                const double th1 = (z0 + z1) * inv_sqrt2;
                if (th0 < -1.0 || th0 > 1.0 || th1 < -1.0 || th1 > 1.0) continue;
                draws(i, 0) = th0;
                draws(i, 1) = th1;
                break;
            }
        }
        return draws;
    };
    return t;
}

/// Simple likelihood, complex posterior: five parameters set the mean and
/// covariance of a 2-D normal; the data are four draws from it. Uniform
/// prior from -3 to 3.
inline Task slcp() {
    constexpr std::size_t d_theta = 5;
    constexpr std::size_t n_draws = 4;
    Task t;
    t.name = "slcp";
    t.dim_theta = d_theta;
    t.dim_x = 2 * n_draws;
    t.prior_std.assign(d_theta, 6.0 / std::sqrt(12.0));
    t.prior_draw = [](Rng& rng, std::span<double> out) {
        for (double& o : out) o = rng.uniform(-3.0, 3.0);
    };
    t.prior_logpdf = [](std::span<const double> th) {
        return density::log_uniform_box(th, -3.0, 3.0);
    };
    t.simulate_one = [](Rng& rng, std::span<const double> th, std::span<double> out) {
        const double m0 = th[0], m1 = th[1];
        const double s1 = th[2] * th[2];
        const double s2 = th[3] * th[3];
        const double rho = std::tanh(th[4]);
        const double c = std::sqrt(std::max(0.0, 1.0 - rho * rho));
        for (std::size_t k = 0; k < n_draws; ++k) {
            const double e1 = rng.normal();
            const double e2 = rng.normal();
            out[2 * k] = m0 + s1 * e1;
            out[2 * k + 1] = m1 + s2 * (rho * e1 + c * e2);
        }
    };
    return t;
}

}  // namespace tasks

inline Task make_task(const std::string& name, double conjugate_sigma = 1.0) {
    if (name == "conjugate_gaussian") return tasks::conjugate_gaussian(conjugate_sigma);
    if (name == "gaussian_linear") return tasks::gaussian_linear();
    if (name == "gaussian_linear_uniform") return tasks::gaussian_linear_uniform();
    if (name == "gaussian_mixture") return tasks::gaussian_mixture();
    if (name == "two_moons") return tasks::two_moons();
    if (name == "slcp") return tasks::slcp();
    throw ConfigError("unknown task: " + name);
}

inline std::vector<std::string> task_names() {
    return {"conjugate_gaussian", "gaussian_linear", "gaussian_linear_uniform",
            "gaussian_mixture",   "two_moons",       "slcp"};
}

/// Deterministic benchmark observations: draw theta from the prior and
/// simulate, on a stream derived from the given seed.
inline Matrix task_observations(const Task& task, std::size_t n_obs, std::uint64_t seed) {
    Rng rng = Rng(seed).split(0x0b5e7feedULL);
    Matrix theta = sample_prior(task, n_obs, rng);
    return simulate(task, theta, rng);
}

}  // namespace nre
