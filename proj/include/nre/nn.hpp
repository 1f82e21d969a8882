#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "nre/errors.hpp"
#include "nre/matrix.hpp"
#include "nre/rng.hpp"

namespace nre {

/// Fully connected layer, y = x W^T + b.
struct Dense {
    Matrix w;  // out x in
    Matrix b;  // 1 x out
    Matrix dw, db;

    Dense() = default;
    Dense(std::size_t in, std::size_t out) : w(out, in), b(1, out), dw(out, in), db(1, out) {}

    std::size_t in_features() const { return w.cols(); }
    std::size_t out_features() const { return w.rows(); }

    /// Symmetric uniform init in +-sqrt(1/fan_in) for weights and bias.
    void init(Rng& rng) {
        const double bound = std::sqrt(1.0 / static_cast<double>(w.cols()));
        for (double& v : w.storage()) v = rng.uniform(-bound, bound);
        for (double& v : b.storage()) v = rng.uniform(-bound, bound);
    }

    Matrix forward(const Matrix& x, bool cache) {
        if (x.cols() != w.cols())
            throw ShapeError("Dense::forward: input has " + std::to_string(x.cols()) +
                             " features, layer expects " + std::to_string(w.cols()));
        if (cache) input_ = x;
        Matrix y = matmul_bt(x, w);
        for (std::size_t i = 0; i < y.rows(); ++i) {
            auto r = y.row(i);
            for (std::size_t j = 0; j < y.cols(); ++j) r[j] += b(0, j);
        }
        return y;
    }

    Matrix backward(const Matrix& dy) {
        dw = matmul_at(dy, input_);
        db = Matrix(1, b.cols());
        for (std::size_t i = 0; i < dy.rows(); ++i) {
            auto r = dy.row(i);
            for (std::size_t j = 0; j < dy.cols(); ++j) db(0, j) += r[j];
        }
        return matmul(dy, w);
    }

  private:
    Matrix input_;
};

/// Per-feature batch normalization. Train mode normalizes with batch
/// statistics (population variance) and updates running statistics with
/// momentum 0.1; eval mode normalizes with the running statistics.
struct BatchNorm {
    Matrix gamma, beta;              // 1 x f
    Matrix running_mean, running_var;  // 1 x f
    double momentum = 0.1;
    double eps = 1e-10;
    Matrix dgamma, dbeta;

    BatchNorm() = default;
    explicit BatchNorm(std::size_t f)
        : gamma(1, f, 1.0), beta(1, f, 0.0), running_mean(1, f, 0.0), running_var(1, f, 1.0),
          dgamma(1, f), dbeta(1, f) {}

    std::size_t features() const { return gamma.cols(); }

    Matrix forward(const Matrix& x, bool train) {
        const std::size_t n = x.rows(), f = x.cols();
        if (f != features()) throw ShapeError("BatchNorm::forward: feature count mismatch");
        Matrix y(n, f);
        if (train) {
            auto mu = column_means(x);
            auto var = column_vars(x);
            inv_std_.assign(f, 0.0);
            for (std::size_t j = 0; j < f; ++j) inv_std_[j] = 1.0 / std::sqrt(var[j] + eps);
            xhat_ = Matrix(n, f);
            for (std::size_t i = 0; i < n; ++i) {
                auto xr = x.row(i);
                auto hr = xhat_.row(i);
                auto yr = y.row(i);
                for (std::size_t j = 0; j < f; ++j) {
                    hr[j] = (xr[j] - mu[j]) * inv_std_[j];
                    yr[j] = gamma(0, j) * hr[j] + beta(0, j);
                }
            }
            const double unbias = n > 1 ? static_cast<double>(n) / static_cast<double>(n - 1) : 1.0;
            for (std::size_t j = 0; j < f; ++j) {
                running_mean(0, j) = (1.0 - momentum) * running_mean(0, j) + momentum * mu[j];
                running_var(0, j) = (1.0 - momentum) * running_var(0, j) + momentum * var[j] * unbias;
            }
        } else {
            for (std::size_t i = 0; i < n; ++i) {
                auto xr = x.row(i);
                auto yr = y.row(i);
                for (std::size_t j = 0; j < f; ++j) {
                    yr[j] = gamma(0, j) * (xr[j] - running_mean(0, j)) /
                                std::sqrt(running_var(0, j) + eps) +
                            beta(0, j);
                }
            }
        }
        return y;
    }

    Matrix backward(const Matrix& dy) {
        const std::size_t n = dy.rows(), f = dy.cols();
        dgamma = Matrix(1, f);
        dbeta = Matrix(1, f);
        std::vector<double> sum_dxhat(f, 0.0), sum_dxhat_xhat(f, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            auto dyr = dy.row(i);
            auto hr = xhat_.row(i);
            for (std::size_t j = 0; j < f; ++j) {
                dgamma(0, j) += dyr[j] * hr[j];
                dbeta(0, j) += dyr[j];
                const double dxh = dyr[j] * gamma(0, j);
                sum_dxhat[j] += dxh;
                sum_dxhat_xhat[j] += dxh * hr[j];
            }
        }
        Matrix dx(n, f);
        const double invn = 1.0 / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            auto dyr = dy.row(i);
            auto hr = xhat_.row(i);
            auto dxr = dx.row(i);
            for (std::size_t j = 0; j < f; ++j) {
                const double dxh = dyr[j] * gamma(0, j);
                dxr[j] = inv_std_[j] * (dxh - invn * sum_dxhat[j] - invn * hr[j] * sum_dxhat_xhat[j]);
            }
        }
        return dx;
    }

  private:
    Matrix xhat_;
    std::vector<double> inv_std_;
};

namespace detail {

inline Matrix relu(const Matrix& x, Matrix& mask) {
    mask = Matrix(x.rows(), x.cols());
    Matrix y(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const bool on = x.data()[i] > 0.0;
        mask.data()[i] = on ? 1.0 : 0.0;
        y.data()[i] = on ? x.data()[i] : 0.0;
    }
    return y;
}

inline Matrix apply_mask(const Matrix& dy, const Matrix& mask) {
    Matrix dx(dy.rows(), dy.cols());
    for (std::size_t i = 0; i < dy.size(); ++i) dx.data()[i] = dy.data()[i] * mask.data()[i];
    return dx;
}

inline void check_finite(const Matrix& m, const std::string& layer) {
    if (!m.all_finite())
        throw NumericError("forward: non-finite activation in " + layer);
}

}  // namespace detail

/// dense -> batchnorm -> relu -> dense -> batchnorm, skip add, relu.
struct ResidualBlock {
    Dense d1, d2;
    BatchNorm bn1, bn2;

    ResidualBlock() = default;
    explicit ResidualBlock(std::size_t width)
        : d1(width, width), d2(width, width), bn1(width), bn2(width) {}

    void init(Rng& rng) {
        d1.init(rng);
        d2.init(rng);
    }

    Matrix forward(const Matrix& x, bool train, const std::string& tag) {
        Matrix a = d1.forward(x, train);
        detail::check_finite(a, tag + " dense1");
        Matrix h = bn1.forward(a, train);
        h = detail::relu(h, mask1_);
        Matrix a2 = d2.forward(h, train);
        detail::check_finite(a2, tag + " dense2");
        Matrix s = bn2.forward(a2, train);
        s += x;
        return detail::relu(s, mask2_);
    }

    Matrix backward(const Matrix& dy) {
        Matrix ds = detail::apply_mask(dy, mask2_);
        Matrix dmain = bn2.backward(ds);
        dmain = d2.backward(dmain);
        dmain = detail::apply_mask(dmain, mask1_);
        dmain = bn1.backward(dmain);
        dmain = d1.backward(dmain);
        dmain += ds;  // skip path
        return dmain;
    }

  private:
    Matrix mask1_, mask2_;
};

/// Residual MLP mapping concat(theta, x) rows to one scalar logit per row.
/// Small preset: 2 blocks x 50 units. Large preset: 3 blocks x 128 units.
class RatioNet {
  public:
    RatioNet() = default;
    RatioNet(std::size_t dim_theta, std::size_t dim_x, std::size_t hidden, std::size_t n_blocks)
        : dim_theta_(dim_theta), dim_x_(dim_x), hidden_(hidden) {
        proj_ = Dense(dim_theta + dim_x, hidden);
        for (std::size_t i = 0; i < n_blocks; ++i) blocks_.emplace_back(hidden);
        head_ = Dense(hidden, 1);
    }

    void init(Rng& rng) {
        proj_.init(rng);
        for (auto& b : blocks_) b.init(rng);
        head_.init(rng);
    }

    std::size_t dim_theta() const { return dim_theta_; }
    std::size_t dim_x() const { return dim_x_; }
    std::size_t input_dim() const { return dim_theta_ + dim_x_; }
    std::size_t hidden_units() const { return hidden_; }
    std::size_t n_blocks() const { return blocks_.size(); }

    void set_train(bool train) { train_mode_ = train; }
    bool train_mode() const { return train_mode_; }

    /// One logit per input row. Rows are already standardized concat(theta, x).
    Matrix forward_rows(const Matrix& input) {
        if (input.cols() != input_dim())
            throw ShapeError("RatioNet::forward: input has " + std::to_string(input.cols()) +
                             " features, net expects " + std::to_string(input_dim()));
        Matrix z = proj_.forward(input, train_mode_);
        detail::check_finite(z, "input projection");
        for (std::size_t i = 0; i < blocks_.size(); ++i)
            z = blocks_[i].forward(z, train_mode_, "block " + std::to_string(i));
        Matrix logits = head_.forward(z, train_mode_);
        detail::check_finite(logits, "output head");
        cache_valid_ = train_mode_;
        return logits;
    }

    /// Gradient of a scalar loss w.r.t. every parameter, given dloss/dlogits.
    void backward(const Matrix& dlogits) {
        if (!cache_valid_)
            throw StateError("RatioNet::backward: no cached train-mode forward pass");
        Matrix dz = head_.backward(dlogits);
        for (std::size_t i = blocks_.size(); i-- > 0;) dz = blocks_[i].backward(dz);
        proj_.backward(dz);
    }

    std::vector<Matrix*> parameters() {
        std::vector<Matrix*> p{&proj_.w, &proj_.b};
        for (auto& blk : blocks_) {
            p.push_back(&blk.d1.w);
            p.push_back(&blk.d1.b);
            p.push_back(&blk.bn1.gamma);
            p.push_back(&blk.bn1.beta);
            p.push_back(&blk.d2.w);
            p.push_back(&blk.d2.b);
            p.push_back(&blk.bn2.gamma);
            p.push_back(&blk.bn2.beta);
        }
        p.push_back(&head_.w);
        p.push_back(&head_.b);
        return p;
    }

    std::vector<Matrix*> gradients() {
        std::vector<Matrix*> g{&proj_.dw, &proj_.db};
        for (auto& blk : blocks_) {
            g.push_back(&blk.d1.dw);
            g.push_back(&blk.d1.db);
            g.push_back(&blk.bn1.dgamma);
            g.push_back(&blk.bn1.dbeta);
            g.push_back(&blk.d2.dw);
            g.push_back(&blk.d2.db);
            g.push_back(&blk.bn2.dgamma);
            g.push_back(&blk.bn2.dbeta);
        }
        g.push_back(&head_.dw);
        g.push_back(&head_.db);
        return g;
    }

    /// Batch-norm running statistics, in block order.
    std::vector<Matrix*> running_stats() {
        std::vector<Matrix*> s;
        for (auto& blk : blocks_) {
            s.push_back(&blk.bn1.running_mean);
            s.push_back(&blk.bn1.running_var);
            s.push_back(&blk.bn2.running_mean);
            s.push_back(&blk.bn2.running_var);
        }
        return s;
    }

    Dense& head() { return head_; }
    Dense& input_projection() { return proj_; }

  private:
    std::size_t dim_theta_ = 0, dim_x_ = 0, hidden_ = 0;
    Dense proj_;
    std::vector<ResidualBlock> blocks_;
    Dense head_;
    bool train_mode_ = false;
    bool cache_valid_ = false;
};

/// Logits h_w(theta_i, x_i), one scalar per paired row.
inline Matrix forward(RatioNet& net, const Matrix& theta, const Matrix& x) {
    if (theta.rows() != x.rows())
        throw ShapeError("forward: theta has " + std::to_string(theta.rows()) + " rows, x has " +
                         std::to_string(x.rows()));
    if (theta.cols() != net.dim_theta() || x.cols() != net.dim_x())
        throw ShapeError("forward: (theta, x) dims (" + std::to_string(theta.cols()) + ", " +
                         std::to_string(x.cols()) + ") do not match net (" +
                         std::to_string(net.dim_theta()) + ", " + std::to_string(net.dim_x()) + ")");
    return net.forward_rows(hcat(theta, x));
}

}  // namespace nre
