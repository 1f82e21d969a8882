#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "nre/errors.hpp"
#include "nre/matrix.hpp"
#include "nre/nn.hpp"
#include "nre/rng.hpp"
#include "nre/standardizer.hpp"
#include "nre/tasks.hpp"

namespace nre {

enum class Variant { A, B, C };

inline std::string to_string(Variant v) {
    switch (v) {
        case Variant::A: return "a";
        case Variant::B: return "b";
        case Variant::C: return "c";
    }
    return "?";
}

inline Variant variant_from_string(const std::string& s) {
    if (s == "a" || s == "A") return Variant::A;
    if (s == "b" || s == "B") return Variant::B;
    if (s == "c" || s == "C") return Variant::C;
    throw ConfigError("unknown loss variant: " + s);
}

/// Loss family settings. gamma is the odds of a dependently drawn set, K the
/// number of contrastive slots. Class weights follow p0 = 1/(1+gamma),
/// pK = gamma / (K (1+gamma)), so p0 + K pK = 1.
struct LossConfig {
    Variant variant = Variant::C;
    double gamma = 1.0;
    int K = 1;

    double p0() const { return 1.0 / (1.0 + gamma); }
    double pK() const { return gamma / (static_cast<double>(K) * (1.0 + gamma)); }

    void validate() const {
        if (K < 1) throw ConfigError("LossConfig: K must be >= 1");
        if (!(gamma > 0.0)) throw ConfigError("LossConfig: gamma must be > 0");
        if (variant == Variant::A && (K != 1 || gamma != 1.0))
            throw ConfigError("LossConfig: variant A requires gamma = 1 and K = 1");
    }
};

enum class Regime { FreshJoint, FreshPrior, Bootstrap };

inline std::string to_string(Regime r) {
    switch (r) {
        case Regime::FreshJoint: return "fresh_joint";
        case Regime::FreshPrior: return "fresh_prior";
        case Regime::Bootstrap: return "bootstrap";
    }
    return "?";
}

inline Regime regime_from_string(const std::string& s) {
    if (s == "fresh_joint") return Regime::FreshJoint;
    if (s == "fresh_prior") return Regime::FreshPrior;
    if (s == "bootstrap") return Regime::Bootstrap;
    throw ConfigError("unknown regime: " + s);
}

/// K parameter candidates per observation. Theta is stored as (B*K) rows,
/// slot-major within each batch element: row b*K + i holds slot i for
/// element b. In a dependent batch, gen_slot marks the slot holding the
/// parameter that generated x; independent batches have gen_slot = -1.
struct ContrastiveBatch {
    Matrix theta;  // (B*K) x dim_theta
    Matrix x;      // B x dim_x
    int B = 0;
    int K = 0;
    int gen_slot = -1;
    Regime regime = Regime::Bootstrap;

    std::span<const double> slot(int b, int i) const {
        return theta.row(static_cast<std::size_t>(b) * K + i);
    }
};

struct ContrastivePair {
    ContrastiveBatch indep;
    ContrastiveBatch dep;
};

namespace detail {

inline double logsumexp(std::span<const double> v) {
    const double m = *std::max_element(v.begin(), v.end());
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

}  // namespace detail

/// Log classifier probabilities over the K+1 classes given the K logits
/// h_w(theta_i, x). Index 0 is the fully independent class; index k the
/// class where slot k generated x. Computed in log space throughout:
///   log q(y=0) = log K - L,  log q(y=k) = log gamma + h_k - L,
///   L = logsumexp(log K, log gamma + h_1, ..., log gamma + h_K).
inline std::vector<double> nrec_class_log_probs(std::span<const double> logits, double gamma,
                                                int K) {
    if (static_cast<int>(logits.size()) != K)
        throw ShapeError("nrec_class_log_probs: expected " + std::to_string(K) + " logits");
    if (!(gamma > 0.0) || K < 1) throw ConfigError("nrec_class_log_probs: need gamma > 0, K >= 1");
    const double log_gamma = std::log(gamma);
    const double log_k = std::log(static_cast<double>(K));
    std::vector<double> terms(K + 1);
    terms[0] = log_k;
    for (int i = 0; i < K; ++i) {
        if (!std::isfinite(logits[i]))
            throw NumericError("nrec_class_log_probs: non-finite logit at slot " +
                               std::to_string(i));
        terms[i + 1] = log_gamma + logits[i];
    }
    const double lse = detail::logsumexp(terms);
    std::vector<double> out(K + 1);
    out[0] = log_k - lse;
    for (int i = 0; i < K; ++i) out[i + 1] = log_gamma + logits[i] - lse;
    return out;
}

/// Scalar loss plus its gradient w.r.t. the logits that produced it.
struct LossValue {
    double value = 0.0;
    Matrix dlogits_indep;  // B x K (empty when the term is absent)
    Matrix dlogits_dep;    // B x K
};

/// Empirical loss of the (K+1)-class objective over paired logit blocks:
///   -(1/B) [ 1/(1+g) sum_b log q(y=0) + g/(1+g) sum_b' log q(y=gen) ].
inline LossValue nrec_loss_from_logits(const Matrix& logits_indep, const Matrix& logits_dep,
                                       double gamma, int K, int gen_slot = -1) {
    if (gen_slot < 0) gen_slot = K - 1;
    if (logits_indep.rows() != logits_dep.rows() ||
        logits_indep.cols() != static_cast<std::size_t>(K) ||
        logits_dep.cols() != static_cast<std::size_t>(K))
        throw ShapeError("nrec_loss_from_logits: logit blocks must both be B x K");
    const std::size_t B = logits_indep.rows();
    const double w0 = 1.0 / (1.0 + gamma);
    const double wk = gamma / (1.0 + gamma);
    const double log_gamma = std::log(gamma);
    const double log_k = std::log(static_cast<double>(K));

    LossValue out;
    out.dlogits_indep = Matrix(B, K);
    out.dlogits_dep = Matrix(B, K);
    double acc = 0.0;
    std::vector<double> terms(K + 1);
    for (std::size_t b = 0; b < B; ++b) {
        // Independent term: log q(y = 0).
        auto hi = logits_indep.row(b);
        terms[0] = log_k;
        for (int i = 0; i < K; ++i) terms[i + 1] = log_gamma + hi[i];
        double lse = detail::logsumexp(terms);
        acc += w0 * (log_k - lse);
        for (int i = 0; i < K; ++i) {
            const double qi = std::exp(terms[i + 1] - lse);
            out.dlogits_indep(b, i) = w0 * qi / static_cast<double>(B);
        }
        // Dependent term: log q(y = gen_slot + 1).
        auto hd = logits_dep.row(b);
        terms[0] = log_k;
        for (int i = 0; i < K; ++i) terms[i + 1] = log_gamma + hd[i];
        lse = detail::logsumexp(terms);
        acc += wk * (terms[gen_slot + 1] - lse);
        for (int i = 0; i < K; ++i) {
            const double qi = std::exp(terms[i + 1] - lse);
            const double ind = i == gen_slot ? 1.0 : 0.0;
            out.dlogits_dep(b, i) = -wk * (ind - qi) / static_cast<double>(B);
        }
    }
    out.value = -acc / static_cast<double>(B);
    return out;
}

/// Binary cross-entropy over paired logits (one slot per element):
///   -(1/2B) [ sum_b log(1 - sigma(f)) + sum_b' log sigma(f) ].
inline LossValue nrea_loss_from_logits(const Matrix& logits_indep, const Matrix& logits_dep) {
    if (logits_indep.cols() != 1 || logits_dep.cols() != 1 ||
        logits_indep.rows() != logits_dep.rows())
        throw ShapeError("nrea_loss_from_logits: expected matching B x 1 logit blocks");
    const std::size_t B = logits_indep.rows();
    auto softplus = [](double z) {
        return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    };
    auto sigmoid = [](double z) { return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z))
                                                  : std::exp(z) / (1.0 + std::exp(z)); };
    LossValue out;
    out.dlogits_indep = Matrix(B, 1);
    out.dlogits_dep = Matrix(B, 1);
    double acc = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
        const double fi = logits_indep(b, 0);
        const double fd = logits_dep(b, 0);
        acc += -softplus(fi);  // log(1 - sigma(fi))
        acc += -softplus(-fd);  // log sigma(fd)
        out.dlogits_indep(b, 0) = sigmoid(fi) / (2.0 * static_cast<double>(B));
        out.dlogits_dep(b, 0) = -(1.0 - sigmoid(fd)) / (2.0 * static_cast<double>(B));
    }
    out.value = -acc / (2.0 * static_cast<double>(B));
    return out;
}

/// Softmax cross-entropy at the generating slot over dependent batches only:
///   -(1/B) sum_b' log softmax(g)_gen.
inline LossValue nreb_loss_from_logits(const Matrix& logits_dep, int K, int gen_slot = -1) {
    if (gen_slot < 0) gen_slot = K - 1;
    if (logits_dep.cols() != static_cast<std::size_t>(K))
        throw ShapeError("nreb_loss_from_logits: logit block must be B x K");
    const std::size_t B = logits_dep.rows();
    LossValue out;
    out.dlogits_dep = Matrix(B, K);
    double acc = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
        auto h = logits_dep.row(b);
        const double lse = detail::logsumexp(h);
        acc += h[gen_slot] - lse;
        for (int i = 0; i < K; ++i) {
            const double qi = std::exp(h[i] - lse);
            const double ind = i == gen_slot ? 1.0 : 0.0;
            out.dlogits_dep(b, i) = -(ind - qi) / static_cast<double>(B);
        }
    }
    out.value = -acc / static_cast<double>(B);
    return out;
}

/// Route a logit pair through the configured variant.
inline LossValue loss_from_logits(const Matrix& logits_indep, const Matrix& logits_dep,
                                  const LossConfig& cfg, int gen_slot = -1) {
    switch (cfg.variant) {
        case Variant::A: return nrea_loss_from_logits(logits_indep, logits_dep);
        case Variant::B: return nreb_loss_from_logits(logits_dep, cfg.K, gen_slot);
        case Variant::C:
            return nrec_loss_from_logits(logits_indep, logits_dep, cfg.gamma, cfg.K, gen_slot);
    }
    throw ConfigError("loss_from_logits: bad variant");
}

/// Standardized net input rows for a contrastive batch: row b*K+i pairs slot
/// i of element b with x_b.
inline Matrix contrastive_input_rows(const Standardizer& std_, const ContrastiveBatch& batch) {
    const std::size_t B = batch.B, K = batch.K;
    Matrix theta_std = std_.apply_theta(batch.theta);
    Matrix x_std = std_.apply_x(batch.x);
    Matrix x_rep(B * K, x_std.cols());
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t i = 0; i < K; ++i) {
            auto src = x_std.row(b);
            std::copy(src.begin(), src.end(), x_rep.row(b * K + i).begin());
        }
    return hcat(theta_std, x_rep);
}

inline Matrix contrastive_logits(RatioNet& net, const Standardizer& std_,
                                 const ContrastiveBatch& batch) {
    Matrix col = net.forward_rows(contrastive_input_rows(std_, batch));
    const std::size_t B = batch.B, K = batch.K;
    Matrix logits(B, K);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t i = 0; i < K; ++i) logits(b, i) = col(b * K + i, 0);
    return logits;
}

/// One training-step evaluation: a single forward pass over both loss terms
/// (batch-norm statistics are shared between them), the variant loss, and
/// optionally the backward pass that leaves parameter gradients in the net.
inline double evaluate_loss(RatioNet& net, const Standardizer& std_, const ContrastivePair& pair,
                            const LossConfig& cfg, bool with_grad) {
    if (pair.indep.K != pair.dep.K || pair.indep.B != pair.dep.B)
        throw ShapeError("evaluate_loss: batch (B, K) mismatch between loss terms");
    const std::size_t B = pair.dep.B, K = pair.dep.K;
    const bool use_indep = cfg.variant != Variant::B;

    Matrix rows = contrastive_input_rows(std_, pair.dep);
    if (use_indep) rows = vcat(contrastive_input_rows(std_, pair.indep), rows);
    Matrix col = net.forward_rows(rows);

    const std::size_t dep_off = use_indep ? B * K : 0;
    Matrix li(use_indep ? B : 0, use_indep ? K : 0);
    Matrix ld(B, K);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t i = 0; i < K; ++i) {
            if (use_indep) li(b, i) = col(b * K + i, 0);
            ld(b, i) = col(dep_off + b * K + i, 0);
        }
    LossValue lv = loss_from_logits(li, ld, cfg, pair.dep.gen_slot);
    if (with_grad) {
        Matrix dcol(col.rows(), 1);
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t i = 0; i < K; ++i) {
                if (use_indep) dcol(b * K + i, 0) = lv.dlogits_indep(b, i);
                dcol(dep_off + b * K + i, 0) = lv.dlogits_dep(b, i);
            }
        net.backward(dcol);
    }
    return lv.value;
}

/// [OP] loss_nrec / loss_nrea / loss_nreb evaluated through a net in its
/// current mode. Used by tests and validation; training fuses the two terms
/// into a single forward pass (see trainer.hpp).
inline double loss_nrec(RatioNet& net, const Standardizer& std_, ContrastiveBatch& batch_indep,
                        ContrastiveBatch& batch_dep, const LossConfig& cfg) {
    if (batch_indep.K != batch_dep.K || batch_indep.B != batch_dep.B)
        throw ShapeError("loss_nrec: batch (B, K) mismatch");
    if (batch_indep.K != cfg.K)
        throw ShapeError("loss_nrec: batch K does not match config K");
    Matrix li = contrastive_logits(net, std_, batch_indep);
    Matrix ld = contrastive_logits(net, std_, batch_dep);
    return nrec_loss_from_logits(li, ld, cfg.gamma, cfg.K, batch_dep.gen_slot).value;
}

inline double loss_nrea(RatioNet& net, const Standardizer& std_, ContrastiveBatch& batch_indep,
                        ContrastiveBatch& batch_dep) {
    Matrix li = contrastive_logits(net, std_, batch_indep);
    Matrix ld = contrastive_logits(net, std_, batch_dep);
    return nrea_loss_from_logits(li, ld).value;
}

inline double loss_nreb(RatioNet& net, const Standardizer& std_, ContrastiveBatch& batch_dep) {
    Matrix ld = contrastive_logits(net, std_, batch_dep);
    return nreb_loss_from_logits(ld, batch_dep.K, batch_dep.gen_slot).value;
}

/// Assemble the two contrastive batches for one mini-batch of joint draws.
///
/// Contrastive parameters come from circular shifts of the mini-batch's own
/// theta rows (bootstrap and fresh-joint regimes) or from fresh prior draws
/// (fresh-prior regime). The dependent batch carries the generating theta in
/// the last slot; the independent batch pairs x with shifts 1..K so no slot
/// is generative.
inline ContrastivePair assemble_contrastive_batch(const JointBatch& minibatch, Regime regime,
                                                  int K, Rng& rng, const Task* prior_source) {
    const std::size_t B = minibatch.size();
    const std::size_t d = minibatch.theta.cols();
    if (K < 1) throw ConfigError("assemble_contrastive_batch: K must be >= 1");
    if (B < 2) throw ConfigError("assemble_contrastive_batch: need at least 2 joint draws");
    if (regime == Regime::Bootstrap && static_cast<std::size_t>(2 * K) > B)
        throw ConfigError("assemble_contrastive_batch: bootstrap requires K <= B/2 (K=" +
                          std::to_string(K) + ", B=" + std::to_string(B) + ")");
    if (regime == Regime::FreshPrior && prior_source == nullptr)
        throw ConfigError("assemble_contrastive_batch: fresh_prior regime needs a task");
    if (static_cast<std::size_t>(K) >= B)
        throw ConfigError("assemble_contrastive_batch: K must be < B");

    ContrastivePair pair;
    pair.indep.B = pair.dep.B = static_cast<int>(B);
    pair.indep.K = pair.dep.K = K;
    pair.indep.regime = pair.dep.regime = regime;
    pair.indep.gen_slot = -1;
    pair.dep.gen_slot = K - 1;
    pair.indep.x = minibatch.x;
    pair.dep.x = minibatch.x;
    pair.indep.theta = Matrix(B * K, d);
    pair.dep.theta = Matrix(B * K, d);

    auto copy_row = [&](Matrix& dst, std::size_t row, std::span<const double> src) {
        std::copy(src.begin(), src.end(), dst.row(row).begin());
    };

    if (regime == Regime::FreshPrior) {
        Matrix fresh = sample_prior(*prior_source, B * K, rng);
        std::vector<std::size_t> perm(B * K);
        std::iota(perm.begin(), perm.end(), 0);
        shuffle(perm, rng);
        std::size_t next = 0;
        for (std::size_t b = 0; b < B; ++b) {
            for (int i = 0; i < K; ++i)
                copy_row(pair.indep.theta, b * K + i, fresh.row(b * K + i));
            for (int i = 0; i < K - 1; ++i)
                copy_row(pair.dep.theta, b * K + i, fresh.row(perm[next++]));
            copy_row(pair.dep.theta, b * K + (K - 1), minibatch.theta.row(b));
        }
    } else {
        // Circular shifts by 1..K (independent) and 0..K-1 (dependent, with
        // the generating row in the last slot).
        for (std::size_t b = 0; b < B; ++b) {
            for (int i = 0; i < K; ++i) {
                const std::size_t shifted = (b + static_cast<std::size_t>(i) + 1) % B;
                copy_row(pair.indep.theta, b * K + i, minibatch.theta.row(shifted));
            }
            for (int i = 0; i < K - 1; ++i) {
                const std::size_t shifted = (b + static_cast<std::size_t>(i) + 1) % B;
                copy_row(pair.dep.theta, b * K + i, minibatch.theta.row(shifted));
            }
            copy_row(pair.dep.theta, b * K + (K - 1), minibatch.theta.row(b));
        }
    }
    return pair;
}

/// Source-level overload: draws the mini-batch itself according to the
/// regime (live simulator for fresh_joint, rows of a fixed store otherwise).
struct BatchSource {
    const Task* task = nullptr;
    const JointBatch* store = nullptr;
};

inline ContrastivePair assemble_contrastive_batch(const BatchSource& source, Regime regime, int B,
                                                  int K, Rng& rng) {
    JointBatch mb;
    if (regime == Regime::FreshJoint) {
        if (source.task == nullptr)
            throw ConfigError("assemble_contrastive_batch: fresh_joint requires a live task");
        mb = sample_joint(*source.task, B, rng);
    } else {
        if (source.store == nullptr)
            throw ConfigError("assemble_contrastive_batch: fixed-data regime requires a store");
        if (source.store->size() < static_cast<std::size_t>(B))
            throw ConfigError("assemble_contrastive_batch: store smaller than batch size");
        std::vector<std::size_t> idx(source.store->size());
        std::iota(idx.begin(), idx.end(), 0);
        shuffle(idx, rng);
        idx.resize(B);
        mb.theta = take_rows(source.store->theta, idx);
        mb.x = take_rows(source.store->x, idx);
    }
    return assemble_contrastive_batch(mb, regime, K, rng, source.task);
}

}  // namespace nre
