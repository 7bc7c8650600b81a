#pragma once

// Entropy-smoothed optimal transport between weighted point sets.

#include "eml/common.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

namespace eml {

/// Weighted point set: one sample per row of `points`, masses in `weights`.
template <typename Scalar>
class Signature {
public:
    Signature() = default;

    Signature(Matrix<Scalar> points, Vector<Scalar> weights)
        : points_(std::move(points)), weights_(std::move(weights)) {
        if (points_.rows() < 1)
            throw ValidationError("Signature: needs at least one point");
        if (weights_.size() != points_.rows())
            throw ShapeError("Signature: " + std::to_string(points_.rows()) +
                             " points but " + std::to_string(weights_.size()) + " weights");
        if (!points_.allFinite() || !weights_.allFinite())
            throw ValidationError("Signature: non-finite entry");
        if ((weights_.array() <= Scalar(0)).any())
            throw ValidationError("Signature: weights must be strictly positive");
        if (std::abs(weights_.sum() - Scalar(1)) > Scalar(1e-9))
            throw ValidationError("Signature: weights must sum to 1");
    }

    /// Equal mass 1/m on each of the m rows.
    static Signature uniform(Matrix<Scalar> points) {
        const auto m = points.rows();
        Vector<Scalar> w = Vector<Scalar>::Constant(m, Scalar(1) / Scalar(std::max<Eigen::Index>(m, 1)));
        return Signature(std::move(points), std::move(w));
    }

    const Matrix<Scalar>& points() const { return points_; }
    const Vector<Scalar>& weights() const { return weights_; }
    Eigen::Index size() const { return points_.rows(); }
    Eigen::Index dim() const { return points_.cols(); }

    /// Weighted mean of the points, as a 1-point signature.
    Signature barycenter() const {
        Matrix<Scalar> c = weights_.transpose() * points_;
        return Signature(std::move(c), Vector<Scalar>::Ones(1));
    }

    /// Same samples and weights restricted to a column range.
    Signature columns(ColumnRange r) const {
        if (r.begin < 0 || r.end() > dim())
            throw ShapeError("Signature::columns: range [" + std::to_string(r.begin) + "," +
                             std::to_string(r.end()) + ") outside dimension " +
                             std::to_string(dim()));
        return Signature(points_.middleCols(r.begin, r.size), weights_);
    }

private:
    Matrix<Scalar> points_;
    Vector<Scalar> weights_;
};

using SignatureXd = Signature<double>;

template <typename Scalar>
struct SinkhornConfig {
    Scalar sigma = Scalar(0.1);
    int max_iters = 1000;
    Scalar tolerance = Scalar(1e-6);

    void validate() const {
        if (!(sigma > Scalar(0)) || !std::isfinite(double(sigma)))
            throw ValidationError("sinkhorn.sigma must be > 0");
        if (max_iters < 1) throw ValidationError("sinkhorn.max_iters must be >= 1");
        if (!(tolerance > Scalar(0))) throw ValidationError("sinkhorn.tolerance must be > 0");
    }
};

template <typename Scalar>
struct TransportPlan {
    Matrix<Scalar> coupling;
    Scalar value = 0;  ///< <D,F> - sigma * h(F)
    int iterations_used = 0;
    Scalar marginal_residual = 0;
    bool converged = false;
    Vector<Scalar> f, g;  ///< dual potentials divided by sigma: F_ij = exp(f_i + g_j - D_ij / sigma)
};

/// Entropy h(F) = -sum F log F with 0 log 0 = 0.
template <typename Derived>
typename Derived::Scalar coupling_entropy(const Eigen::MatrixBase<Derived>& F) {
    using Scalar = typename Derived::Scalar;
    Scalar h = 0;
    for (Eigen::Index j = 0; j < F.cols(); ++j)
        for (Eigen::Index i = 0; i < F.rows(); ++i) {
            const Scalar f = F(i, j);
            if (f > Scalar(0)) h -= f * std::log(f);
        }
    return h;
}

/// Pairwise costs ||L (x_i - y_j)||^2 between rows of two point sets.
template <typename DerivedL, typename DerivedX, typename DerivedY>
Matrix<typename DerivedL::Scalar> ground_cost(const Eigen::MatrixBase<DerivedL>& L,
                                              const Eigen::MatrixBase<DerivedX>& src,
                                              const Eigen::MatrixBase<DerivedY>& tgt) {
    using Scalar = typename DerivedL::Scalar;
    if (L.cols() != src.cols() || L.cols() != tgt.cols())
        throw ShapeError("ground_cost: metric has " + std::to_string(L.cols()) +
                         " columns, source dim " + std::to_string(src.cols()) +
                         ", target dim " + std::to_string(tgt.cols()));
    const Matrix<Scalar> a = src * L.transpose();
    const Matrix<Scalar> b = tgt * L.transpose();
    Matrix<Scalar> D(a.rows(), b.rows());
    for (Eigen::Index j = 0; j < b.rows(); ++j)
        for (Eigen::Index i = 0; i < a.rows(); ++i) D(i, j) = (a.row(i) - b.row(j)).squaredNorm();
    return D;
}

template <typename DerivedL, typename Scalar>
Matrix<Scalar> ground_cost(const Eigen::MatrixBase<DerivedL>& L, const Signature<Scalar>& src,
                           const Signature<Scalar>& tgt) {
    return ground_cost(L, src.points(), tgt.points());
}

/// Pairwise costs ||L_src x_u - L_tgt y_v||^2 across two feature spaces sharing an embedding.
template <typename DerivedA, typename DerivedB, typename DerivedX, typename DerivedY>
Matrix<typename DerivedA::Scalar> cross_ground_cost(const Eigen::MatrixBase<DerivedA>& L_src,
                                                    const Eigen::MatrixBase<DerivedX>& src,
                                                    const Eigen::MatrixBase<DerivedB>& L_tgt,
                                                    const Eigen::MatrixBase<DerivedY>& tgt) {
    using Scalar = typename DerivedA::Scalar;
    if (L_src.rows() != L_tgt.rows())
        throw ShapeError("cross_ground_cost: embedding dimensions differ (" +
                         std::to_string(L_src.rows()) + " vs " + std::to_string(L_tgt.rows()) + ")");
    if (L_src.cols() != src.cols())
        throw ShapeError("cross_ground_cost: source metric has " + std::to_string(L_src.cols()) +
                         " columns, source dim " + std::to_string(src.cols()));
    if (L_tgt.cols() != tgt.cols())
        throw ShapeError("cross_ground_cost: target metric has " + std::to_string(L_tgt.cols()) +
                         " columns, target dim " + std::to_string(tgt.cols()));
    const Matrix<Scalar> a = src * L_src.transpose();
    const Matrix<Scalar> b = tgt * L_tgt.transpose();
    Matrix<Scalar> D(a.rows(), b.rows());
    for (Eigen::Index j = 0; j < b.rows(); ++j)
        for (Eigen::Index i = 0; i < a.rows(); ++i) D(i, j) = (a.row(i) - b.row(j)).squaredNorm();
    return D;
}

template <typename DerivedA, typename DerivedB, typename Scalar>
Matrix<Scalar> cross_ground_cost(const Eigen::MatrixBase<DerivedA>& L_src, const Signature<Scalar>& src,
                                 const Eigen::MatrixBase<DerivedB>& L_tgt, const Signature<Scalar>& tgt) {
    return cross_ground_cost(L_src, src.points(), L_tgt, tgt.points());
}

namespace detail {

inline constexpr int kScalingIters = 10;      ///< Sinkhorn sweeps before switching to Newton
inline constexpr double kPolishFactor = 1e-4;  ///< Newton target relative to the tolerance
inline constexpr double kNewtonRidge = 1e-13;
inline constexpr double kMaxLogStep = 16;      ///< longest Newton step in units of sigma

template <typename Scalar>
Scalar log_sum_exp(const Scalar* v, Eigen::Index n, Eigen::Index stride) {
    Scalar mx = -std::numeric_limits<Scalar>::infinity();
    for (Eigen::Index i = 0; i < n; ++i) mx = std::max(mx, v[i * stride]);
    if (!std::isfinite(double(mx))) return mx;
    Scalar s = 0;
    for (Eigen::Index i = 0; i < n; ++i) s += std::exp(v[i * stride] - mx);
    return mx + std::log(s);
}

}  // namespace detail

/// Log-domain Sinkhorn for min <D,F> - sigma h(F) s.t. F 1 = a, F^T 1 = b, F >= 0.
///
/// Hitting max_iters is not an error: the plan is returned with converged = false.
/// `warm` (a plan of a nearby problem with the same shape) seeds the dual potentials;
/// a warm start that fails to converge is retried from scratch.
template <typename DerivedD, typename DerivedA, typename DerivedB>
TransportPlan<typename DerivedD::Scalar> sinkhorn(const Eigen::MatrixBase<DerivedD>& D,
                                                  const Eigen::MatrixBase<DerivedA>& src_weights,
                                                  const Eigen::MatrixBase<DerivedB>& tgt_weights,
                                                  const SinkhornConfig<typename DerivedD::Scalar>& cfg = {},
                                                  const TransportPlan<typename DerivedD::Scalar>* warm = nullptr) {
    using Scalar = typename DerivedD::Scalar;
    cfg.validate();
    const Eigen::Index m = D.rows(), n = D.cols();
    if (src_weights.size() != m || tgt_weights.size() != n)
        throw ShapeError("sinkhorn: cost is " + shape_string(m, n) + " but weights have sizes " +
                         std::to_string(src_weights.size()) + " and " +
                         std::to_string(tgt_weights.size()));
    if (m == 0 || n == 0) throw ShapeError("sinkhorn: empty cost matrix");
    if (!D.allFinite()) throw ValidationError("sinkhorn: cost matrix has non-finite entries");
    if ((src_weights.array() <= Scalar(0)).any() || (tgt_weights.array() <= Scalar(0)).any())
        throw ValidationError("sinkhorn: weights must be strictly positive");

    const Scalar sigma = cfg.sigma;
    const Vector<Scalar> a = src_weights.template cast<Scalar>();
    const Vector<Scalar> b = tgt_weights.template cast<Scalar>();
    const Vector<Scalar> log_a = a.array().log().matrix();
    const Vector<Scalar> log_b = b.array().log().matrix();
    // Scaled kernel exponent: -D / sigma, column-major.
    const Matrix<Scalar> neg = -D / sigma;

    // Dual potentials divided by sigma; the coupling is exp(neg_ij + f_i + g_j).
    const bool warm_start = warm && warm->f.size() == m && warm->g.size() == n;
    Vector<Scalar> f = warm_start ? warm->f : Vector<Scalar>::Zero(m);
    Vector<Scalar> g = warm_start ? warm->g : Vector<Scalar>::Zero(n);
    Matrix<Scalar> work(m, n);
    Matrix<Scalar> F(m, n);
    auto coupling_of = [&](const Vector<Scalar>& fv, const Vector<Scalar>& gv, Matrix<Scalar>& out) {
        out = neg;
        out.colwise() += fv;
        out.rowwise() += gv.transpose();
        out = out.array().exp().matrix();
    };
    auto residual_of = [&](const Matrix<Scalar>& P) {
        return std::max((P.rowwise().sum() - a).cwiseAbs().maxCoeff(),
                        (P.colwise().sum().transpose() - b).cwiseAbs().maxCoeff());
    };

    // One Gauss-Seidel scaling sweep: rows, then columns matched exactly.
    auto sweep = [&] {
        work = neg;
        work.rowwise() += g.transpose();
        for (Eigen::Index i = 0; i < m; ++i)
            f(i) = log_a(i) - detail::log_sum_exp(work.data() + i, n, m);
        work = neg;
        work.colwise() += f;
        for (Eigen::Index j = 0; j < n; ++j)
            g(j) = log_b(j) - detail::log_sum_exp(work.data() + j * m, m, 1);
        coupling_of(f, g, F);
    };

    Scalar residual = std::numeric_limits<Scalar>::infinity();
    int it = 0;
    int scaling_iters = std::min(cfg.max_iters, detail::kScalingIters);
    if (warm_start) {
        coupling_of(f, g, F);
        if (F.allFinite()) {
            residual = residual_of(F);
            scaling_iters = 0;
        } else {
            f.setZero();
            g.setZero();
        }
    }
    while (it < scaling_iters) {
        ++it;
        sweep();
        residual = residual_of(F);
        if (residual <= cfg.tolerance) break;
    }

    // Newton steps on the dual  sum_ij exp(neg_ij + f_i + g_j) - <a,f> - <b,g>.
    // Scaling alone slows to a crawl once sigma is small against the cost spread;
    // the Newton phase finishes those problems and polishes the rest well below the
    // tolerance, which also makes the result independent of the update order.
    const Scalar target = cfg.tolerance * Scalar(detail::kPolishFactor);
    const Eigen::Index N = m + n;
    Matrix<Scalar> Hess(N, N);
    Vector<Scalar> grad(N), step(N), ftry(m), gtry(n);
    Matrix<Scalar> Ftry(m, n);
    auto dual_of = [&](const Matrix<Scalar>& P, const Vector<Scalar>& fv, const Vector<Scalar>& gv) {
        return P.sum() - a.dot(fv) - b.dot(gv);
    };
    while (it < cfg.max_iters && residual > target) {
        ++it;
        const Vector<Scalar> rows = F.rowwise().sum();
        const Vector<Scalar> cols = F.colwise().sum().transpose();
        grad << rows - a, cols - b;
        Hess.setZero();
        Hess.topLeftCorner(m, m).diagonal() = rows;
        Hess.bottomRightCorner(n, n).diagonal() = cols;
        Hess.topRightCorner(m, n) = F;
        Hess.bottomLeftCorner(n, m) = F.transpose();
        // (1, -1) is always in the kernel; a tiny ridge fixes the gauge.
        Hess.diagonal().array() += Scalar(detail::kNewtonRidge);
        step = Hess.ldlt().solve(-grad);
        if (!step.allFinite()) break;
        // Rows or columns whose mass underflowed have a near-zero Hessian diagonal; bound the
        // step in log units so the line search starts from a sensible length.
        const Scalar longest = step.cwiseAbs().maxCoeff();
        if (longest > Scalar(detail::kMaxLogStep)) step *= Scalar(detail::kMaxLogStep) / longest;

        const Scalar phi = dual_of(F, f, g);
        const Scalar slope = grad.dot(step);
        const Scalar gnorm = grad.norm();
        Scalar t = 1;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls, t *= Scalar(0.5)) {
            ftry = f + t * step.head(m);
            gtry = g + t * step.tail(n);
            coupling_of(ftry, gtry, Ftry);
            if (!Ftry.allFinite()) continue;
            Vector<Scalar> gt(N);
            gt << Ftry.rowwise().sum() - a, Ftry.colwise().sum().transpose() - b;
            if (dual_of(Ftry, ftry, gtry) <= phi + Scalar(1e-4) * t * slope ||
                gt.norm() <= (Scalar(1) - Scalar(1e-4) * t) * gnorm) {
                accepted = true;
                break;
            }
        }
        if (!accepted) break;
        if (t == Scalar(1)) {
            // Entries far above their optimum shrink by only a factor e per unit step along
            // the Newton direction; keep doubling while the dual still decreases.
            Scalar best = dual_of(Ftry, ftry, gtry);
            for (int ex = 0; ex < 8; ++ex) {
                const Scalar t2 = t * Scalar(2);
                Vector<Scalar> f2 = f + t2 * step.head(m), g2 = g + t2 * step.tail(n);
                Matrix<Scalar> F2(m, n);
                coupling_of(f2, g2, F2);
                if (!F2.allFinite()) break;
                const Scalar d2 = dual_of(F2, f2, g2);
                if (!(d2 < best)) break;
                best = d2;
                t = t2;
                ftry = std::move(f2);
                gtry = std::move(g2);
            }
        }
        f = ftry;
        g = gtry;
        // Newton crawls where a potential sits far above its optimum (one unit per step on
        // an exponential); an exact scaling sweep removes that before the next step.
        sweep();
        const Scalar next = residual_of(F);
        if (!(next < residual) && residual <= cfg.tolerance) {
            residual = next;
            break;
        }
        residual = next;
    }

    if (scaling_iters == 0 && residual > cfg.tolerance) return sinkhorn(D, src_weights, tgt_weights, cfg);

    TransportPlan<Scalar> plan;
    plan.coupling = F;
    plan.marginal_residual = residual;
    plan.iterations_used = it;
    plan.converged = residual <= cfg.tolerance;
    plan.f = f;
    plan.g = g;
    plan.value = (D.array() * plan.coupling.array()).sum() - sigma * coupling_entropy(plan.coupling);
    return plan;
}

template <typename DerivedD, typename Scalar>
TransportPlan<Scalar> sinkhorn(const Eigen::MatrixBase<DerivedD>& D, const Signature<Scalar>& src,
                               const Signature<Scalar>& tgt, const SinkhornConfig<Scalar>& cfg = {},
                               const TransportPlan<Scalar>* warm = nullptr) {
    return sinkhorn(D, src.weights(), tgt.weights(), cfg, warm);
}

}  // namespace eml
