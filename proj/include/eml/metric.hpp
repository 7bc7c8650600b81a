#pragma once

// Metric state, low-rank surrogate, hinge losses and the closed-form metric solve.

#include "eml/common.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace eml {

/// Symmetric (L L^T + eps I)^(-1/2) by eigendecomposition, eigenvalues floored at eps.
template <typename Derived>
Matrix<typename Derived::Scalar> inv_sqrt_gram(const Eigen::MatrixBase<Derived>& L,
                                               typename Derived::Scalar ridge_eps) {
    using Scalar = typename Derived::Scalar;
    if (!L.allFinite()) throw ValidationError("inv_sqrt_gram: non-finite entries in metric");
    if (!(ridge_eps >= Scalar(0))) throw ValidationError("inv_sqrt_gram: ridge_eps must be >= 0");
    const Eigen::Index k = L.rows();
    Matrix<Scalar> gram = L * L.transpose();
    gram.diagonal().array() += ridge_eps;
    Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(gram);
    Vector<Scalar> ev = es.eigenvalues().cwiseMax(ridge_eps);
    if ((ev.array() <= Scalar(0)).any())
        throw NumericError("inv_sqrt_gram: Gram matrix of a " + shape_string(k, L.cols()) +
                           " metric is singular and ridge_eps is 0");
    const Vector<Scalar> s = ev.array().rsqrt().matrix();
    return es.eigenvectors() * s.asDiagonal() * es.eigenvectors().transpose();
}

/// Nuclear norm via the eigenvectors V of the smaller Gram matrix: sigma_i = ||L^T v_i||
/// (or ||L v_i||), which keeps full accuracy for tiny singular values where sqrt of the
/// Gram eigenvalues would amplify rounding.
template <typename Derived>
typename Derived::Scalar trace_norm(const Eigen::MatrixBase<Derived>& L) {
    using Scalar = typename Derived::Scalar;
    if (!L.allFinite()) throw ValidationError("trace_norm: non-finite entries");
    if (L.size() == 0) return Scalar(0);
    const bool wide = L.rows() <= L.cols();
    const Matrix<Scalar> gram = wide ? Matrix<Scalar>(L * L.transpose()) : Matrix<Scalar>(L.transpose() * L);
    Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(gram);
    const Matrix<Scalar> proj = wide ? Matrix<Scalar>(L.transpose() * es.eigenvectors())
                                     : Matrix<Scalar>(L * es.eigenvectors());
    return proj.colwise().norm().sum();
}

/// Linear map L (k x d) into the embedding, with its cached inverse-sqrt Gram H (k x k).
template <typename Scalar>
class MetricState {
public:
    static constexpr double kDefaultRidge = 1e-8;

    MetricState() = default;

    explicit MetricState(Matrix<Scalar> L, Scalar ridge_eps = Scalar(kDefaultRidge))
        : L_(std::move(L)), ridge_eps_(ridge_eps) {
        if (L_.rows() < 1 || L_.cols() < 1)
            throw ShapeError("MetricState: empty metric " + shape_string(L_.rows(), L_.cols()));
        H_ = inv_sqrt_gram(L_, ridge_eps_);
    }

    /// First k rows of the d x d identity (zero rows past d when k > d).
    static MetricState truncated_identity(Eigen::Index k, Eigen::Index d,
                                          Scalar ridge_eps = Scalar(kDefaultRidge)) {
        Matrix<Scalar> L = Matrix<Scalar>::Zero(k, d);
        for (Eigen::Index i = 0; i < std::min(k, d); ++i) L(i, i) = Scalar(1);
        return MetricState(std::move(L), ridge_eps);
    }

    const Matrix<Scalar>& L() const { return L_; }
    const Matrix<Scalar>& H() const { return H_; }
    Scalar ridge_eps() const { return ridge_eps_; }
    Eigen::Index rank_k() const { return L_.rows(); }
    Eigen::Index dim() const { return L_.cols(); }

private:
    Matrix<Scalar> L_;
    Matrix<Scalar> H_;
    Scalar ridge_eps_ = Scalar(kDefaultRidge);
};

using MetricStateXd = MetricState<double>;

/// Regularizer used in the closed-form updates.
enum class Regularizer { TraceNorm, Frobenius };

struct Hyperparams {
    double gamma = 1e-2;           ///< triplet-loss weight
    double lambda = 1e-4;          ///< low-rank weight
    double rho = 1e-3;             ///< consistency weight
    double sigma = 0.1;            ///< entropic smoothing
    int rank_k = 0;                ///< 0 selects min(d_s, 32)
    int inner_iters = 100;
    double converge_delta = 2.5e-5;

    void validate() const {
        auto nonneg = [](double v, const char* key) {
            if (!std::isfinite(v) || v < 0)
                throw ValidationError(std::string(key) + " must be finite and >= 0");
        };
        nonneg(gamma, "gamma");
        nonneg(lambda, "lambda");
        nonneg(rho, "rho");
        if (!std::isfinite(sigma) || sigma <= 0) throw ValidationError("sigma must be > 0");
        if (rank_k < 0) throw ValidationError("rank_k must be >= 0");
        if (inner_iters < 1) throw ValidationError("inner_iters must be >= 1");
        if (!std::isfinite(converge_delta) || converge_delta <= 0)
            throw ValidationError("converge_delta must be > 0");
    }

    [[nodiscard]] int resolved_rank(Eigen::Index d_surv) const {
        return rank_k > 0 ? rank_k : int(std::min<Eigen::Index>(d_surv, 32));
    }
};

struct HingeResult {
    double loss = 0;
    bool active = false;
};

/// [1 + w_pq - w_pk]_+ and whether the margin is violated.
inline HingeResult hinge_triplet(double w_pq, double w_pk) {
    const double margin = 1.0 + w_pq - w_pk;
    return {std::max(0.0, margin), margin > 0.0};
}

template <typename Scalar>
struct MetricSolve {
    Matrix<Scalar> L;
    Scalar damping = 0;        ///< extra proximal weight added to keep the system positive definite
    Scalar min_curvature = 0;  ///< smallest eigenvalue of the undamped system operator
};

/// Solves  L (I + S) + lambda * H L = rhs  for L (k x d).
///
/// S is symmetric d x d, H symmetric k x k. The operator is diagonalised through the
/// eigenbases of H and I + S, so each row of U^T L solves an independent shifted system.
/// When the smallest eigenvalue of the operator falls below `curvature_floor`, a proximal
/// term delta * (L - prox_center) is added with delta lifting it back to the floor; a floor <= 0
/// disables that and a singular operator raises NumericError.
template <typename Scalar>
MetricSolve<Scalar> solve_metric_system(const Matrix<Scalar>& H, const Matrix<Scalar>& S,
                                        const Matrix<Scalar>& rhs, Scalar lambda,
                                        const Matrix<Scalar>& prox_center, Scalar curvature_floor) {
    const Eigen::Index k = rhs.rows(), d = rhs.cols();
    if (H.rows() != k || H.cols() != k || S.rows() != d || S.cols() != d ||
        prox_center.rows() != k || prox_center.cols() != d)
        throw ShapeError("solve_metric_system: inconsistent shapes (rhs " + shape_string(k, d) +
                         ", H " + shape_string(H.rows(), H.cols()) + ", S " +
                         shape_string(S.rows(), S.cols()) + ")");
    if (!S.allFinite() || !rhs.allFinite() || !H.allFinite())
        throw NumericError("solve_metric_system: non-finite input");

    Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> right(Matrix<Scalar>(Matrix<Scalar>::Identity(d, d) + S));
    Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> left(H);
    const Vector<Scalar>& theta = right.eigenvalues();
    const Vector<Scalar> shift = lambda * left.eigenvalues();

    const Scalar lo = theta.minCoeff() + shift.minCoeff();
    const Scalar hi = theta.maxCoeff() + shift.maxCoeff();
    MetricSolve<Scalar> out;
    out.min_curvature = lo;
    if (curvature_floor > Scalar(0) && lo < curvature_floor) out.damping = curvature_floor - lo;
    Scalar smallest = std::numeric_limits<Scalar>::infinity();
    for (Eigen::Index i = 0; i < k; ++i)
        smallest = std::min(smallest, (theta.array() + shift(i) + out.damping).abs().minCoeff());
    if (smallest <= Scalar(1e-12) * std::max(Scalar(1), std::abs(hi))) {
        std::ostringstream msg;
        msg << "solve_metric_system: singular update system (eigenvalue range [" << lo << ", " << hi
            << "], condition number " << (smallest == 0 ? INFINITY : std::abs(hi) / smallest) << ")";
        throw NumericError(msg.str());
    }

    const Matrix<Scalar>& U = left.eigenvectors();
    const Matrix<Scalar>& V = right.eigenvectors();
    Matrix<Scalar> b = rhs;
    if (out.damping > Scalar(0)) b += out.damping * prox_center;
    Matrix<Scalar> t = U.transpose() * b * V;
    for (Eigen::Index i = 0; i < k; ++i)
        for (Eigen::Index j = 0; j < d; ++j) t(i, j) /= theta(j) + shift(i) + out.damping;
    out.L = U * t * V.transpose();
    return out;
}

/// One passive-aggressive step on a single-sample triplet:
/// argmin_L 1/2 ||L - L_prev||_F^2 + gamma/2 [1 + d_L(x_p,x_q) - d_L(x_p,x_k)]_+
/// solved on the active branch, then shortened if needed so the objective strictly decreases;
/// returns L_prev unchanged when the hinge is inactive.
template <typename Scalar, typename DerivedP, typename DerivedQ, typename DerivedK>
MetricState<Scalar> pa_mahalanobis_update(const MetricState<Scalar>& L_prev,
                                          const Eigen::MatrixBase<DerivedP>& x_p,
                                          const Eigen::MatrixBase<DerivedQ>& x_q,
                                          const Eigen::MatrixBase<DerivedK>& x_k, Scalar gamma,
                                          Scalar curvature_floor = Scalar(0.25)) {
    const Eigen::Index d = L_prev.dim();
    if (x_p.size() != d || x_q.size() != d || x_k.size() != d)
        throw ShapeError("pa_mahalanobis_update: metric has " + std::to_string(d) +
                         " columns but samples have sizes " + std::to_string(x_p.size()) + ", " +
                         std::to_string(x_q.size()) + ", " + std::to_string(x_k.size()));
    if (!(gamma >= Scalar(0))) throw ValidationError("pa_mahalanobis_update: gamma must be >= 0");
    const Vector<Scalar> u = (x_p - x_q).template cast<Scalar>();
    const Vector<Scalar> v = (x_p - x_k).template cast<Scalar>();
    const Matrix<Scalar>& L = L_prev.L();
    const auto h = hinge_triplet(double((L * u).squaredNorm()), double((L * v).squaredNorm()));
    if (gamma == Scalar(0) || !h.active) return L_prev;

    const Matrix<Scalar> S = gamma * (u * u.transpose() - v * v.transpose());
    const Eigen::Index k = L.rows();
    auto sol = solve_metric_system<Scalar>(Matrix<Scalar>::Zero(k, k), S, L, Scalar(0), L,
                                           curvature_floor);
    // The active-branch minimiser can overshoot past the hinge; pull it back along the
    // segment until the true objective decreases (it does for small steps since the
    // hinge is strictly active at L_prev).
    auto objective = [&](const Matrix<Scalar>& M) {
        const auto hm = hinge_triplet(double((M * u).squaredNorm()), double((M * v).squaredNorm()));
        return double(Scalar(0.5) * (M - L).squaredNorm()) + 0.5 * double(gamma) * hm.loss;
    };
    const double start = objective(L);
    const Matrix<Scalar> dir = sol.L - L;
    Matrix<Scalar> next = sol.L;
    for (int halvings = 0; halvings < 60 && !(objective(next) < start); ++halvings)
        next = L + Scalar(std::ldexp(1.0, -(halvings + 1))) * dir;
    if (!(objective(next) < start)) return L_prev;
    return MetricState<Scalar>(std::move(next), L_prev.ridge_eps());
}

}  // namespace eml
