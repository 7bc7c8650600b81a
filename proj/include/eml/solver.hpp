#pragma once

// Shared pieces of the alternating metric solvers.

#include "eml/metric.hpp"
#include "eml/transport.hpp"
#include "eml/triplets.hpp"

namespace eml {

/// Signature distance used inside every triplet loss.
enum class SignatureDistance {
    Wasserstein,  ///< smoothed optimal transport between the full signatures
    Barycenter,   ///< squared Mahalanobis distance between signature means
};

/// Step halvings tried before an alternating update is declared a fixed point.
inline constexpr int kMaxHalvings = 30;

struct SolverOptions {
    int sinkhorn_max_iters = 1000;
    double sinkhorn_tolerance = 1e-6;
    Regularizer regularizer = Regularizer::TraceNorm;
    SignatureDistance distance = SignatureDistance::Wasserstein;
    double ridge_eps = 1e-8;
    /// Minimum eigenvalue of the closed-form update system; below it a proximal
    /// term around the current iterate is added. <= 0 disables the safeguard.
    double curvature_floor = 0.25;

    [[nodiscard]] SinkhornConfig<double> sinkhorn(double sigma) const {
        return {sigma, sinkhorn_max_iters, sinkhorn_tolerance};
    }
    [[nodiscard]] SignatureTriplet prepare(const SignatureTriplet& t) const {
        return distance == SignatureDistance::Barycenter ? barycentric_triplet(t) : t;
    }
};

/// Sinkhorn on a ground cost computed from the current iterate: overflow there is a
/// numerical failure of the solver rather than invalid input.
template <class Sig>
TransportPlan<double> iterate_plan(const MatrixXd& D, const Sig& src, const Sig& tgt, const SinkhornConfig<double>& cfg,
                                   const TransportPlan<double>* warm) {
    if (!D.allFinite()) throw NumericError("ground cost overflowed under the current metric");
    return sinkhorn(D, src, tgt, cfg, warm);
}

/// Second moments of a coupling F between point sets X (m x dx) and Y (n x dy):
/// xx = X^T diag(F 1) X, yy = Y^T diag(F^T 1) Y, xy = X^T F Y.
/// With a common metric, <D, F> = tr(L (xx + yy - xy - xy^T) L^T).
struct PlanMoments {
    MatrixXd xx;
    MatrixXd yy;
    MatrixXd xy;

    [[nodiscard]] MatrixXd scatter() const { return xx + yy - xy - xy.transpose(); }
};

inline PlanMoments plan_moments(const MatrixXd& X, const MatrixXd& Y, const MatrixXd& F) {
    const VectorXd r = F.rowwise().sum();
    const VectorXd c = F.colwise().sum().transpose();
    return {X.transpose() * r.asDiagonal() * X, Y.transpose() * c.asDiagonal() * Y,
            X.transpose() * F * Y};
}

/// Regulariser value: trace norm, or 1/2 ||L||_F^2 in the Frobenius variant.
inline double regularizer_value(const MatrixXd& L, Regularizer reg) {
    return reg == Regularizer::TraceNorm ? trace_norm(L) : 0.5 * L.squaredNorm();
}

/// Left weight of the regulariser in the closed-form update.
inline MatrixXd regularizer_weight(const MetricStateXd& m, Regularizer reg) {
    return reg == Regularizer::TraceNorm ? m.H() : MatrixXd::Identity(m.rank_k(), m.rank_k());
}

}  // namespace eml
