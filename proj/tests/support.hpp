#pragma once

// Independent oracles shared by the unit tests and the acceptance binary.

#include "eml/istage.hpp"
#include "eml/random.hpp"
#include "eml/tstage.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>

#include <cmath>
#include <functional>
#include <limits>

namespace eml::testing {

inline MatrixXd random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
    MatrixXd m(r, c);
    for (Eigen::Index j = 0; j < c; ++j)
        for (Eigen::Index i = 0; i < r; ++i) m(i, j) = scale * standard_normal(rng);
    return m;
}

inline VectorXd random_weights(Rng& rng, Eigen::Index n) {
    VectorXd w(n);
    for (Eigen::Index i = 0; i < n; ++i) w(i) = 0.05 + uniform_unit(rng);
    return w / w.sum();
}

/// d(i,j) = sum_r (sum_c La(r,c) X(i,c) - sum_c Lb(r,c) Y(j,c))^2 by scalar loops.
inline MatrixXd brute_cost(const MatrixXd& La, const MatrixXd& X, const MatrixXd& Lb, const MatrixXd& Y) {
    MatrixXd D(X.rows(), Y.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i)
        for (Eigen::Index j = 0; j < Y.rows(); ++j) {
            double s = 0;
            for (Eigen::Index r = 0; r < La.rows(); ++r) {
                double e = 0;
                for (Eigen::Index c = 0; c < X.cols(); ++c) e += La(r, c) * X(i, c);
                for (Eigen::Index c = 0; c < Y.cols(); ++c) e -= Lb(r, c) * Y(j, c);
                s += e * e;
            }
            D(i, j) = s;
        }
    return D;
}

/// Smoothed transport value of a 2x2 problem by scanning its single free
/// coordinate t = F(0,0) on a grid of the given step.
inline double grid_oracle_2x2(const MatrixXd& D, const VectorXd& a, const VectorXd& b, double sigma,
                              double step = 1e-6) {
    const double lo = std::max(0.0, b(0) - a(1)), hi = std::min(a(0), b(0));
    auto xlogx = [](double x) { return x > 0 ? x * std::log(x) : 0.0; };
    double best = std::numeric_limits<double>::infinity();
    for (double t = lo + 0.5 * step; t < hi; t += step) {
        const double f[4] = {t, a(0) - t, b(0) - t, a(1) - b(0) + t};
        double v = D(0, 0) * f[0] + D(0, 1) * f[1] + D(1, 0) * f[2] + D(1, 1) * f[3];
        for (double x : f) v += sigma * xlogx(x);
        best = std::min(best, v);
    }
    return best;
}

inline double svd_trace_norm(const MatrixXd& L) {
    return Eigen::JacobiSVD<MatrixXd>(L).singularValues().sum();
}

/// Solves g(L) = 0 for an affine matrix map g by probing it on the unit basis
/// and solving the vectorised (Kronecker-form) system densely.
inline MatrixXd solve_affine_stationarity(const std::function<MatrixXd(const MatrixXd&)>& g,
                                          Eigen::Index k, Eigen::Index d) {
    const Eigen::Index n = k * d;
    const MatrixXd g0 = g(MatrixXd::Zero(k, d));
    MatrixXd M(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        MatrixXd E = MatrixXd::Zero(k, d);
        E(j % k, j / k) = 1.0;
        M.col(j) = (g(E) - g0).reshaped();
    }
    const VectorXd x = M.fullPivLu().solve(-g0.reshaped().eval());
    return x.reshaped(k, d);
}

/// d/dL of sum_ij F_ij ||L x_i - B y_j||^2 (B y_j fixed), written pair by pair.
inline MatrixXd pair_gradient_left(const MatrixXd& L, const MatrixXd& X, const MatrixXd& BY,
                                   const MatrixXd& F) {
    MatrixXd G = MatrixXd::Zero(L.rows(), L.cols());
    for (Eigen::Index i = 0; i < X.rows(); ++i)
        for (Eigen::Index j = 0; j < BY.rows(); ++j) {
            const VectorXd e = L * X.row(i).transpose() - BY.row(j).transpose();
            G += 2.0 * F(i, j) * e * X.row(i);
        }
    return G;
}

/// d/dL of sum_ij F_ij ||A x_i - L y_j||^2 (A x_i fixed).
inline MatrixXd pair_gradient_right(const MatrixXd& L, const MatrixXd& AX, const MatrixXd& Y,
                                    const MatrixXd& F) {
    MatrixXd G = MatrixXd::Zero(L.rows(), L.cols());
    for (Eigen::Index i = 0; i < AX.rows(); ++i)
        for (Eigen::Index j = 0; j < Y.rows(); ++j) {
            const VectorXd e = AX.row(i).transpose() - L * Y.row(j).transpose();
            G -= 2.0 * F(i, j) * e * Y.row(j);
        }
    return G;
}

/// d/dL of sum_ij F_ij ||L (x_i - y_j)||^2.
inline MatrixXd same_space_gradient(const MatrixXd& L, const MatrixXd& X, const MatrixXd& Y,
                                    const MatrixXd& F) {
    MatrixXd G = MatrixXd::Zero(L.rows(), L.cols());
    for (Eigen::Index i = 0; i < X.rows(); ++i)
        for (Eigen::Index j = 0; j < Y.rows(); ++j) {
            const VectorXd u = (X.row(i) - Y.row(j)).transpose();
            G += 2.0 * F(i, j) * (L * u) * u.transpose();
        }
    return G;
}

/// Gradient of the frozen T-stage model with respect to L_all (L_surv held at `Ls`),
/// plus a proximal term delta/2 ||L - center||^2.
inline MatrixXd tstage_gradient_all(const MatrixXd& La, const MatrixXd& Ls, const TStageState& at,
                                    const std::vector<TripletPair>& pairs, const TStageEvaluation& ev,
                                    const Hyperparams& hp, const MatrixXd& W, double delta,
                                    const MatrixXd& center) {
    MatrixXd G = (La - at.anchor_all) + hp.lambda * W * La + delta * (La - center);
    const double w = 1.0 / double(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto& a = pairs[i].all;
        const auto& s = pairs[i].surv;
        const auto& pl = ev.plans[i];
        const auto& act = ev.activity[i];
        if (act.all.active)
            G += 0.5 * hp.gamma * w *
                 (same_space_gradient(La, a.p.points(), a.q.points(), pl.all_pq.coupling) -
                  same_space_gradient(La, a.p.points(), a.k.points(), pl.all_pk.coupling));
        if (act.cons_a.active) {
            const MatrixXd LQ = s.q.points() * Ls.transpose(), LK = s.k.points() * Ls.transpose();
            G += 0.5 * hp.rho * w *
                 (pair_gradient_left(La, a.p.points(), LQ, pl.aq_s.coupling) -
                  pair_gradient_left(La, a.p.points(), LK, pl.ak_s.coupling));
        }
        if (act.cons_s.active) {
            const MatrixXd LP = s.p.points() * Ls.transpose();
            G += 0.5 * hp.rho * w *
                 (pair_gradient_right(La, LP, a.q.points(), pl.sq_a.coupling) -
                  pair_gradient_right(La, LP, a.k.points(), pl.sk_a.coupling));
        }
    }
    return G;
}

/// Gradient of the frozen T-stage model with respect to L_surv (L_all held at `La`).
inline MatrixXd tstage_gradient_surv(const MatrixXd& La, const MatrixXd& Ls, const TStageState& at,
                                     const std::vector<TripletPair>& pairs, const TStageEvaluation& ev,
                                     const Hyperparams& hp, const MatrixXd& W, double delta,
                                     const MatrixXd& center) {
    MatrixXd G = (Ls - at.anchor_surv) + hp.lambda * W * Ls + delta * (Ls - center);
    const double w = 1.0 / double(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto& a = pairs[i].all;
        const auto& s = pairs[i].surv;
        const auto& pl = ev.plans[i];
        const auto& act = ev.activity[i];
        if (act.surv.active)
            G += 0.5 * hp.gamma * w *
                 (same_space_gradient(Ls, s.p.points(), s.q.points(), pl.surv_pq.coupling) -
                  same_space_gradient(Ls, s.p.points(), s.k.points(), pl.surv_pk.coupling));
        if (act.cons_a.active) {
            const MatrixXd AP = a.p.points() * La.transpose();
            G += 0.5 * hp.rho * w *
                 (pair_gradient_right(Ls, AP, s.q.points(), pl.aq_s.coupling) -
                  pair_gradient_right(Ls, AP, s.k.points(), pl.ak_s.coupling));
        }
        if (act.cons_s.active) {
            const MatrixXd AQ = a.q.points() * La.transpose(), AK = a.k.points() * La.transpose();
            G += 0.5 * hp.rho * w *
                 (pair_gradient_left(Ls, s.p.points(), AQ, pl.sq_a.coupling) -
                  pair_gradient_left(Ls, s.p.points(), AK, pl.sk_a.coupling));
        }
    }
    return G;
}

inline MatrixXd istage_gradient(const MatrixXd& Lz, const IStageState& at,
                                const std::vector<SignatureTriplet>& triplets, const IStageEvaluation& ev,
                                const Hyperparams& hp, const MatrixXd& W, double delta, const MatrixXd& center) {
    MatrixXd G = (Lz - at.anchor) + hp.lambda * W * Lz + delta * (Lz - center);
    const double w = 1.0 / double(triplets.size());
    for (std::size_t i = 0; i < triplets.size(); ++i) {
        if (!ev.activity[i].active) continue;
        const auto& t = triplets[i];
        G += 0.5 * hp.gamma * w *
             (same_space_gradient(Lz, t.p.points(), t.q.points(), ev.pq[i].coupling) -
              same_space_gradient(Lz, t.p.points(), t.k.points(), ev.pk[i].coupling));
    }
    return G;
}

/// Central finite-difference gradient of a scalar function of a matrix.
inline MatrixXd fd_gradient(const std::function<double(const MatrixXd&)>& f, const MatrixXd& L,
                            double h = 1e-5) {
    MatrixXd G(L.rows(), L.cols());
    for (Eigen::Index j = 0; j < L.cols(); ++j)
        for (Eigen::Index i = 0; i < L.rows(); ++i) {
            MatrixXd a = L, b = L;
            a(i, j) += h;
            b(i, j) -= h;
            G(i, j) = (f(a) - f(b)) / (2 * h);
        }
    return G;
}

/// Small random transforming batch: `classes` classes with `per_class` rows each.
inline StreamBatch random_transform_batch(Rng& rng, int classes, int per_class, Eigen::Index dv,
                                          Eigen::Index ds, double spread = 1.0) {
    StreamBatch b;
    b.layout = FeatureLayout::transforming(dv, ds);
    b.X = random_matrix(rng, classes * per_class, dv + ds);
    for (int c = 0; c < classes; ++c)
        for (int i = 0; i < per_class; ++i) {
            b.y.push_back(c);
            b.X.row(c * per_class + i).array() += spread * c;
        }
    return b;
}

}  // namespace eml::testing
