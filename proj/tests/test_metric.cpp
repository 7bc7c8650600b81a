#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "support.hpp"

using namespace eml;
using namespace eml::testing;

TEST_CASE("inverse square root gram") {
    CHECK((inv_sqrt_gram(MatrixXd::Identity(3, 3), 0.0) - MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(inv_sqrt_gram(MatrixXd::Constant(1, 1, 2.0), 0.0)(0, 0) == doctest::Approx(0.5));

    Rng rng(1);
    const MatrixXd L = random_matrix(rng, 2, 5);
    const MatrixXd H = inv_sqrt_gram(L, 1e-10);
    const MatrixXd G = L * L.transpose() + 1e-10 * MatrixXd::Identity(2, 2);
    CHECK((H * G * H - MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((H - H.transpose()).cwiseAbs().maxCoeff() < 1e-14);

    MatrixXd bad = L;
    bad(0, 0) = std::nan("");
    CHECK_THROWS_AS(inv_sqrt_gram(bad, 1e-8), ValidationError);
    CHECK_THROWS_AS(inv_sqrt_gram(MatrixXd::Zero(2, 3), 0.0), NumericError);
    CHECK(inv_sqrt_gram(MatrixXd::Zero(2, 3), 1e-8).allFinite());
}

TEST_CASE("metric state caches H") {
    Rng rng(2);
    for (int rep = 0; rep < 10; ++rep) {
        MetricStateXd m(random_matrix(rng, 3, 6));
        CHECK((inv_sqrt_gram(m.L(), m.ridge_eps()) - m.H()).cwiseAbs().maxCoeff() < 1e-10);
    }
    const auto id = MetricStateXd::truncated_identity(2, 4);
    CHECK(id.L() == (MatrixXd(2, 4) << 1, 0, 0, 0, 0, 1, 0, 0).finished());
    CHECK(id.rank_k() == 2);
    CHECK(id.dim() == 4);
}

TEST_CASE("trace norm") {
    MatrixXd D = MatrixXd::Zero(2, 2);
    D.diagonal() << 3, 4;
    CHECK(trace_norm(D) == doctest::Approx(7.0));
    CHECK(trace_norm(MatrixXd::Zero(2, 5)) == 0.0);
    Rng rng(3);
    for (int rep = 0; rep < 20; ++rep) {
        const MatrixXd L = random_matrix(rng, 3, 4);
        CHECK(std::abs(trace_norm(L) - svd_trace_norm(L)) < 1e-8);
        CHECK(std::abs(trace_norm(L) - trace_norm(MatrixXd(L.transpose()))) < 1e-10);
    }
    // rank-deficient: zero singular values must not pick up sqrt(rounding)
    for (int rep = 0; rep < 20; ++rep) {
        const MatrixXd L = random_matrix(rng, 12, 2) * random_matrix(rng, 2, 30);
        CHECK(std::abs(trace_norm(L) - svd_trace_norm(L)) < 1e-10);
        CHECK(std::abs(trace_norm(MatrixXd(L.transpose())) - svd_trace_norm(L)) < 1e-10);
    }
}

TEST_CASE("hinge") {
    auto h = hinge_triplet(0, 2);
    CHECK(h.loss == 0.0);
    CHECK_FALSE(h.active);
    h = hinge_triplet(1, 1);
    CHECK(h.loss == 1.0);
    CHECK(h.active);
    h = hinge_triplet(0.3, 0.9);
    CHECK(h.loss == doctest::Approx(0.4));
    CHECK(h.active);
    Rng rng(4);
    for (int rep = 0; rep < 200; ++rep) {
        const double a = 3 * standard_normal(rng), b = 3 * standard_normal(rng), dlt = standard_normal(rng);
        CHECK(std::abs(hinge_triplet(a + dlt, b).loss - hinge_triplet(a, b).loss) <= std::abs(dlt) + 1e-15);
    }
}

TEST_CASE("hyperparameter validation") {
    Hyperparams hp;
    CHECK_NOTHROW(hp.validate());
    hp.gamma = -1;
    CHECK_THROWS_AS(hp.validate(), ValidationError);
    hp = {};
    hp.converge_delta = 0;
    CHECK_THROWS_AS(hp.validate(), ValidationError);
    hp = {};
    CHECK(hp.resolved_rank(20) == 20);
    CHECK(hp.resolved_rank(100) == 32);
}

TEST_CASE("closed-form system solve") {
    // k = 1, L = [1], lambda = 0.5, no loss: scalar shrinkage 1 / (1 + 0.5)
    MetricStateXd m(MatrixXd::Ones(1, 1));
    const auto sol = solve_metric_system<double>(m.H(), MatrixXd::Zero(1, 1), m.L(), 0.5, m.L(), 0.25);
    CHECK(sol.L(0, 0) == doctest::Approx(2.0 / 3.0));

    Rng rng(5);
    for (int rep = 0; rep < 20; ++rep) {
        const MatrixXd A = random_matrix(rng, 3, 3);
        const MatrixXd H = A * A.transpose();
        const MatrixXd B = random_matrix(rng, 4, 4);
        const MatrixXd S = 0.1 * (B + B.transpose());
        const MatrixXd R = random_matrix(rng, 3, 4);
        const auto s = solve_metric_system<double>(H, S, R, 0.3, R, 0.0);
        const MatrixXd res = s.L * (MatrixXd::Identity(4, 4) + S) + 0.3 * H * s.L - R;
        CHECK(res.cwiseAbs().maxCoeff() < 1e-10);
    }
    // singular operator with the safeguard disabled
    const MatrixXd S = -MatrixXd::Identity(2, 2);
    CHECK_THROWS_AS(solve_metric_system<double>(MatrixXd::Zero(1, 1), S, MatrixXd::Ones(1, 2), 0.0,
                                                MatrixXd::Ones(1, 2), 0.0),
                    NumericError);
    // the safeguard lifts the operator to the floor
    const auto damped = solve_metric_system<double>(MatrixXd::Zero(1, 1), S, MatrixXd::Ones(1, 2), 0.0,
                                                    MatrixXd::Ones(1, 2), 0.25);
    CHECK(damped.damping == doctest::Approx(0.25));
    CHECK(damped.L.allFinite());
    CHECK_THROWS_AS(solve_metric_system<double>(MatrixXd::Zero(2, 2), S, MatrixXd::Ones(1, 2), 0.0,
                                                MatrixXd::Ones(1, 2), 0.0),
                    ShapeError);
}

TEST_CASE("passive-aggressive update") {
    const MetricStateXd L0(MatrixXd::Identity(2, 3));
    VectorXd p(3), q(3), k(3);
    p << 0, 0, 0;
    q = p;
    k << 5, 5, 0;
    CHECK(pa_mahalanobis_update(L0, p, q, k, 0.5).L() == L0.L());

    Rng rng(6);
    auto objective = [](const MatrixXd& L, const MatrixXd& Lp, const VectorXd& a, const VectorXd& b,
                        const VectorXd& c, double g) {
        return 0.5 * (L - Lp).squaredNorm() +
               0.5 * g * hinge_triplet((L * (a - b)).squaredNorm(), (L * (a - c)).squaredNorm()).loss;
    };
    int tested = 0;
    for (int rep = 0; rep < 50; ++rep) {
        const MetricStateXd Lp(random_matrix(rng, 2, 3));
        const VectorXd a = random_matrix(rng, 3, 1), b = random_matrix(rng, 3, 1), c = random_matrix(rng, 3, 1);
        CHECK(pa_mahalanobis_update(Lp, a, b, c, 0.0).L() == Lp.L());
        const auto h = hinge_triplet((Lp.L() * (a - b)).squaredNorm(), (Lp.L() * (a - c)).squaredNorm());
        const auto next = pa_mahalanobis_update(Lp, a, b, c, 0.3);
        if (!h.active) {
            CHECK(next.L() == Lp.L());
            continue;
        }
        ++tested;
        CHECK(objective(next.L(), Lp.L(), a, b, c, 0.3) < objective(Lp.L(), Lp.L(), a, b, c, 0.3));
        CHECK((inv_sqrt_gram(next.L(), next.ridge_eps()) - next.H()).cwiseAbs().maxCoeff() < 1e-10);
    }
    CHECK(tested > 5);
    CHECK_THROWS_AS(pa_mahalanobis_update(L0, VectorXd::Zero(2), q, k, 0.1), ShapeError);
}
