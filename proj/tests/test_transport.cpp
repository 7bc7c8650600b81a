#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "support.hpp"

using namespace eml;
using namespace eml::testing;

TEST_CASE("signature validation") {
    CHECK_NOTHROW(SignatureXd::uniform(MatrixXd::Ones(3, 2)));
    CHECK_THROWS_AS(SignatureXd(MatrixXd::Ones(0, 2), VectorXd(0)), ValidationError);
    CHECK_THROWS_AS(SignatureXd(MatrixXd::Ones(2, 2), VectorXd::Constant(2, 0.4)), ValidationError);
    CHECK_THROWS_AS(SignatureXd(MatrixXd::Ones(2, 2), (VectorXd(2) << 1.0, 0.0).finished()), ValidationError);
    CHECK_THROWS_AS(SignatureXd(MatrixXd::Ones(2, 2), VectorXd::Constant(3, 1.0 / 3)), ShapeError);
}

TEST_CASE("ground cost") {
    MatrixXd I = MatrixXd::Identity(2, 2);
    MatrixXd X = MatrixXd::Zero(1, 2), Y(1, 2);
    Y << 3, 4;
    CHECK(ground_cost(I, X, X)(0, 0) == 0.0);
    CHECK(ground_cost(I, X, Y)(0, 0) == doctest::Approx(25.0));

    Rng rng(7);
    for (int rep = 0; rep < 20; ++rep) {
        const MatrixXd L = random_matrix(rng, 2, 3), A = random_matrix(rng, 4, 3), B = random_matrix(rng, 5, 3);
        const MatrixXd D = ground_cost(L, A, B);
        CHECK((D - brute_cost(L, A, L, B)).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((D.transpose() - ground_cost(L, B, A)).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(D.minCoeff() >= 0.0);
    }
    CHECK_THROWS_AS(ground_cost(MatrixXd::Identity(2, 2), MatrixXd::Ones(1, 3), MatrixXd::Ones(1, 3)),
                    ShapeError);
    try {
        ground_cost(MatrixXd::Identity(2, 2), MatrixXd::Ones(1, 3), MatrixXd::Ones(1, 3));
    } catch (const ShapeError& e) {
        CHECK(std::string(e.what()).find('3') != std::string::npos);
        CHECK(std::string(e.what()).find('2') != std::string::npos);
    }
}

TEST_CASE("cross ground cost") {
    Rng rng(11);
    const MatrixXd La = random_matrix(rng, 2, 3), Ls = random_matrix(rng, 2, 2);
    const MatrixXd X = random_matrix(rng, 1, 3), Y = random_matrix(rng, 1, 2);
    CHECK(cross_ground_cost(La, X, Ls, Y)(0, 0) == doctest::Approx(brute_cost(La, X, Ls, Y)(0, 0)).epsilon(1e-12));
    const MatrixXd A = random_matrix(rng, 3, 3), B = random_matrix(rng, 4, 3);
    CHECK((cross_ground_cost(La, A, La, B) - ground_cost(La, A, B)).cwiseAbs().maxCoeff() < 1e-12);

    // both sides land on the same embedding
    MatrixXd Lx = MatrixXd::Identity(2, 3), Ly = MatrixXd::Identity(2, 2);
    MatrixXd P(2, 3), Q(2, 2);
    P << 1, 2, 9, 1, 2, -4;
    Q << 1, 2, 1, 2;
    CHECK(cross_ground_cost(Lx, P, Ly, Q).cwiseAbs().maxCoeff() == 0.0);
    CHECK_THROWS_AS(cross_ground_cost(MatrixXd::Identity(3, 3), P, Ly, Q), ShapeError);
}

TEST_CASE("sinkhorn closed cases") {
    SinkhornConfig<double> cfg;
    auto one = sinkhorn(MatrixXd::Constant(1, 1, 2.5), VectorXd::Ones(1), VectorXd::Ones(1), cfg);
    CHECK(one.coupling(0, 0) == doctest::Approx(1.0));
    CHECK(one.value == doctest::Approx(2.5));

    const VectorXd u = VectorXd::Constant(2, 0.5);
    auto zero = sinkhorn(MatrixXd::Zero(2, 2), u, u, cfg);
    CHECK((zero.coupling.array() - 0.25).abs().maxCoeff() < 1e-9);
    CHECK(zero.value == doctest::Approx(0.1 * std::log(0.25)).epsilon(1e-9));
    CHECK(zero.converged);

    MatrixXd D(2, 2);
    D << 0, 1, 1, 0;
    auto p = sinkhorn(D, u, u, cfg);
    CHECK(std::abs(p.value - grid_oracle_2x2(D, u, u, 0.1)) < 1e-4);
}

TEST_CASE("sinkhorn validation and non-convergence flag") {
    SinkhornConfig<double> bad;
    bad.sigma = 0;
    const VectorXd u = VectorXd::Constant(2, 0.5);
    CHECK_THROWS_AS(sinkhorn(MatrixXd::Zero(2, 2), u, u, bad), ValidationError);
    CHECK_THROWS_AS(sinkhorn(MatrixXd::Zero(2, 2), (VectorXd(2) << 1.0, 0.0).finished(), u,
                             SinkhornConfig<double>{}),
                    ValidationError);

    SinkhornConfig<double> tight;
    tight.sigma = 0.01;
    tight.max_iters = 1;
    tight.tolerance = 1e-14;
    Rng rng(3);
    const MatrixXd D = random_matrix(rng, 4, 4).cwiseAbs();
    const VectorXd a = random_weights(rng, 4), b = random_weights(rng, 4);
    TransportPlan<double> plan;
    CHECK_NOTHROW(plan = sinkhorn(D, a, b, tight));
    CHECK_FALSE(plan.converged);
    CHECK(plan.iterations_used == 1);
}

TEST_CASE("sinkhorn properties") {
    Rng rng(5);
    SinkhornConfig<double> cfg;
    for (int rep = 0; rep < 50; ++rep) {
        const Eigen::Index m = 1 + Eigen::Index(uniform_index(rng, 8)), n = 1 + Eigen::Index(uniform_index(rng, 8));
        const MatrixXd D = random_matrix(rng, m, n).cwiseAbs() * 3;
        const VectorXd a = random_weights(rng, m), b = random_weights(rng, n);
        const auto p = sinkhorn(D, a, b, cfg);
        REQUIRE(p.converged);
        CHECK(p.coupling.minCoeff() >= 0.0);
        CHECK((p.coupling.rowwise().sum() - a).cwiseAbs().maxCoeff() <= 1e-6);
        CHECK((p.coupling.colwise().sum().transpose() - b).cwiseAbs().maxCoeff() <= 1e-6);
        const auto q = sinkhorn(MatrixXd(D.transpose()), b, a, cfg);
        CHECK((q.coupling.transpose() - p.coupling).cwiseAbs().maxCoeff() < 1e-8);
        CHECK(std::abs(q.value - p.value) < 1e-8);
    }

    // entropy grows with sigma on a fixed 3x3 instance
    MatrixXd D(3, 3);
    D << 0, 1, 4, 1, 0, 1, 4, 1, 0;
    const VectorXd a = (VectorXd(3) << 0.2, 0.5, 0.3).finished(), b = (VectorXd(3) << 0.4, 0.4, 0.2).finished();
    double last = -1;
    for (double s : {0.05, 0.1, 0.3, 1.0, 3.0, 10.0}) {
        SinkhornConfig<double> c;
        c.sigma = s;
        const double h = coupling_entropy(sinkhorn(D, a, b, c).coupling);
        CHECK(h >= last - 1e-9);
        last = h;
    }
}

TEST_CASE("sinkhorn matches the 2x2 grid oracle") {
    Rng rng(17);
    for (int rep = 0; rep < 20; ++rep) {
        const MatrixXd D = random_matrix(rng, 2, 2).cwiseAbs() * 2;
        const VectorXd a = random_weights(rng, 2), b = random_weights(rng, 2);
        SinkhornConfig<double> cfg;
        cfg.sigma = rep % 2 ? 0.05 : 0.5;
        const auto p = sinkhorn(D, a, b, cfg);
        CHECK(std::abs(p.value - grid_oracle_2x2(D, a, b, cfg.sigma)) < 1e-4);
    }
}

TEST_CASE("small sigma stays finite") {
    SinkhornConfig<double> cfg;
    cfg.sigma = 1e-3;
    MatrixXd D(3, 3);
    D << 0, 50, 200, 50, 0, 50, 200, 50, 0;
    const VectorXd u = VectorXd::Constant(3, 1.0 / 3);
    const auto p = sinkhorn(D, u, u, cfg);
    CHECK(p.coupling.allFinite());
    CHECK(std::isfinite(p.value));
    CHECK(p.value == doctest::Approx(cfg.sigma * std::log(1.0 / 3)).epsilon(1e-6));
}
