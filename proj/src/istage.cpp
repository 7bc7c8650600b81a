#include "eml/istage.hpp"

#include "eml/random.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace eml {

namespace {

constexpr std::uint64_t kInheritSeedTag = 0x1157a9e;

MatrixXd frozen_curvature(const std::vector<SignatureTriplet>& triplets, const IStageEvaluation& eval,
                          const Hyperparams& hp, Eigen::Index width) {
    MatrixXd S = MatrixXd::Zero(width, width);
    const double w = hp.gamma / double(triplets.size());
    for (std::size_t i = 0; i < triplets.size(); ++i) {
        if (!eval.activity[i].active) continue;
        const auto& t = triplets[i];
        S += w * (plan_moments(t.p.points(), t.q.points(), eval.pq[i].coupling).scatter() -
                  plan_moments(t.p.points(), t.k.points(), eval.pk[i].coupling).scatter());
    }
    return S;
}

void check_triplets(const IStageState& state, const std::vector<SignatureTriplet>& triplets) {
    if (triplets.empty()) throw ValidationError("istage: no triplets");
    for (const auto& t : triplets)
        if (t.p.dim() != state.L_z.dim())
            throw ShapeError("istage: triplet dimension " + std::to_string(t.p.dim()) +
                             " does not match metric width " + std::to_string(state.L_z.dim()));
}

}  // namespace

StackedBatch stack_features(const MatrixXd& X_surv, const MatrixXd& X_new, const MetricStateXd& L_surv,
                            std::vector<int> labels) {
    if (X_surv.cols() != L_surv.dim())
        throw ShapeError("stack_features: survived block has " + std::to_string(X_surv.cols()) +
                         " columns but the metric expects " + std::to_string(L_surv.dim()));
    if (X_surv.rows() != X_new.rows())
        throw ShapeError("stack_features: survived block has " + std::to_string(X_surv.rows()) +
                         " rows, augmented block " + std::to_string(X_new.rows()));
    if (!labels.empty() && static_cast<Eigen::Index>(labels.size()) != X_surv.rows())
        throw ShapeError("stack_features: label count does not match row count");
    StackedBatch out;
    out.Z.resize(X_surv.rows(), L_surv.rank_k() + X_new.cols());
    out.Z.leftCols(L_surv.rank_k()) = X_surv * L_surv.L().transpose();
    out.Z.rightCols(X_new.cols()) = X_new;
    out.labels = std::move(labels);
    out.embedded = L_surv.rank_k();
    return out;
}

StackedBatch stack_batch(const StreamBatch& batch, const MetricStateXd& L_surv) {
    batch.validate();
    if (!batch.layout.is_inheriting())
        throw ValidationError("stack_batch: batch " + std::to_string(batch.batch_index) +
                              " still carries vanished features");
    return stack_features(batch.X.middleCols(batch.layout.survived.begin, batch.layout.survived.size),
                          batch.X.middleCols(batch.layout.augmented.begin, batch.layout.augmented.size),
                          L_surv, batch.y);
}

IStageState IStageState::initial(Eigen::Index k, Eigen::Index width, double ridge_eps) {
    IStageState s;
    s.L_z = MetricStateXd::truncated_identity(k, width, ridge_eps);
    s.anchor = s.L_z.L();
    return s;
}

IStageEvaluation evaluate_istage(const IStageState& state, const std::vector<SignatureTriplet>& triplets,
                                 const Hyperparams& hp, const SolverOptions& opts, const IStageEvaluation* warm) {
    check_triplets(state, triplets);
    const auto sk = opts.sinkhorn(hp.sigma);
    const MatrixXd& L = state.L_z.L();
    IStageEvaluation ev;
    if (warm && warm->pq.size() != triplets.size()) warm = nullptr;
    double hinge_sum = 0;
    for (std::size_t i = 0; i < triplets.size(); ++i) {
        const auto& t = triplets[i];
        ev.pq.push_back(iterate_plan(ground_cost(L, t.p, t.q), t.p, t.q, sk, warm ? &warm->pq[i] : nullptr));
        ev.pk.push_back(iterate_plan(ground_cost(L, t.p, t.k), t.p, t.k, sk, warm ? &warm->pk[i] : nullptr));
        ev.activity.push_back(hinge_triplet(ev.pq.back().value, ev.pk.back().value));
        hinge_sum += 0.5 * hp.gamma * ev.activity.back().loss;
    }
    ev.objective = 0.5 * (L - state.anchor).squaredNorm() + hinge_sum / double(triplets.size()) +
                   hp.lambda * regularizer_value(L, opts.regularizer);
    return ev;
}

MetricSolve<double> solve_L_z(const IStageState& state, const std::vector<SignatureTriplet>& triplets,
                              const IStageEvaluation& eval, const Hyperparams& hp, const SolverOptions& opts) {
    check_triplets(state, triplets);
    const MatrixXd S = frozen_curvature(triplets, eval, hp, state.L_z.dim());
    return solve_metric_system<double>(regularizer_weight(state.L_z, opts.regularizer), S, state.anchor,
                                       hp.lambda, state.L_z.L(), opts.curvature_floor);
}

MetricStateXd istage_update(const IStageState& state, const std::vector<SignatureTriplet>& triplets,
                            const IStageEvaluation& eval, const Hyperparams& hp, const SolverOptions& opts) {
    return MetricStateXd(solve_L_z(state, triplets, eval, hp, opts).L, state.L_z.ridge_eps());
}

double istage_frozen_objective(const MatrixXd& L_z, const IStageState& at,
                               const std::vector<SignatureTriplet>& triplets, const IStageEvaluation& eval,
                               const Hyperparams& hp, const SolverOptions& opts) {
    const MatrixXd S = frozen_curvature(triplets, eval, hp, at.L_z.dim());
    const MatrixXd W = regularizer_weight(at.L_z, opts.regularizer);
    return 0.5 * (L_z - at.anchor).squaredNorm() + 0.5 * hp.lambda * (L_z.transpose() * W * L_z).trace() +
           0.5 * (L_z * S * L_z.transpose()).trace();
}

IStageState run_istage(const StackedBatch& train, const Hyperparams& hp, const TripletConfig& tcfg,
                       const SolverOptions& opts, std::optional<MetricStateXd> init_from) {
    hp.validate();
    tcfg.validate();
    if (static_cast<Eigen::Index>(train.labels.size()) != train.Z.rows())
        throw ShapeError("run_istage: " + std::to_string(train.Z.rows()) + " rows but " +
                         std::to_string(train.labels.size()) + " labels");

    IStageState state;
    if (init_from) {
        if (init_from->dim() != train.Z.cols())
            throw ShapeError("run_istage: initial metric has " + std::to_string(init_from->dim()) +
                             " columns, stacked batch has " + std::to_string(train.Z.cols()));
        state.L_z = *init_from;
        state.anchor = state.L_z.L();
    } else {
        const Eigen::Index k =
            hp.rank_k > 0 ? std::min<Eigen::Index>(hp.rank_k, train.Z.cols())
                          : (train.embedded > 0 ? train.embedded : hp.resolved_rank(train.Z.cols()));
        state = IStageState::initial(k, train.Z.cols(), opts.ridge_eps);
    }

    TripletConfig cfg = tcfg;
    cfg.rng_seed = mix_seed(tcfg.rng_seed, kInheritSeedTag);
    std::vector<SignatureTriplet> triplets;
    for (const auto& t : build_triplets(train.Z, train.labels, cfg)) triplets.push_back(opts.prepare(t));

    auto checked = [&](const IStageState& st, int it, const IStageEvaluation* warm) {
        auto ev = evaluate_istage(st, triplets, hp, opts, warm);
        if (!std::isfinite(ev.objective)) {
            std::ostringstream msg;
            msg << "run_istage: non-finite objective at inner iteration " << it;
            throw NumericError(msg.str());
        }
        return ev;
    };
    auto eval = checked(state, 0, nullptr);
    state.objective_trace.push_back(eval.objective);
    int it = 0;
    for (; it < hp.inner_iters; ++it) {
        const auto sol = solve_L_z(state, triplets, eval, hp, opts);
        state.damped_updates += int(sol.damping > 0);
        // Hinges that switch on during the step can make the closed-form point worse than
        // the current one; halve the step until the objective does not increase.
        const MatrixXd step = sol.L - state.L_z.L();
        IStageState next = state;
        bool accepted = false;
        for (int h = 0; h <= kMaxHalvings && !accepted; ++h) {
            next.L_z = MetricStateXd(state.L_z.L() + std::ldexp(1.0, -h) * step, opts.ridge_eps);
            auto ev = checked(next, it + 1, &eval);
            if (ev.objective <= eval.objective) {
                accepted = true;
                eval = std::move(ev);
            }
        }
        if (!accepted) {  // no descent along the update direction: fixed point
            state.converged = true;
            break;
        }
        const double change = std::abs(eval.objective - state.objective_trace.back());
        state.L_z = next.L_z;
        state.objective_trace.push_back(eval.objective);
        if (change < hp.converge_delta) {
            state.converged = true;
            break;
        }
    }
    state.iterations = std::min(it + 1, hp.inner_iters);
    return state;
}

}  // namespace eml
