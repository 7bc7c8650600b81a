#include "eml/tstage.hpp"

#include "eml/random.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace eml {

namespace {

/// Plan-dependent pieces of the frozen quadratic model:
///   1/2 tr(L_all S_all L_all^T) + 1/2 tr(L_surv S_surv L_surv^T) + rho tr(L_surv C L_all^T).
struct FrozenTerms {
    MatrixXd S_all;   // d x d
    MatrixXd S_surv;  // d_s x d_s
    MatrixXd C;       // d_s x d
};

FrozenTerms frozen_terms(const std::vector<TripletPair>& pairs, const TStageEvaluation& eval,
                         const Hyperparams& hp, Eigen::Index d, Eigen::Index ds) {
    FrozenTerms t{MatrixXd::Zero(d, d), MatrixXd::Zero(ds, ds), MatrixXd::Zero(ds, d)};
    const double w = 1.0 / double(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto& a = pairs[i].all;
        const auto& s = pairs[i].surv;
        const auto& pl = eval.plans[i];
        const auto& act = eval.activity[i];
        if (act.all.active) {
            t.S_all += hp.gamma * w *
                       (plan_moments(a.p.points(), a.q.points(), pl.all_pq.coupling).scatter() -
                        plan_moments(a.p.points(), a.k.points(), pl.all_pk.coupling).scatter());
        }
        if (act.surv.active) {
            t.S_surv += hp.gamma * w *
                        (plan_moments(s.p.points(), s.q.points(), pl.surv_pq.coupling).scatter() -
                         plan_moments(s.p.points(), s.k.points(), pl.surv_pk.coupling).scatter());
        }
        if (act.cons_a.active) {
            // || L_all p - L_surv q ||^2 terms
            const auto mq = plan_moments(a.p.points(), s.q.points(), pl.aq_s.coupling);
            const auto mk = plan_moments(a.p.points(), s.k.points(), pl.ak_s.coupling);
            t.S_all += hp.rho * w * (mq.xx - mk.xx);
            t.S_surv += hp.rho * w * (mq.yy - mk.yy);
            t.C += w * (mk.xy - mq.xy).transpose();
        }
        if (act.cons_s.active) {
            // || L_surv p - L_all q ||^2 terms
            const auto mq = plan_moments(s.p.points(), a.q.points(), pl.sq_a.coupling);
            const auto mk = plan_moments(s.p.points(), a.k.points(), pl.sk_a.coupling);
            t.S_all += hp.rho * w * (mq.yy - mk.yy);
            t.S_surv += hp.rho * w * (mq.xx - mk.xx);
            t.C += w * (mk.xy - mq.xy);
        }
    }
    return t;
}

void check_pairs(const TStageState& state, const std::vector<TripletPair>& pairs) {
    if (pairs.empty()) throw ValidationError("tstage: no triplets");
    if (state.L_all.rank_k() != state.L_surv.rank_k())
        throw ShapeError("tstage: embedding dimensions differ (" +
                         std::to_string(state.L_all.rank_k()) + " vs " +
                         std::to_string(state.L_surv.rank_k()) + ")");
    for (const auto& p : pairs) {
        if (p.all.p.dim() != state.L_all.dim() || p.surv.p.dim() != state.L_surv.dim())
            throw ShapeError("tstage: triplet dimensions " + std::to_string(p.all.p.dim()) + "/" +
                             std::to_string(p.surv.p.dim()) + " do not match metrics " +
                             std::to_string(state.L_all.dim()) + "/" +
                             std::to_string(state.L_surv.dim()));
    }
}

}  // namespace

TStageState TStageState::initial(Eigen::Index k, Eigen::Index d_all, Eigen::Index d_surv, double ridge_eps) {
    TStageState s;
    s.L_all = MetricStateXd::truncated_identity(k, d_all, ridge_eps);
    s.L_surv = MetricStateXd::truncated_identity(k, d_surv, ridge_eps);
    s.anchor_all = s.L_all.L();
    s.anchor_surv = s.L_surv.L();
    return s;
}

std::vector<TripletPair> make_triplet_pairs(const StreamBatch& batch, const TripletConfig& cfg,
                                            const SolverOptions& opts) {
    batch.validate();
    if (!batch.layout.is_transforming() || batch.layout.survived.empty())
        throw ValidationError("tstage: batch " + std::to_string(batch.batch_index) +
                              " needs non-empty vanished and survived blocks and no augmented block");
    std::vector<TripletPair> pairs;
    for (auto& t : build_triplets(batch, cfg)) {
        TripletPair p{t, project_triplet(t, batch.layout.survived)};
        p.all = opts.prepare(p.all);
        p.surv = opts.prepare(p.surv);
        pairs.push_back(std::move(p));
    }
    return pairs;
}

TStageEvaluation evaluate_tstage(const TStageState& state, const std::vector<TripletPair>& pairs,
                                 const Hyperparams& hp, const SolverOptions& opts, const TStageEvaluation* warm) {
    check_pairs(state, pairs);
    const auto sk = opts.sinkhorn(hp.sigma);
    const MatrixXd& La = state.L_all.L();
    const MatrixXd& Ls = state.L_surv.L();

    TStageEvaluation ev;
    ev.plans.reserve(pairs.size());
    ev.activity.reserve(pairs.size());
    if (warm && warm->plans.size() != pairs.size()) warm = nullptr;
    double hinge_sum = 0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto& a = pairs[i].all;
        const auto& s = pairs[i].surv;
        const PairPlans* w = warm ? &warm->plans[i] : nullptr;
        PairPlans pl;
        pl.surv_pq = iterate_plan(ground_cost(Ls, s.p, s.q), s.p, s.q, sk, w ? &w->surv_pq : nullptr);
        pl.surv_pk = iterate_plan(ground_cost(Ls, s.p, s.k), s.p, s.k, sk, w ? &w->surv_pk : nullptr);
        pl.all_pq = iterate_plan(ground_cost(La, a.p, a.q), a.p, a.q, sk, w ? &w->all_pq : nullptr);
        pl.all_pk = iterate_plan(ground_cost(La, a.p, a.k), a.p, a.k, sk, w ? &w->all_pk : nullptr);
        pl.aq_s = iterate_plan(cross_ground_cost(La, a.p, Ls, s.q), a.p, s.q, sk, w ? &w->aq_s : nullptr);
        pl.ak_s = iterate_plan(cross_ground_cost(La, a.p, Ls, s.k), a.p, s.k, sk, w ? &w->ak_s : nullptr);
        pl.sq_a = iterate_plan(cross_ground_cost(Ls, s.p, La, a.q), s.p, a.q, sk, w ? &w->sq_a : nullptr);
        pl.sk_a = iterate_plan(cross_ground_cost(Ls, s.p, La, a.k), s.p, a.k, sk, w ? &w->sk_a : nullptr);
        PairActivity act{hinge_triplet(pl.surv_pq.value, pl.surv_pk.value),
                         hinge_triplet(pl.all_pq.value, pl.all_pk.value),
                         hinge_triplet(pl.aq_s.value, pl.ak_s.value),
                         hinge_triplet(pl.sq_a.value, pl.sk_a.value)};
        hinge_sum += 0.5 * hp.gamma * (act.surv.loss + act.all.loss) +
                     0.5 * hp.rho * (act.cons_a.loss + act.cons_s.loss);
        ev.plans.push_back(std::move(pl));
        ev.activity.push_back(act);
    }
    ev.objective = 0.5 * (La - state.anchor_all).squaredNorm() +
                   0.5 * (Ls - state.anchor_surv).squaredNorm() + hinge_sum / double(pairs.size()) +
                   hp.lambda * (regularizer_value(Ls, opts.regularizer) +
                                regularizer_value(La, opts.regularizer));
    return ev;
}

double tstage_objective(const TStageState& state, const std::vector<TripletPair>& pairs,
                        const Hyperparams& hp, const SolverOptions& opts) {
    return evaluate_tstage(state, pairs, hp, opts).objective;
}

MetricSolve<double> solve_L_all(const TStageState& state, const std::vector<TripletPair>& pairs,
                                const TStageEvaluation& eval, const Hyperparams& hp,
                                const SolverOptions& opts) {
    check_pairs(state, pairs);
    const auto t = frozen_terms(pairs, eval, hp, state.L_all.dim(), state.L_surv.dim());
    const MatrixXd rhs = state.anchor_all - hp.rho * state.L_surv.L() * t.C;
    return solve_metric_system<double>(regularizer_weight(state.L_all, opts.regularizer), t.S_all, rhs,
                                       hp.lambda, state.L_all.L(), opts.curvature_floor);
}

MetricSolve<double> solve_L_surv(const TStageState& state, const std::vector<TripletPair>& pairs,
                                 const TStageEvaluation& eval, const Hyperparams& hp,
                                 const SolverOptions& opts) {
    check_pairs(state, pairs);
    const auto t = frozen_terms(pairs, eval, hp, state.L_all.dim(), state.L_surv.dim());
    const MatrixXd rhs = state.anchor_surv - hp.rho * state.L_all.L() * t.C.transpose();
    return solve_metric_system<double>(regularizer_weight(state.L_surv, opts.regularizer), t.S_surv,
                                       rhs, hp.lambda, state.L_surv.L(), opts.curvature_floor);
}

MetricStateXd update_L_all(const TStageState& state, const std::vector<TripletPair>& pairs,
                           const TStageEvaluation& eval, const Hyperparams& hp, const SolverOptions& opts) {
    return MetricStateXd(solve_L_all(state, pairs, eval, hp, opts).L, state.L_all.ridge_eps());
}

MetricStateXd update_L_surv(const TStageState& state, const std::vector<TripletPair>& pairs,
                            const TStageEvaluation& eval, const Hyperparams& hp, const SolverOptions& opts) {
    return MetricStateXd(solve_L_surv(state, pairs, eval, hp, opts).L, state.L_surv.ridge_eps());
}

double tstage_frozen_objective(const MatrixXd& L_all, const MatrixXd& L_surv, const TStageState& at,
                               const std::vector<TripletPair>& pairs, const TStageEvaluation& eval,
                               const Hyperparams& hp, const SolverOptions& opts) {
    const auto t = frozen_terms(pairs, eval, hp, at.L_all.dim(), at.L_surv.dim());
    const MatrixXd Wa = regularizer_weight(at.L_all, opts.regularizer);
    const MatrixXd Ws = regularizer_weight(at.L_surv, opts.regularizer);
    return 0.5 * (L_all - at.anchor_all).squaredNorm() + 0.5 * (L_surv - at.anchor_surv).squaredNorm() +
           0.5 * hp.lambda * ((L_all.transpose() * Wa * L_all).trace() +
                              (L_surv.transpose() * Ws * L_surv).trace()) +
           0.5 * (L_all * t.S_all * L_all.transpose()).trace() +
           0.5 * (L_surv * t.S_surv * L_surv.transpose()).trace() +
           hp.rho * (L_surv * t.C * L_all.transpose()).trace();
}

TStageState run_tstage(const std::vector<StreamBatch>& batches, const Hyperparams& hp,
                       const TripletConfig& tcfg, const SolverOptions& opts, std::optional<TStageState> init) {
    hp.validate();
    tcfg.validate();
    if (batches.empty()) throw ValidationError("run_tstage: no batches");
    const FeatureLayout layout = batches.front().layout;
    for (const auto& b : batches) {
        b.validate();
        if (!(b.layout == layout))
            throw ValidationError("run_tstage: batch " + std::to_string(b.batch_index) +
                                  " has a different feature layout");
    }
    if (!layout.is_transforming() || layout.survived.empty())
        throw ValidationError("run_tstage: layout needs non-empty vanished and survived blocks");

    const Eigen::Index d = layout.width(), ds = layout.survived.size;
    TStageState state;
    if (init) {
        state = std::move(*init);
        if (state.L_all.dim() != d || state.L_surv.dim() != ds)
            throw ShapeError("run_tstage: initial metrics are " +
                             shape_string(state.L_all.rank_k(), state.L_all.dim()) + " and " +
                             shape_string(state.L_surv.rank_k(), state.L_surv.dim()) +
                             " but the stream has d = " + std::to_string(d) + ", d_s = " +
                             std::to_string(ds));
    } else {
        state = TStageState::initial(hp.resolved_rank(ds), d, ds, opts.ridge_eps);
    }

    for (const auto& batch : batches) {
        state.anchor_all = state.L_all.L();
        state.anchor_surv = state.L_surv.L();
        TripletConfig cfg = tcfg;
        cfg.rng_seed = mix_seed(tcfg.rng_seed, std::uint64_t(batch.batch_index));
        const auto pairs = make_triplet_pairs(batch, cfg, opts);

        state.batch_offsets.push_back(state.objective_trace.size());
        auto checked = [&](const TStageState& st, int it, const TStageEvaluation* warm) {
            auto ev = evaluate_tstage(st, pairs, hp, opts, warm);
            if (!std::isfinite(ev.objective)) {
                std::ostringstream msg;
                msg << "run_tstage: non-finite objective in batch " << batch.batch_index << " at inner iteration "
                    << it;
                throw NumericError(msg.str());
            }
            return ev;
        };
        auto eval = checked(state, 0, nullptr);
        state.objective_trace.push_back(eval.objective);
        bool converged = false;
        int it = 0;
        for (; it < hp.inner_iters; ++it) {
            TStageState next = state;
            const auto sol_all = solve_L_all(state, pairs, eval, hp, opts);
            next.L_all = MetricStateXd(sol_all.L, opts.ridge_eps);
            const auto sol_surv = solve_L_surv(next, pairs, eval, hp, opts);
            state.damped_updates += int(sol_all.damping > 0) + int(sol_surv.damping > 0);
            // Halve the joint step until the objective does not increase (hinges switching
            // on during the step can overshoot).
            const MatrixXd step_all = sol_all.L - state.L_all.L();
            const MatrixXd step_surv = sol_surv.L - state.L_surv.L();
            bool accepted = false;
            for (int h = 0; h <= kMaxHalvings && !accepted; ++h) {
                const double t = std::ldexp(1.0, -h);
                next.L_all = MetricStateXd(state.L_all.L() + t * step_all, opts.ridge_eps);
                next.L_surv = MetricStateXd(state.L_surv.L() + t * step_surv, opts.ridge_eps);
                auto ev = checked(next, it + 1, &eval);
                if (ev.objective <= eval.objective) {
                    accepted = true;
                    eval = std::move(ev);
                }
            }
            if (!accepted) {  // no descent along the update direction: fixed point
                converged = true;
                break;
            }
            const double change = std::abs(eval.objective - state.objective_trace.back());
            state.L_all = std::move(next.L_all);
            state.L_surv = std::move(next.L_surv);
            state.objective_trace.push_back(eval.objective);
            if (change < hp.converge_delta) {
                converged = true;
                break;
            }
        }
        state.iterations_per_batch.push_back(std::min(it + 1, hp.inner_iters));
        state.converged = converged;
    }
    return state;
}

}  // namespace eml
