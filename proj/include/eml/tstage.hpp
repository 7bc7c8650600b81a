#pragma once

// Transforming stage: joint learning of the all-feature metric and the
// survived-feature metric, tied by cross-space consistency hinges.

#include "eml/solver.hpp"

#include <optional>
#include <vector>

namespace eml {

/// Sample-aligned triplets over all features and over the survived block.
struct TripletPair {
    SignatureTriplet all;
    SignatureTriplet surv;
};

/// Builds aligned pairs from a transforming-stage batch.
std::vector<TripletPair> make_triplet_pairs(const StreamBatch& batch, const TripletConfig& cfg,
                                            const SolverOptions& opts = {});

struct TStageState {
    MetricStateXd L_all;        ///< k x (d_v + d_s)
    MetricStateXd L_surv;       ///< k x d_s
    MatrixXd anchor_all;        ///< metric carried in from the previous batch
    MatrixXd anchor_surv;
    std::vector<double> objective_trace;
    std::vector<std::size_t> batch_offsets;  ///< start of each batch inside objective_trace
    std::vector<int> iterations_per_batch;
    int damped_updates = 0;
    bool converged = false;

    /// Truncated-identity start for both metrics, anchored at themselves.
    static TStageState initial(Eigen::Index k, Eigen::Index d_all, Eigen::Index d_surv,
                               double ridge_eps = MetricStateXd::kDefaultRidge);
};

/// Transport plans of the eight signature distances for one triplet pair.
struct PairPlans {
    TransportPlan<double> surv_pq, surv_pk;  ///< survived space
    TransportPlan<double> all_pq, all_pk;    ///< all-feature space
    TransportPlan<double> aq_s, ak_s;        ///< P over all features vs Q, K over survived
    TransportPlan<double> sq_a, sk_a;        ///< P over survived vs Q, K over all features
};

struct PairActivity {
    HingeResult surv, all, cons_a, cons_s;
};

/// Plans, hinges and objective value at the current iterate.
struct TStageEvaluation {
    std::vector<PairPlans> plans;
    std::vector<PairActivity> activity;
    double objective = 0;
};

/// `warm` (an evaluation over the same pairs) seeds the transport solves.
TStageEvaluation evaluate_tstage(const TStageState& state, const std::vector<TripletPair>& pairs,
                                 const Hyperparams& hp, const SolverOptions& opts = {},
                                 const TStageEvaluation* warm = nullptr);

/// Batch objective: proximity to the anchors, mean triplet hinges, rho/2-weighted
/// consistency hinges and lambda-weighted low-rank surrogate.
double tstage_objective(const TStageState& state, const std::vector<TripletPair>& pairs,
                        const Hyperparams& hp, const SolverOptions& opts = {});

/// Closed-form all-feature update with plans and hinge activity frozen at `eval`.
MetricSolve<double> solve_L_all(const TStageState& state, const std::vector<TripletPair>& pairs,
                                const TStageEvaluation& eval, const Hyperparams& hp,
                                const SolverOptions& opts = {});

/// Closed-form survived-feature update; reads the (already refreshed) L_all from `state`.
MetricSolve<double> solve_L_surv(const TStageState& state, const std::vector<TripletPair>& pairs,
                                 const TStageEvaluation& eval, const Hyperparams& hp,
                                 const SolverOptions& opts = {});

MetricStateXd update_L_all(const TStageState& state, const std::vector<TripletPair>& pairs,
                           const TStageEvaluation& eval, const Hyperparams& hp,
                           const SolverOptions& opts = {});
MetricStateXd update_L_surv(const TStageState& state, const std::vector<TripletPair>& pairs,
                            const TStageEvaluation& eval, const Hyperparams& hp,
                            const SolverOptions& opts = {});

/// Frozen-plan quadratic model that the two updates minimise block-wise
/// (constants dropped). Used to verify descent and stationarity.
double tstage_frozen_objective(const MatrixXd& L_all, const MatrixXd& L_surv, const TStageState& at,
                               const std::vector<TripletPair>& pairs, const TStageEvaluation& eval,
                               const Hyperparams& hp, const SolverOptions& opts = {});

/// Runs the alternating loop over each batch in order.
TStageState run_tstage(const std::vector<StreamBatch>& batches, const Hyperparams& hp,
                       const TripletConfig& tcfg, const SolverOptions& opts = {},
                       std::optional<TStageState> init = std::nullopt);

}  // namespace eml
