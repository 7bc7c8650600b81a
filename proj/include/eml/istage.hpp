#pragma once

// Inheriting stage: survived features pass through the learned survived-feature
// metric, augmented features are appended, and a metric is learned on the stack.

#include "eml/solver.hpp"

#include <optional>
#include <vector>

namespace eml {

struct StackedBatch {
    MatrixXd Z;               ///< n x (k + d_n)
    std::vector<int> labels;
    Eigen::Index embedded = 0;  ///< leading columns produced by the survived-feature metric
};

/// Z = [X_surv * L_surv^T, X_new].
StackedBatch stack_features(const MatrixXd& X_surv, const MatrixXd& X_new, const MetricStateXd& L_surv,
                            std::vector<int> labels = {});

/// Stacks an inheriting-stage batch using its survived and augmented blocks.
StackedBatch stack_batch(const StreamBatch& batch, const MetricStateXd& L_surv);

struct IStageState {
    MetricStateXd L_z;        ///< k x (k + d_n)
    MatrixXd anchor;
    std::vector<double> objective_trace;
    int iterations = 0;
    int damped_updates = 0;
    bool converged = false;

    static IStageState initial(Eigen::Index k, Eigen::Index width,
                               double ridge_eps = MetricStateXd::kDefaultRidge);
};

struct IStageEvaluation {
    std::vector<TransportPlan<double>> pq;
    std::vector<TransportPlan<double>> pk;
    std::vector<HingeResult> activity;
    double objective = 0;
};

/// `warm` (an evaluation over the same triplets) seeds the transport solves.
IStageEvaluation evaluate_istage(const IStageState& state, const std::vector<SignatureTriplet>& triplets,
                                 const Hyperparams& hp, const SolverOptions& opts = {},
                                 const IStageEvaluation* warm = nullptr);

/// Closed-form update with plans and hinge activity frozen at `eval`.
MetricSolve<double> solve_L_z(const IStageState& state, const std::vector<SignatureTriplet>& triplets,
                              const IStageEvaluation& eval, const Hyperparams& hp,
                              const SolverOptions& opts = {});

MetricStateXd istage_update(const IStageState& state, const std::vector<SignatureTriplet>& triplets,
                            const IStageEvaluation& eval, const Hyperparams& hp,
                            const SolverOptions& opts = {});

/// Quadratic model minimised by istage_update (constants dropped).
double istage_frozen_objective(const MatrixXd& L_z, const IStageState& at,
                               const std::vector<SignatureTriplet>& triplets, const IStageEvaluation& eval,
                               const Hyperparams& hp, const SolverOptions& opts = {});

/// Iterates plan solve / closed-form update on the stacked training batch.
IStageState run_istage(const StackedBatch& train, const Hyperparams& hp, const TripletConfig& tcfg,
                       const SolverOptions& opts = {}, std::optional<MetricStateXd> init_from = std::nullopt);

}  // namespace eml
