#pragma once

// One-shot and multi-shot feature-evolution pipelines.

#include "eml/eval.hpp"
#include "eml/tstage.hpp"

#include <vector>

namespace eml {

/// Everything a pipeline run needs besides the stream itself.
struct PipelineConfig {
    Hyperparams hp;
    TripletConfig triplets;
    EvalConfig eval;
    SolverOptions solver;
    VariantKind variant = VariantKind::Full;

    void validate() const;
};

enum class TaskKind {
    TaskI,   ///< predict the final held-out batch
    TaskII,  ///< predict one batch in every stage
};

std::string task_name(TaskKind t);
TaskKind parse_task(const std::string& name);

/// Solver options and stage switches implied by an ablation variant.
PipelineConfig apply_variant(PipelineConfig cfg, VariantKind v);

/// T-stage on the leading transforming batches, I-stage on the next batch, 1-NN-style
/// readout on the final batch with the I-stage batch as reference.
Report run_one_shot(const std::vector<StreamBatch>& stream, const PipelineConfig& cfg);

/// Task I: one-shot pipeline over the last two stages. Task II: one accuracy per stage,
/// chaining each stage's survived-feature metric into the next stage's stacking.
Report run_multi_shot(const std::vector<StreamBatch>& stream, const EvolutionSchedule& schedule,
                      const PipelineConfig& cfg, TaskKind task);

/// Runs `variant` on a one-shot stream.
Report run_variant(VariantKind variant, const std::vector<StreamBatch>& stream, const PipelineConfig& cfg);

/// Runs `variant` on a multi-shot stream.
Report run_variant(VariantKind variant, const std::vector<StreamBatch>& stream, const EvolutionSchedule& schedule,
                   const PipelineConfig& cfg, TaskKind task);

}  // namespace eml
