#pragma once

// Nearest-neighbour readout in a learned metric, run reports and their aggregation.

#include "eml/istage.hpp"

#include <string>
#include <vector>

namespace eml {

struct EvalConfig {
    int knn_k = 1;

    void validate() const;
};

/// Majority label among the k nearest training rows under ||L (z_i - z_j)||^2; ties go
/// to the smallest summed distance, then to the smallest label.
std::vector<int> knn_predict(const StackedBatch& train, const StackedBatch& test, const MetricStateXd& L, int k);
std::vector<int> knn_predict(const MatrixXd& train, const std::vector<int>& train_labels, const MatrixXd& test,
                             const MatrixXd& L, int k);

double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth);

enum class VariantKind { Full, WoT, WoI, WoW, WoLR };

std::string variant_name(VariantKind v);
VariantKind parse_variant(const std::string& name);
const std::vector<VariantKind>& all_variants();

struct StageTrace {
    std::string stage;                  ///< e.g. "stage1/T", "stage2/I"
    std::vector<double> objective;      ///< every inner evaluation, batches concatenated
    std::vector<std::size_t> batch_offsets;
    bool converged = false;
    int damped_updates = 0;
};

struct Timings {
    double tstage_s = 0;
    double istage_s = 0;
    double eval_s = 0;
};

struct Stat {
    double mean = 0;
    double sd = 0;   ///< sample standard deviation (0 for a single run)
    double min = 0;
    double max = 0;
};

/// One evaluated configuration: accuracies per evaluated stage, plus either a single run's
/// traces or the aggregate over several runs.
struct Report {
    std::string variant = "full";
    std::string scenario = "one-shot";
    int runs = 1;
    std::vector<std::string> stage_names;            ///< one per evaluated stage
    std::vector<std::vector<double>> accuracy_runs;  ///< [run][stage]
    std::vector<Stat> accuracy;                      ///< per stage over runs
    std::vector<std::uint64_t> seeds;                ///< one per run
    std::vector<StageTrace> traces;                  ///< from the first run
    Timings timings;                                 ///< mean over runs
};

/// Fills `accuracy` from `accuracy_runs`.
void summarize(Report& r);

/// Mean and sample standard deviation per stage; run count = number of inputs.
Report aggregate_runs(const std::vector<Report>& reports);

}  // namespace eml
