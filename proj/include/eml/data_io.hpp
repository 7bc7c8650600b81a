#pragma once

// Dataset ingestion, feature splitting, synthetic streams and batching.

#include "eml/stream.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace eml {

/// Dense samples with raw labels as read from a file.
struct LabeledData {
    MatrixXd X;
    std::vector<int> y;
};

/// "label idx:val idx:val ..." with 1-based strictly increasing indices. Width is the
/// largest index seen unless `dim` > 0 is given.
LabeledData parse_sparse_text(std::istream& in, Eigen::Index dim = 0);
LabeledData parse_sparse_text_file(const std::string& path, Eigen::Index dim = 0);
void write_sparse_text(std::ostream& out, const MatrixXd& X, const std::vector<int>& y);

struct DelimitedFormat {
    char delimiter = ',';
    int label_column = 0;  ///< negative counts from the end (-1 = last column)
    bool header = false;
};

LabeledData parse_delimited(std::istream& in, const DelimitedFormat& fmt = {});
LabeledData parse_delimited_file(const std::string& path, const DelimitedFormat& fmt = {});
void write_delimited(std::ostream& out, const MatrixXd& X, const std::vector<int>& y,
                     const DelimitedFormat& fmt = {});

/// Labels mapped to 0..C-1 in increasing order of the original value.
struct LabelMap {
    std::vector<int> y;
    std::vector<int> classes;  ///< classes[c] = original label of class c
};

LabelMap remap_labels(const std::vector<int>& y);

/// Keeps only rows whose label is listed (all rows when `keep` is empty).
LabeledData filter_classes(const LabeledData& data, const std::vector<int>& keep);

struct FeatureSplit {
    Eigen::Index vanished = 0;
    Eigen::Index survived = 0;
    Eigen::Index augmented = 0;

    [[nodiscard]] Eigen::Index total() const { return vanished + survived + augmented; }
    friend bool operator==(const FeatureSplit&, const FeatureSplit&) = default;
};

/// First quarter vanishes, last quarter is augmented: (ceil(d/4), rest, floor(d/4)).
FeatureSplit split_features(Eigen::Index d);

/// Published one-shot settings of a benchmark dataset.
struct DatasetSpec {
    std::string name;
    int classes = 2;
    std::vector<int> class_filter;    ///< original labels kept; empty keeps all
    FeatureSplit split;
    std::vector<int> batch_sizes;     ///< n_i settings
    int train_total = 0;              ///< samples across the T-stage batches
    std::string source;
};

const std::vector<DatasetSpec>& dataset_presets();
std::optional<DatasetSpec> find_preset(const std::string& name);

/// Stage s (1-based) holds feature blocks s-1 and s; stage 1 is transforming and every
/// later stage inheriting.
EvolutionSchedule schedule_from_blocks(const std::vector<Eigen::Index>& blocks,
                                       const std::vector<int>& batches_per_stage, int batch_size);

/// One-shot schedule: `t_batches` transforming batches, then an I-stage training batch
/// and a test batch.
EvolutionSchedule one_shot_schedule(const FeatureSplit& split, int t_batches, int batch_size);

/// Cuts disjoint batches out of `data` following the schedule. Class counts within a batch
/// differ by at most one, the extra slots rotating across batches. Each batch keeps only
/// the columns of its stage.
std::vector<StreamBatch> make_stream(const LabeledData& data, const EvolutionSchedule& schedule,
                                     std::uint64_t seed);

struct SyntheticSpec {
    int classes = 3;
    std::vector<Eigen::Index> blocks{10, 20, 10};  ///< feature blocks, oldest first
    double separation = 3.0;     ///< centroid distance within each block, in noise deviations
    int nuisance_rank = 0;       ///< uninformative directions with inflated noise
    double nuisance = 0.0;       ///< extra noise deviation along those directions
    int modes = 1;               ///< sub-clusters per class (heterogeneous classes when > 1)
    double mode_spread = 0.0;    ///< distance of each sub-cluster from its class centroid
    double scale = 1.0;          ///< multiplies every feature value

    void validate() const;
    [[nodiscard]] Eigen::Index width() const;
};

/// Within every feature block the class centroids form a regular simplex (pairwise
/// distance = separation) in a random (classes-1)-dimensional subspace of that block;
/// noise is unit Gaussian.
/// With modes > 1 every sample picks one of its class's sub-clusters, placed at
/// mode_spread from the centroid along random directions. Everything is then scaled.
/// Fresh Gaussian samples for every batch of the schedule; deterministic under `seed`.
std::vector<StreamBatch> make_synthetic_stream(const SyntheticSpec& spec, const EvolutionSchedule& schedule,
                                               std::uint64_t seed);

/// Class-balanced labelled sample of the full feature width (helper for tests and tools).
LabeledData sample_synthetic(const SyntheticSpec& spec, int per_class, std::uint64_t seed);

}  // namespace eml
