#pragma once

// Batches of a feature-evolving stream and the column blocks they expose.

#include "eml/common.hpp"

#include <cstdint>
#include <vector>

namespace eml {

/// Column blocks of one stage. Transforming-stage batches carry [vanished, survived];
/// inheriting-stage batches carry [survived, augmented].
struct FeatureLayout {
    ColumnRange vanished;
    ColumnRange survived;
    ColumnRange augmented;

    static FeatureLayout transforming(Eigen::Index d_vanished, Eigen::Index d_survived) {
        return {{0, d_vanished}, {d_vanished, d_survived}, {d_vanished + d_survived, 0}};
    }
    static FeatureLayout inheriting(Eigen::Index d_survived, Eigen::Index d_augmented) {
        return {{0, 0}, {0, d_survived}, {d_survived, d_augmented}};
    }

    [[nodiscard]] Eigen::Index width() const {
        return vanished.size + survived.size + augmented.size;
    }
    [[nodiscard]] bool is_transforming() const { return augmented.empty() && !vanished.empty(); }
    [[nodiscard]] bool is_inheriting() const { return vanished.empty(); }

    /// Reads an inheriting layout as the transforming layout of the next evolution:
    /// today's survived block vanishes, today's augmented block survives.
    [[nodiscard]] FeatureLayout as_transforming() const {
        return transforming(survived.size, augmented.size);
    }

    /// Throws unless the blocks are contiguous, disjoint and cover exactly `cols` columns.
    void validate(Eigen::Index cols) const;

    friend bool operator==(const FeatureLayout&, const FeatureLayout&) = default;
};

struct StreamBatch {
    MatrixXd X;               ///< n_i x d, columns per `layout`
    std::vector<int> y;       ///< labels remapped to 0..C-1
    FeatureLayout layout;
    int batch_index = 0;
    int stage = 1;            ///< evolution stage, 1-based

    [[nodiscard]] Eigen::Index size() const { return X.rows(); }
    void validate() const;
};

/// Feature evolution over M shots: stage s (1-based, s = 1..M+1) exposes feature blocks
/// s-1 and s, so adjacent stages share exactly one block.
struct EvolutionSchedule {
    int shots = 1;                                 ///< M
    std::vector<Eigen::Index> blocks;              ///< M + 2 block widths, oldest first
    std::vector<int> batches_per_stage;            ///< M + 1 entries
    int batch_size = 0;                            ///< n_i, equal in every stage
    std::vector<FeatureLayout> layout_per_stage;   ///< M + 1 entries

    [[nodiscard]] int stages() const { return shots + 1; }
    [[nodiscard]] int total_batches() const;
    /// Columns of stage `stage` inside the full feature width.
    [[nodiscard]] ColumnRange stage_columns(int stage) const;
    void validate() const;
};

}  // namespace eml
