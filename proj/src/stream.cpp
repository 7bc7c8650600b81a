#include "eml/stream.hpp"

#include <string>

namespace eml {

void FeatureLayout::validate(Eigen::Index cols) const {
    for (const ColumnRange* r : {&vanished, &survived, &augmented})
        if (r->begin < 0 || r->size < 0)
            throw ValidationError("FeatureLayout: negative column range");
    // Non-empty blocks must tile [0, cols) in vanished, survived, augmented order.
    Eigen::Index cursor = 0;
    for (const ColumnRange* r : {&vanished, &survived, &augmented}) {
        if (r->empty()) continue;
        if (r->begin != cursor)
            throw ValidationError("FeatureLayout: blocks are not contiguous at column " +
                                  std::to_string(cursor));
        cursor = r->end();
    }
    if (cursor != cols)
        throw ShapeError("FeatureLayout: blocks cover " + std::to_string(cursor) +
                         " columns but the batch has " + std::to_string(cols));
    if (!vanished.empty() && !augmented.empty())
        throw ValidationError("FeatureLayout: a stage cannot expose both vanished and augmented features");
}

void StreamBatch::validate() const {
    if (X.rows() < 1) throw ValidationError("StreamBatch: empty batch");
    if (static_cast<Eigen::Index>(y.size()) != X.rows())
        throw ShapeError("StreamBatch: " + std::to_string(X.rows()) + " rows but " +
                         std::to_string(y.size()) + " labels");
    layout.validate(X.cols());
}

int EvolutionSchedule::total_batches() const {
    int n = 0;
    for (int b : batches_per_stage) n += b;
    return n;
}

ColumnRange EvolutionSchedule::stage_columns(int stage) const {
    if (stage < 1 || stage > stages())
        throw ValidationError("EvolutionSchedule: stage " + std::to_string(stage) + " outside 1.." +
                              std::to_string(stages()));
    Eigen::Index begin = 0;
    for (int b = 0; b < stage - 1; ++b) begin += blocks[b];
    return {begin, blocks[stage - 1] + blocks[stage]};
}

void EvolutionSchedule::validate() const {
    if (shots < 1) throw ValidationError("schedule: shots must be >= 1");
    const auto n = static_cast<std::size_t>(stages());
    if (blocks.size() != n + 1)
        throw ValidationError("schedule: " + std::to_string(shots) + " shots need " +
                              std::to_string(n + 1) + " feature blocks, got " + std::to_string(blocks.size()));
    if (batches_per_stage.size() != n || layout_per_stage.size() != n)
        throw ValidationError("schedule: need batch counts and layouts for " + std::to_string(n) + " stages");
    for (auto b : blocks)
        if (b < 1) throw ValidationError("schedule: feature blocks must be non-empty");
    if (batch_size < 1) throw ValidationError("schedule: batch_size must be >= 1");
    if (batches_per_stage.front() < 1) throw ValidationError("schedule: stage 1 needs at least one batch");
    for (std::size_t s = 1; s < n; ++s)
        if (batches_per_stage[s] < 2)
            throw ValidationError("schedule: stage " + std::to_string(s + 1) +
                                  " needs a training and a test batch");
    for (std::size_t s = 0; s < n; ++s) {
        const auto& l = layout_per_stage[s];
        const bool ok = s == 0 ? l == FeatureLayout::transforming(blocks[0], blocks[1])
                               : l == FeatureLayout::inheriting(blocks[s], blocks[s + 1]);
        if (!ok)
            throw ValidationError("schedule: layout of stage " + std::to_string(s + 1) +
                                  " does not match its feature blocks");
    }
}

}  // namespace eml
