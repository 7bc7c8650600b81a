#pragma once

// Online construction of (P, Q, K) signature triplets from a labelled batch.

#include "eml/stream.hpp"
#include "eml/transport.hpp"

#include <cstdint>
#include <vector>

namespace eml {

struct TripletConfig {
    int n_p = 5;
    int n_q = 5;
    int n_k = 5;
    int triplets_per_batch = 20;
    std::uint64_t rng_seed = 0;

    void validate() const;
};

/// P and Q share `anchor_class`; K comes from `negative_class`. The row vectors
/// index the batch the triplet was drawn from.
struct SignatureTriplet {
    SignatureXd p;
    SignatureXd q;
    SignatureXd k;
    int anchor_class = 0;
    int negative_class = 0;
    std::vector<Eigen::Index> p_rows;
    std::vector<Eigen::Index> q_rows;
    std::vector<Eigen::Index> k_rows;
};

/// Draws cfg.triplets_per_batch triplets; deterministic in (X, y, cfg).
std::vector<SignatureTriplet> build_triplets(const MatrixXd& X, const std::vector<int>& y,
                                             const TripletConfig& cfg);

inline std::vector<SignatureTriplet> build_triplets(const StreamBatch& batch, const TripletConfig& cfg) {
    return build_triplets(batch.X, batch.y, cfg);
}

/// Same samples and weights restricted to `columns`.
SignatureTriplet project_triplet(const SignatureTriplet& t, ColumnRange columns);

/// Each signature collapsed to its weighted mean.
SignatureTriplet barycentric_triplet(const SignatureTriplet& t);

}  // namespace eml
