#include "eml/triplets.hpp"

#include "eml/random.hpp"

#include <algorithm>
#include <map>
#include <string>

namespace eml {

void TripletConfig::validate() const {
    if (n_p < 1 || n_q < 1 || n_k < 1) throw ValidationError("triplets: n_p, n_q, n_k must be >= 1");
    if (triplets_per_batch < 1) throw ValidationError("triplets: triplets_per_batch must be >= 1");
}

namespace {

std::vector<Eigen::Index> draw_without_replacement(const std::vector<Eigen::Index>& pool, int count,
                                                   Rng& rng) {
    std::vector<Eigen::Index> work = pool;
    for (int i = 0; i < count; ++i) {
        const auto j = i + static_cast<std::size_t>(uniform_index(rng, work.size() - i));
        std::swap(work[i], work[j]);
    }
    work.resize(count);
    return work;
}

SignatureXd gather(const MatrixXd& X, const std::vector<Eigen::Index>& rows) {
    MatrixXd pts(rows.size(), X.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) pts.row(i) = X.row(rows[i]);
    return SignatureXd::uniform(std::move(pts));
}

}  // namespace

std::vector<SignatureTriplet> build_triplets(const MatrixXd& X, const std::vector<int>& y,
                                             const TripletConfig& cfg) {
    cfg.validate();
    if (static_cast<Eigen::Index>(y.size()) != X.rows())
        throw ShapeError("build_triplets: " + std::to_string(X.rows()) + " rows but " +
                         std::to_string(y.size()) + " labels");

    std::map<int, std::vector<Eigen::Index>> by_class;
    for (std::size_t i = 0; i < y.size(); ++i) by_class[y[i]].push_back(static_cast<Eigen::Index>(i));
    if (by_class.size() < 2)
        throw InfeasibleError("build_triplets: batch needs at least 2 classes, found " +
                              std::to_string(by_class.size()));
    const int need = std::max({cfg.n_p, cfg.n_q, cfg.n_k});
    for (const auto& [label, rows] : by_class)
        if (static_cast<int>(rows.size()) < need)
            throw InfeasibleError("build_triplets: class " + std::to_string(label) + " has " +
                                  std::to_string(rows.size()) + " samples, need " +
                                  std::to_string(need));

    std::vector<int> labels;
    for (const auto& entry : by_class) labels.push_back(entry.first);

    Rng rng(cfg.rng_seed);
    std::vector<SignatureTriplet> out;
    out.reserve(cfg.triplets_per_batch);
    for (int t = 0; t < cfg.triplets_per_batch; ++t) {
        const std::size_t a = uniform_index(rng, labels.size());
        std::size_t b = uniform_index(rng, labels.size() - 1);
        if (b >= a) ++b;
        SignatureTriplet trip;
        trip.anchor_class = labels[a];
        trip.negative_class = labels[b];
        trip.p_rows = draw_without_replacement(by_class[trip.anchor_class], cfg.n_p, rng);
        trip.q_rows = draw_without_replacement(by_class[trip.anchor_class], cfg.n_q, rng);
        trip.k_rows = draw_without_replacement(by_class[trip.negative_class], cfg.n_k, rng);
        trip.p = gather(X, trip.p_rows);
        trip.q = gather(X, trip.q_rows);
        trip.k = gather(X, trip.k_rows);
        out.push_back(std::move(trip));
    }
    return out;
}

SignatureTriplet project_triplet(const SignatureTriplet& t, ColumnRange columns) {
    SignatureTriplet out = t;
    out.p = t.p.columns(columns);
    out.q = t.q.columns(columns);
    out.k = t.k.columns(columns);
    return out;
}

SignatureTriplet barycentric_triplet(const SignatureTriplet& t) {
    SignatureTriplet out = t;
    out.p = t.p.barycenter();
    out.q = t.q.barycenter();
    out.k = t.k.barycenter();
    return out;
}

}  // namespace eml
