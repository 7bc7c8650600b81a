#include "eml/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace eml {

void EvalConfig::validate() const {
    if (knn_k < 1) throw ValidationError("eval.knn_k must be >= 1");
}

std::vector<int> knn_predict(const MatrixXd& train, const std::vector<int>& train_labels, const MatrixXd& test,
                             const MatrixXd& L, int k) {
    if (k < 1) throw ValidationError("knn_predict: k must be >= 1");
    if (train.rows() == 0) throw ValidationError("knn_predict: empty reference set");
    if (k > train.rows())
        throw ValidationError("knn_predict: k = " + std::to_string(k) + " exceeds " + std::to_string(train.rows()) +
                              " reference rows");
    if (Eigen::Index(train_labels.size()) != train.rows())
        throw ShapeError("knn_predict: reference labels do not match reference rows");
    if (train.cols() != L.cols() || test.cols() != L.cols())
        throw ShapeError("knn_predict: metric has " + std::to_string(L.cols()) + " columns, reference " +
                         std::to_string(train.cols()) + ", query " + std::to_string(test.cols()));

    const MatrixXd A = train * L.transpose();
    const MatrixXd B = test * L.transpose();
    std::vector<int> out;
    out.reserve(std::size_t(test.rows()));
    std::vector<std::pair<double, int>> dist(std::size_t(train.rows()));
    for (Eigen::Index q = 0; q < B.rows(); ++q) {
        for (Eigen::Index i = 0; i < A.rows(); ++i)
            dist[std::size_t(i)] = {(A.row(i) - B.row(q)).squaredNorm(), train_labels[std::size_t(i)]};
        // Equal distances resolve by label, so the neighbour multiset ignores row order.
        std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
        std::map<int, std::pair<int, double>> votes;  // label -> (count, summed distance)
        for (int j = 0; j < k; ++j) {
            auto& v = votes[dist[std::size_t(j)].second];
            ++v.first;
            v.second += dist[std::size_t(j)].first;
        }
        int best = 0;
        std::pair<int, double> best_vote{-1, 0.0};
        for (const auto& [label, v] : votes)  // increasing label order
            if (v.first > best_vote.first || (v.first == best_vote.first && v.second < best_vote.second)) {
                best = label;
                best_vote = v;
            }
        out.push_back(best);
    }
    return out;
}

std::vector<int> knn_predict(const StackedBatch& train, const StackedBatch& test, const MetricStateXd& L, int k) {
    return knn_predict(train.Z, train.labels, test.Z, L.L(), k);
}

double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth) {
    if (predicted.size() != truth.size() || truth.empty())
        throw ShapeError("accuracy: " + std::to_string(predicted.size()) + " predictions for " +
                         std::to_string(truth.size()) + " labels");
    std::size_t hit = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) hit += predicted[i] == truth[i];
    return double(hit) / double(truth.size());
}

std::string variant_name(VariantKind v) {
    switch (v) {
        case VariantKind::Full: return "full";
        case VariantKind::WoT: return "woT";
        case VariantKind::WoI: return "woI";
        case VariantKind::WoW: return "woW";
        case VariantKind::WoLR: return "woLR";
    }
    return "full";
}

VariantKind parse_variant(const std::string& name) {
    for (auto v : all_variants())
        if (variant_name(v) == name) return v;
    throw ValidationError("unknown variant '" + name + "' (expected full, woT, woI, woW or woLR)");
}

const std::vector<VariantKind>& all_variants() {
    static const std::vector<VariantKind> v{VariantKind::Full, VariantKind::WoT, VariantKind::WoI,
                                            VariantKind::WoW, VariantKind::WoLR};
    return v;
}

void summarize(Report& r) {
    r.runs = int(r.accuracy_runs.size());
    r.accuracy.assign(r.stage_names.size(), Stat{});
    for (std::size_t s = 0; s < r.stage_names.size(); ++s) {
        std::vector<double> v;
        for (const auto& run : r.accuracy_runs) {
            if (run.size() != r.stage_names.size())
                throw ShapeError("report: run has " + std::to_string(run.size()) + " accuracies for " +
                                 std::to_string(r.stage_names.size()) + " stages");
            v.push_back(run[s]);
        }
        if (v.empty()) continue;
        Stat& st = r.accuracy[s];
        st.mean = std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
        double ss = 0;
        for (double x : v) ss += (x - st.mean) * (x - st.mean);
        st.sd = v.size() > 1 ? std::sqrt(ss / double(v.size() - 1)) : 0.0;
        st.min = *std::min_element(v.begin(), v.end());
        st.max = *std::max_element(v.begin(), v.end());
        // keep the mean inside [min, max] despite rounding
        st.mean = std::clamp(st.mean, st.min, st.max);
    }
}

Report aggregate_runs(const std::vector<Report>& reports) {
    if (reports.empty()) throw ValidationError("aggregate_runs: no reports");
    Report out;
    const Report& first = reports.front();
    out.variant = first.variant;
    out.scenario = first.scenario;
    out.stage_names = first.stage_names;
    out.traces = first.traces;
    for (const auto& r : reports) {
        if (r.variant != first.variant || r.scenario != first.scenario || r.stage_names != first.stage_names)
            throw ValidationError("aggregate_runs: reports come from different configurations");
        out.accuracy_runs.insert(out.accuracy_runs.end(), r.accuracy_runs.begin(), r.accuracy_runs.end());
        out.seeds.insert(out.seeds.end(), r.seeds.begin(), r.seeds.end());
        out.timings.tstage_s += r.timings.tstage_s / double(reports.size());
        out.timings.istage_s += r.timings.istage_s / double(reports.size());
        out.timings.eval_s += r.timings.eval_s / double(reports.size());
    }
    summarize(out);
    out.runs = int(reports.size());
    return out;
}

}  // namespace eml
