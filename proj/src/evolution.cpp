#include "eml/evolution.hpp"

#include "eml/random.hpp"

#include <chrono>

namespace eml {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

StageTrace trace_of(const std::string& name, const TStageState& s) {
    return {name, s.objective_trace, s.batch_offsets, s.converged, s.damped_updates};
}

StageTrace trace_of(const std::string& name, const IStageState& s) {
    return {name, s.objective_trace, {0}, s.converged, s.damped_updates};
}

bool skips_tstage(const PipelineConfig& c) { return c.variant == VariantKind::WoT; }
bool skips_istage(const PipelineConfig& c) { return c.variant == VariantKind::WoI; }

TripletConfig stage_triplets(const PipelineConfig& c, int stage) {
    TripletConfig t = c.triplets;
    t.rng_seed = mix_seed(c.triplets.rng_seed, 0x57a9e000ULL + std::uint64_t(stage));
    return t;
}

/// L_z learned on stacked data, or its truncated-identity initialisation (woI).
IStageState inherit(const StackedBatch& train, const PipelineConfig& cfg, int stage) {
    if (skips_istage(cfg)) {
        IStageState s = IStageState::initial(train.embedded, train.Z.cols(), cfg.solver.ridge_eps);
        s.converged = true;
        return s;
    }
    Hyperparams hp = cfg.hp;
    hp.rank_k = int(train.embedded);
    return run_istage(train, hp, stage_triplets(cfg, stage), cfg.solver);
}

struct OneShotParts {
    std::vector<StreamBatch> tbatches;
    const StreamBatch* train = nullptr;
    const StreamBatch* test = nullptr;
};

OneShotParts split_one_shot(const std::vector<StreamBatch>& stream) {
    if (stream.size() < 3)
        throw ValidationError("one-shot stream needs at least 3 batches (T-stage, I-stage, test), got " +
                              std::to_string(stream.size()));
    OneShotParts p;
    std::size_t i = 0;
    for (; i < stream.size() && stream[i].layout.is_transforming(); ++i) p.tbatches.push_back(stream[i]);
    if (p.tbatches.empty()) throw ValidationError("one-shot stream must start with transforming batches");
    if (stream.size() - i != 2)
        throw ValidationError("one-shot stream needs exactly 2 inheriting batches after the T-stage, got " +
                              std::to_string(stream.size() - i));
    p.train = &stream[i];
    p.test = &stream[i + 1];
    const FeatureLayout& tl = p.tbatches.front().layout;
    for (const StreamBatch* b : {p.train, p.test}) {
        if (!b->layout.is_inheriting() || b->layout.survived.size != tl.survived.size)
            throw ValidationError("batch " + std::to_string(b->batch_index) +
                                  " does not carry the survived block of the T-stage");
        if (b->layout != p.train->layout)
            throw ValidationError("I-stage and test batches have different layouts");
    }
    return p;
}

struct OneShotOutcome {
    double accuracy = 0;
    MetricStateXd L_surv;
    IStageState istage;
    std::vector<StageTrace> traces;
    Timings timings;
};

OneShotOutcome one_shot_core(const OneShotParts& parts, const PipelineConfig& cfg, int t_stage_no) {
    OneShotOutcome out;
    const FeatureLayout& tl = parts.tbatches.front().layout;
    auto t0 = Clock::now();
    if (skips_tstage(cfg)) {
        out.L_surv = MetricStateXd::truncated_identity(cfg.hp.resolved_rank(tl.survived.size), tl.survived.size,
                                                       cfg.solver.ridge_eps);
    } else {
        const auto ts = run_tstage(parts.tbatches, cfg.hp, cfg.triplets, cfg.solver);
        out.L_surv = ts.L_surv;
        out.traces.push_back(trace_of("stage" + std::to_string(t_stage_no) + "/T", ts));
    }
    out.timings.tstage_s = seconds_since(t0);

    t0 = Clock::now();
    const StackedBatch train = stack_batch(*parts.train, out.L_surv);
    out.istage = inherit(train, cfg, t_stage_no + 1);
    if (!skips_istage(cfg)) out.traces.push_back(trace_of("stage" + std::to_string(t_stage_no + 1) + "/I", out.istage));
    out.timings.istage_s = seconds_since(t0);

    t0 = Clock::now();
    const StackedBatch test = stack_batch(*parts.test, out.L_surv);
    out.accuracy = accuracy(knn_predict(train, test, out.istage.L_z, cfg.eval.knn_k), test.labels);
    out.timings.eval_s = seconds_since(t0);
    return out;
}

Report make_report(const PipelineConfig& cfg, const std::string& scenario, std::vector<std::string> stages,
                   std::vector<double> acc, std::vector<StageTrace> traces, Timings t) {
    Report r;
    r.variant = variant_name(cfg.variant);
    r.scenario = scenario;
    r.stage_names = std::move(stages);
    r.accuracy_runs = {std::move(acc)};
    r.seeds = {cfg.triplets.rng_seed};
    r.traces = std::move(traces);
    r.timings = t;
    summarize(r);
    return r;
}

std::vector<std::vector<StreamBatch>> by_stage(const std::vector<StreamBatch>& stream,
                                               const EvolutionSchedule& schedule) {
    schedule.validate();
    std::vector<std::vector<StreamBatch>> stages(std::size_t(schedule.stages()));
    int last = 1;
    for (const auto& b : stream) {
        if (b.stage < 1 || b.stage > schedule.stages())
            throw ValidationError("batch " + std::to_string(b.batch_index) + " belongs to stage " +
                                  std::to_string(b.stage) + ", schedule has " + std::to_string(schedule.stages()));
        if (b.stage < last) throw ValidationError("stream batches are not ordered by stage");
        last = b.stage;
        stages[std::size_t(b.stage - 1)].push_back(b);
    }
    for (int s = 0; s < schedule.stages(); ++s) {
        const auto& v = stages[std::size_t(s)];
        if (int(v.size()) != schedule.batches_per_stage[std::size_t(s)])
            throw ValidationError("stage " + std::to_string(s + 1) + " has " + std::to_string(v.size()) +
                                  " batches, schedule expects " +
                                  std::to_string(schedule.batches_per_stage[std::size_t(s)]));
        for (const auto& b : v) {
            b.validate();
            if (b.layout != schedule.layout_per_stage[std::size_t(s)])
                throw ValidationError("batch " + std::to_string(b.batch_index) + " does not match the layout of stage " +
                                      std::to_string(s + 1));
            if (b.size() != schedule.batch_size)
                throw ValidationError("batch " + std::to_string(b.batch_index) + " has " + std::to_string(b.size()) +
                                      " samples, schedule expects " + std::to_string(schedule.batch_size));
        }
    }
    return stages;
}

StreamBatch as_transforming(StreamBatch b) {
    b.layout = b.layout.as_transforming();
    return b;
}

/// Warm start for a T-stage over [previous survived block, new block]: the metric the
/// stacked space induced on raw features, L_z [L_surv 0; 0 I].
TStageState chained_start(const MetricStateXd& L_surv_prev, const IStageState& is, double ridge) {
    const Eigen::Index k = L_surv_prev.rank_k();
    const MatrixXd& Lz = is.L_z.L();
    const Eigen::Index dn = Lz.cols() - k;
    MatrixXd La(Lz.rows(), L_surv_prev.dim() + dn);
    La.leftCols(L_surv_prev.dim()) = Lz.leftCols(k) * L_surv_prev.L();
    La.rightCols(dn) = Lz.rightCols(dn);
    MatrixXd Ls = Lz.rightCols(dn);
    const VectorXd sv = Eigen::JacobiSVD<MatrixXd>(Ls).singularValues();
    // Reuse the augmented-feature block only while it still has full row rank.
    if (Ls.rows() > Ls.cols() || sv.size() == 0 || sv(sv.size() - 1) <= 1e-3 * std::max(sv(0), 1e-300))
        Ls = MetricStateXd::truncated_identity(Lz.rows(), dn).L();
    TStageState st;
    st.L_all = MetricStateXd(La, ridge);
    st.L_surv = MetricStateXd(Ls, ridge);
    st.anchor_all = st.L_all.L();
    st.anchor_surv = st.L_surv.L();
    return st;
}

}  // namespace

void PipelineConfig::validate() const {
    hp.validate();
    triplets.validate();
    eval.validate();
    if (solver.sinkhorn_max_iters < 1) throw ValidationError("solver.sinkhorn_max_iters must be >= 1");
    if (!(solver.sinkhorn_tolerance > 0)) throw ValidationError("solver.sinkhorn_tolerance must be > 0");
    if (!(solver.ridge_eps >= 0)) throw ValidationError("solver.ridge_eps must be >= 0");
}

std::string task_name(TaskKind t) { return t == TaskKind::TaskI ? "task1" : "task2"; }

TaskKind parse_task(const std::string& name) {
    if (name == "task1" || name == "I" || name == "1") return TaskKind::TaskI;
    if (name == "task2" || name == "II" || name == "2") return TaskKind::TaskII;
    throw ValidationError("unknown task '" + name + "' (expected task1 or task2)");
}

PipelineConfig apply_variant(PipelineConfig cfg, VariantKind v) {
    cfg.variant = v;
    if (v == VariantKind::WoW) cfg.solver.distance = SignatureDistance::Barycenter;
    if (v == VariantKind::WoLR) cfg.solver.regularizer = Regularizer::Frobenius;
    return cfg;
}

Report run_one_shot(const std::vector<StreamBatch>& stream, const PipelineConfig& cfg) {
    cfg.validate();
    const auto parts = split_one_shot(stream);
    const auto o = one_shot_core(parts, cfg, 1);
    return make_report(cfg, "one-shot", {"stage2"}, {o.accuracy}, o.traces, o.timings);
}

Report run_multi_shot(const std::vector<StreamBatch>& stream, const EvolutionSchedule& schedule,
                      const PipelineConfig& cfg, TaskKind task) {
    cfg.validate();
    const auto stages = by_stage(stream, schedule);
    const int M = schedule.shots;
    const std::string scenario = "multi-shot/" + task_name(task);

    if (task == TaskKind::TaskI) {
        OneShotParts parts;
        for (const auto& b : stages[std::size_t(M - 1)]) parts.tbatches.push_back(M == 1 ? b : as_transforming(b));
        parts.train = &stages[std::size_t(M)].front();
        parts.test = &stages[std::size_t(M)].back();
        const auto o = one_shot_core(parts, cfg, M);
        return make_report(cfg, scenario, {"stage" + std::to_string(M + 1)}, {o.accuracy}, o.traces, o.timings);
    }

    // Task II
    const auto& first = stages.front();
    if (first.size() < 2)
        throw ValidationError("task2 needs at least 2 stage-1 batches (one to learn from, one to predict)");
    std::vector<double> acc;
    std::vector<std::string> names;
    std::vector<StageTrace> traces;
    Timings tm;

    // Stage 1: learn on all but the last batch, predict it with the previous batch as reference.
    auto t0 = Clock::now();
    const FeatureLayout& l1 = first.front().layout;
    TStageState ts;
    std::vector<StreamBatch> head(first.begin(), first.end() - 1);
    if (skips_tstage(cfg)) {
        ts = TStageState::initial(cfg.hp.resolved_rank(l1.survived.size), l1.width(), l1.survived.size,
                                  cfg.solver.ridge_eps);
    } else {
        ts = run_tstage(head, cfg.hp, cfg.triplets, cfg.solver);
    }
    tm.tstage_s += seconds_since(t0);
    t0 = Clock::now();
    const StreamBatch& ref = first[first.size() - 2];
    const StreamBatch& probe = first.back();
    acc.push_back(accuracy(knn_predict(ref.X, ref.y, probe.X, ts.L_all.L(), cfg.eval.knn_k), probe.y));
    names.push_back("stage1");
    tm.eval_s += seconds_since(t0);
    t0 = Clock::now();
    if (!skips_tstage(cfg)) {
        ts = run_tstage({probe}, cfg.hp, cfg.triplets, cfg.solver, ts);
        traces.push_back(trace_of("stage1/T", ts));
    }
    tm.tstage_s += seconds_since(t0);
    MetricStateXd L_surv = ts.L_surv;

    for (int s = 2; s <= M + 1; ++s) {
        const auto& batches = stages[std::size_t(s - 1)];
        t0 = Clock::now();
        const StackedBatch train = stack_batch(batches.front(), L_surv);
        const IStageState is = inherit(train, cfg, s);
        if (!skips_istage(cfg)) traces.push_back(trace_of("stage" + std::to_string(s) + "/I", is));
        tm.istage_s += seconds_since(t0);

        t0 = Clock::now();
        const StackedBatch test = stack_batch(batches.back(), L_surv);
        acc.push_back(accuracy(knn_predict(train, test, is.L_z, cfg.eval.knn_k), test.labels));
        names.push_back("stage" + std::to_string(s));
        tm.eval_s += seconds_since(t0);
        if (s == M + 1) break;

        // Next evolution: this stage's survived block vanishes, its augmented block survives.
        t0 = Clock::now();
        std::vector<StreamBatch> tb;
        for (const auto& b : batches) tb.push_back(as_transforming(b));
        const auto& tl = tb.front().layout;
        if (skips_tstage(cfg)) {
            L_surv = MetricStateXd::truncated_identity(cfg.hp.resolved_rank(tl.survived.size), tl.survived.size,
                                                       cfg.solver.ridge_eps);
        } else {
            Hyperparams hp = cfg.hp;
            hp.rank_k = int(L_surv.rank_k());
            const auto chained = run_tstage(tb, hp, cfg.triplets, cfg.solver,
                                            chained_start(L_surv, is, cfg.solver.ridge_eps));
            traces.push_back(trace_of("stage" + std::to_string(s) + "/T", chained));
            L_surv = chained.L_surv;
        }
        tm.tstage_s += seconds_since(t0);
    }
    return make_report(cfg, scenario, names, acc, traces, tm);
}

Report run_variant(VariantKind variant, const std::vector<StreamBatch>& stream, const PipelineConfig& cfg) {
    return run_one_shot(stream, apply_variant(cfg, variant));
}

Report run_variant(VariantKind variant, const std::vector<StreamBatch>& stream, const EvolutionSchedule& schedule,
                   const PipelineConfig& cfg, TaskKind task) {
    return run_multi_shot(stream, schedule, apply_variant(cfg, variant), task);
}

}  // namespace eml
