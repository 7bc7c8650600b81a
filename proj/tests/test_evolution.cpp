#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "support.hpp"

#include "eml/data_io.hpp"
#include "eml/evolution.hpp"

using namespace eml;
using namespace eml::testing;

namespace {

PipelineConfig small_config() {
    PipelineConfig c;
    c.triplets.n_p = c.triplets.n_q = c.triplets.n_k = 3;
    c.triplets.triplets_per_batch = 6;
    c.hp.inner_iters = 20;
    return c;
}

SyntheticSpec small_spec(double separation) {
    SyntheticSpec s;
    s.blocks = {4, 6, 4};
    s.separation = separation;
    return s;
}

}  // namespace

TEST_CASE("one-shot pipeline") {
    const auto sched = one_shot_schedule({4, 6, 4}, 2, 18);
    const auto stream = make_synthetic_stream(small_spec(10), sched, 3);
    const auto cfg = small_config();
    const auto r = run_one_shot(stream, cfg);
    CHECK(r.scenario == "one-shot");
    CHECK(r.variant == "full");
    REQUIRE(r.stage_names == std::vector<std::string>{"stage2"});
    CHECK(r.accuracy[0].mean == 1.0);
    REQUIRE(r.traces.size() == 2);
    CHECK(r.traces[0].stage == "stage1/T");
    CHECK(r.traces[0].batch_offsets.size() == 2);
    CHECK(r.traces[1].stage == "stage2/I");

    const auto again = run_one_shot(stream, cfg);
    CHECK(again.accuracy_runs == r.accuracy_runs);
    CHECK(again.traces[0].objective == r.traces[0].objective);

    CHECK_THROWS_AS(run_one_shot({stream[0], stream[2]}, cfg), ValidationError);
    CHECK_THROWS_AS(run_one_shot({stream[0], stream[1], stream[2]}, cfg), ValidationError);
    CHECK_THROWS_AS(run_one_shot({stream[2], stream[3], stream[0]}, cfg), ValidationError);
}

TEST_CASE("variants switch stages off") {
    const auto sched = one_shot_schedule({4, 6, 4}, 2, 18);
    const auto stream = make_synthetic_stream(small_spec(3), sched, 8);
    const auto cfg = small_config();
    const auto wot = run_variant(VariantKind::WoT, stream, cfg);
    CHECK(wot.variant == "woT");
    REQUIRE(wot.traces.size() == 1);
    CHECK(wot.traces[0].stage == "stage2/I");
    const auto woi = run_variant(VariantKind::WoI, stream, cfg);
    REQUIRE(woi.traces.size() == 1);
    CHECK(woi.traces[0].stage == "stage1/T");
    CHECK(run_variant(VariantKind::WoW, stream, cfg).variant == "woW");
    CHECK(apply_variant(cfg, VariantKind::WoW).solver.distance == SignatureDistance::Barycenter);
    CHECK(apply_variant(cfg, VariantKind::WoLR).solver.regularizer == Regularizer::Frobenius);
    CHECK(apply_variant(cfg, VariantKind::WoT).solver.regularizer == Regularizer::TraceNorm);
}

TEST_CASE("multi-shot tasks") {
    SyntheticSpec spec = small_spec(10);
    spec.blocks = {4, 4, 4, 4};
    const auto sched = schedule_from_blocks(spec.blocks, {3, 2, 2}, 18);
    const auto stream = make_synthetic_stream(spec, sched, 5);
    const auto cfg = small_config();

    const auto t1 = run_multi_shot(stream, sched, cfg, TaskKind::TaskI);
    CHECK(t1.scenario == "multi-shot/task1");
    REQUIRE(t1.stage_names == std::vector<std::string>{"stage3"});
    CHECK(t1.accuracy[0].mean == 1.0);

    const auto t2 = run_multi_shot(stream, sched, cfg, TaskKind::TaskII);
    REQUIRE(t2.stage_names == std::vector<std::string>{"stage1", "stage2", "stage3"});
    for (const auto& s : t2.accuracy) CHECK(s.mean == 1.0);
    std::vector<std::string> names;
    for (const auto& t : t2.traces) names.push_back(t.stage);
    CHECK(names == std::vector<std::string>{"stage1/T", "stage2/I", "stage2/T", "stage3/I"});

    for (auto v : all_variants()) {
        const auto r = run_variant(v, stream, sched, cfg, TaskKind::TaskII);
        CHECK(r.accuracy.size() == 3);
    }

    CHECK_THROWS_AS(run_multi_shot({stream.begin(), stream.end() - 1}, sched, cfg, TaskKind::TaskI), ValidationError);
    const auto thin = schedule_from_blocks(spec.blocks, {1, 2, 2}, 18);
    const auto thin_stream = make_synthetic_stream(spec, thin, 5);
    CHECK_NOTHROW(run_multi_shot(thin_stream, thin, cfg, TaskKind::TaskI));
    CHECK_THROWS_AS(run_multi_shot(thin_stream, thin, cfg, TaskKind::TaskII), ValidationError);
    CHECK(parse_task("task2") == TaskKind::TaskII);
    CHECK_THROWS_AS(parse_task("3"), ValidationError);
}

TEST_CASE("pipeline config validation") {
    PipelineConfig c;
    c.hp.gamma = -1;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c = PipelineConfig{};
    c.eval.knn_k = 0;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c = PipelineConfig{};
    c.solver.sinkhorn_tolerance = 0;
    CHECK_THROWS_AS(c.validate(), ValidationError);
}
