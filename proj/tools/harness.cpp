#include "harness.hpp"

#include "eml/random.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

namespace eml::cli {

namespace {

using Clock = std::chrono::steady_clock;

[[noreturn]] void bad(const std::string& key, const std::string& what) { throw ValidationError(key + ": " + what); }

const char* kind_of(const Json& j) {
    if (j.is_object()) return "object";
    if (j.is_array()) return "array";
    if (j.is_string()) return "string";
    if (j.is_boolean()) return "boolean";
    if (j.is_number()) return "number";
    return "null";
}

void merge_into(Json& base, const Json& user, const std::string& prefix) {
    if (!user.is_object()) bad(prefix.empty() ? "config" : prefix, "expected an object");
    for (auto it = user.begin(); it != user.end(); ++it) {
        const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (!base.contains(it.key())) bad(key, "unknown key");
        Json& slot = base[it.key()];
        if (std::string(kind_of(slot)) != kind_of(it.value()))
            bad(key, std::string("expected ") + kind_of(slot) + ", got " + kind_of(it.value()));
        if (slot.is_object())
            merge_into(slot, it.value(), key);
        else
            slot = it.value();
    }
}

const Json& at(const Json& doc, const std::string& dotted) {
    const Json* j = &doc;
    std::size_t pos = 0;
    while (true) {
        const auto dot = dotted.find('.', pos);
        j = &j->at(dotted.substr(pos, dot - pos));
        if (dot == std::string::npos) return *j;
        pos = dot + 1;
    }
}

double get_num(const Json& doc, const std::string& key) {
    const Json& j = at(doc, key);
    if (!j.is_number()) bad(key, "expected a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) bad(key, "must be finite");
    return v;
}

long long integral(const Json& j, const std::string& key, long long lo, long long hi) {
    if (!j.is_number()) bad(key, "expected an integer");
    if (j.is_number_float()) {
        const double d = j.get<double>();
        if (!(std::floor(d) == d)) bad(key, "expected an integer");
        if (d < double(lo) || d > double(hi)) bad(key, "out of range");
        return (long long)d;
    }
    if (j.is_number_unsigned() && j.get<unsigned long long>() > (unsigned long long)hi) bad(key, "out of range");
    const long long v = j.get<long long>();
    if (v < lo || v > hi) bad(key, "must be in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    return v;
}

int get_int(const Json& doc, const std::string& key, int lo = std::numeric_limits<int>::min()) {
    return int(integral(at(doc, key), key, lo, std::numeric_limits<int>::max()));
}

std::vector<Eigen::Index> get_blocks(const Json& doc, const std::string& key) {
    std::vector<Eigen::Index> out;
    const Json& arr = at(doc, key);
    for (std::size_t i = 0; i < arr.size(); ++i)
        out.push_back(Eigen::Index(integral(arr[i], key + "[" + std::to_string(i) + "]", 1, 1 << 24)));
    return out;
}

std::vector<int> get_ints(const Json& doc, const std::string& key, int lo) {
    std::vector<int> out;
    const Json& arr = at(doc, key);
    for (std::size_t i = 0; i < arr.size(); ++i)
        out.push_back(int(integral(arr[i], key + "[" + std::to_string(i) + "]", lo, std::numeric_limits<int>::max())));
    return out;
}

/// Re-raises a library ValidationError with the config section prepended when the
/// message does not already carry it.
template <class F>
void within(const std::string& section, F f) {
    try {
        f();
    } catch (const ValidationError& e) {
        const std::string msg = e.what();
        if (msg.rfind(section + ".", 0) == 0 || msg.rfind(section + ":", 0) == 0) throw;
        throw ValidationError(section + "." + msg);
    }
}

LabeledData load_file(const Json& doc, const std::string& key) {
    const Json& data = doc.at("data");
    const std::string path = data.at(key).get<std::string>();
    const std::string source = data.at("source").get<std::string>();
    const Eigen::Index dim = get_int(doc, "data.dim", 0);
    if (source == "sparse") {
        if (path == "-") return parse_sparse_text(std::cin, dim);
        return parse_sparse_text_file(path, dim);
    }
    DelimitedFormat fmt;
    const std::string delim = data.at("delimiter").get<std::string>();
    if (delim.size() != 1) bad("data.delimiter", "must be a single character");
    fmt.delimiter = delim[0];
    fmt.label_column = get_int(doc, "data.label_column");
    fmt.header = data.at("header").get<bool>();
    if (path == "-") return parse_delimited(std::cin, fmt);
    return parse_delimited_file(path, fmt);
}

/// Zero-pads the narrower sample (sparse files omit trailing zero features) and appends.
LabeledData concat(LabeledData a, const LabeledData& b) {
    const Eigen::Index w = std::max(a.X.cols(), b.X.cols());
    MatrixXd X = MatrixXd::Zero(a.X.rows() + b.X.rows(), w);
    X.topLeftCorner(a.X.rows(), a.X.cols()) = a.X;
    X.bottomLeftCorner(b.X.rows(), b.X.cols()) = b.X;
    a.X = std::move(X);
    a.y.insert(a.y.end(), b.y.begin(), b.y.end());
    return a;
}

std::string stem(const std::string& path) {
    auto s = path.substr(path.find_last_of('/') == std::string::npos ? 0 : path.find_last_of('/') + 1);
    const auto dot = s.find('.');
    return dot == std::string::npos || dot == 0 ? s : s.substr(0, dot);
}

void load_data(RunConfig& rc, FeatureSplit& split) {
    const Json& data = rc.doc.at("data");
    const std::string source = data.at("source").get<std::string>();
    const std::string preset_name = data.at("preset").get<std::string>();
    std::optional<DatasetSpec> preset;
    if (!preset_name.empty()) {
        preset = find_preset(preset_name);
        if (!preset) bad("data.preset", "unknown dataset '" + preset_name + "' (see `eml datasets`)");
    }
    const auto split_override = get_blocks(rc.doc, "data.split");
    if (!split_override.empty() && split_override.size() != 3) bad("data.split", "expected [vanished, survived, augmented]");

    if (source == "synthetic") {
        rc.synthetic = true;
        rc.synth.classes = get_int(rc.doc, "data.synthetic.classes");
        rc.synth.blocks = get_blocks(rc.doc, "data.synthetic.blocks");
        rc.synth.separation = get_num(rc.doc, "data.synthetic.separation");
        rc.synth.nuisance_rank = get_int(rc.doc, "data.synthetic.nuisance_rank");
        rc.synth.nuisance = get_num(rc.doc, "data.synthetic.nuisance");
        rc.synth.modes = get_int(rc.doc, "data.synthetic.modes");
        rc.synth.mode_spread = get_num(rc.doc, "data.synthetic.mode_spread");
        rc.synth.scale = get_num(rc.doc, "data.synthetic.scale");
        within("data", [&] { rc.synth.validate(); });
        if (!data.at("path").get<std::string>().empty()) bad("data.path", "only used with sparse or delimited sources");
        if (!split_override.empty()) bad("data.split", "synthetic data takes its blocks from data.synthetic.blocks");
        if (rc.synth.blocks.size() == 3) split = {rc.synth.blocks[0], rc.synth.blocks[1], rc.synth.blocks[2]};
        rc.dataset = data.at("name").get<std::string>().empty() ? "synthetic" : data.at("name").get<std::string>();
        return;
    }
    if (source != "sparse" && source != "delimited")
        bad("data.source", "expected synthetic, sparse or delimited, got '" + source + "'");
    rc.synthetic = false;
    if (data.at("path").get<std::string>().empty()) bad("data.path", "required for " + source + " data");
    LabeledData raw = load_file(rc.doc, "path");
    if (!data.at("test_path").get<std::string>().empty()) raw = concat(std::move(raw), load_file(rc.doc, "test_path"));

    auto keep = get_ints(rc.doc, "data.classes", std::numeric_limits<int>::min());
    if (keep.empty() && preset) keep = preset->class_filter;
    raw = filter_classes(raw, keep);
    if (raw.X.rows() == 0) bad("data.classes", "no samples left after class filtering");
    auto mapped = remap_labels(raw.y);
    if (mapped.classes.size() < 2) bad("data", "need at least two classes, found " + std::to_string(mapped.classes.size()));
    rc.data.X = std::move(raw.X);
    rc.data.y = std::move(mapped.y);

    if (!split_override.empty())
        split = {split_override[0], split_override[1], split_override[2]};
    else if (preset)
        split = preset->split;
    else
        within("data", [&] { split = split_features(rc.data.X.cols()); });
    if (split.total() != rc.data.X.cols())
        bad(split_override.empty() ? "data.preset" : "data.split",
            "split covers " + std::to_string(split.total()) + " features but the data has " +
                std::to_string(rc.data.X.cols()));
    const std::string name = data.at("name").get<std::string>();
    rc.dataset = !name.empty() ? name : preset ? preset->name : data.at("path").get<std::string>() == "-" ? "stdin" : stem(data.at("path").get<std::string>());
}

void build_schedule(RunConfig& rc, const FeatureSplit& split) {
    const Json& sc = rc.doc.at("scenario");
    const std::string kind = sc.at("kind").get<std::string>();
    const int n = get_int(rc.doc, "scenario.batch_size");
    const int tb = get_int(rc.doc, "scenario.t_batches");
    if (n < 1) bad("scenario.batch_size", "must be >= 1");
    if (tb < 1) bad("scenario.t_batches", "must be >= 1");
    auto blocks = get_blocks(rc.doc, "scenario.blocks");
    auto per_stage = get_ints(rc.doc, "scenario.batches_per_stage", 1);
    rc.task = TaskKind::TaskI;
    within("scenario", [&] { rc.task = parse_task(sc.at("task").get<std::string>()); });

    if (kind == "one-shot") {
        rc.multi_shot = false;
        if (!blocks.empty()) bad("scenario.blocks", "only used by multi-shot scenarios");
        if (!per_stage.empty()) bad("scenario.batches_per_stage", "only used by multi-shot scenarios");
        if (rc.synthetic && rc.synth.blocks.size() != 3)
            bad("data.synthetic.blocks", "a one-shot scenario needs exactly three blocks");
        within("scenario", [&] { rc.schedule = one_shot_schedule(split, tb, n); });
        return;
    }
    if (kind != "multi-shot") bad("scenario.kind", "expected one-shot or multi-shot, got '" + kind + "'");
    rc.multi_shot = true;
    if (rc.synthetic) {
        if (!blocks.empty()) bad("scenario.blocks", "synthetic data takes its blocks from data.synthetic.blocks");
        blocks = rc.synth.blocks;
    } else if (blocks.empty()) {
        blocks = {split.vanished, split.survived, split.augmented};
    } else {
        Eigen::Index w = 0;
        for (auto b : blocks) w += b;
        if (w != rc.data.X.cols())
            bad("scenario.blocks", "blocks cover " + std::to_string(w) + " features but the data has " +
                                       std::to_string(rc.data.X.cols()));
    }
    if (per_stage.empty()) {
        per_stage.assign(blocks.size() - 1, 2);
        per_stage.front() = tb;
    }
    if (per_stage.size() + 1 != blocks.size())
        bad("scenario.batches_per_stage", "expected " + std::to_string(blocks.size() - 1) + " entries (one per stage)");
    within("scenario", [&] { rc.schedule = schedule_from_blocks(blocks, per_stage, n); });
}

/// Runs job(i) for i in [0, n) on up to `workers` threads; results keep index order and the
/// lowest-index failure is rethrown.
template <class F>
std::vector<Report> run_jobs(std::size_t n, int workers, F job) {
    std::vector<std::optional<Report>> out(n);
    std::vector<std::exception_ptr> err(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i; (i = next++) < n;) {
            try {
                out[i] = job(i);
            } catch (...) {
                err[i] = std::current_exception();
            }
        }
    };
    const std::size_t threads = std::min<std::size_t>(n, std::size_t(std::max(workers, 1)));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (auto& e : err)
        if (e) std::rethrow_exception(e);
    std::vector<Report> res;
    res.reserve(n);
    for (auto& r : out) res.push_back(std::move(*r));
    return res;
}

Json trace_json(const StageTrace& t, bool full) {
    Json j{{"stage", t.stage},
           {"iterations", t.objective.size()},
           {"converged", t.converged},
           {"damped_updates", t.damped_updates},
           {"batch_offsets", t.batch_offsets},
           {"final_objective", t.objective.empty() ? Json(nullptr) : Json(t.objective.back())}};
    if (full) j["objective"] = t.objective;
    return j;
}

Json result_json(const Report& r, bool traces) {
    Json stages = Json::array();
    for (std::size_t s = 0; s < r.stage_names.size(); ++s) {
        Json runs = Json::array();
        for (const auto& run : r.accuracy_runs) runs.push_back(run[s]);
        stages.push_back({{"stage", r.stage_names[s]},
                          {"mean", r.accuracy[s].mean},
                          {"sd", r.accuracy[s].sd},
                          {"min", r.accuracy[s].min},
                          {"max", r.accuracy[s].max},
                          {"accuracy_runs", runs}});
    }
    Json tr = Json::array();
    for (const auto& t : r.traces) tr.push_back(trace_json(t, traces));
    return {{"variant", r.variant}, {"scenario", r.scenario}, {"runs", r.runs},
            {"seeds", r.seeds},     {"stages", stages},       {"traces", tr}};
}

Json timing_json(const Report& r) {
    return {{"variant", r.variant},
            {"tstage_s", r.timings.tstage_s},
            {"istage_s", r.timings.istage_s},
            {"eval_s", r.timings.eval_s}};
}

/// Echoed configuration: output paths are excluded so reports compare across destinations.
Json echoed(const RunConfig& rc) {
    Json c = rc.doc;
    c.erase("output");
    return c;
}

std::vector<std::uint64_t> seeds_of(const RunConfig& rc) {
    std::vector<std::uint64_t> s;
    for (int r = 0; r < rc.runs; ++r) s.push_back(run_seed(rc.seed, r));
    return s;
}

std::string join(const std::vector<std::string>& cells, char d) {
    std::string out;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out += d;
        out += cells[i];
    }
    return out + "\n";
}

std::vector<std::string> row_prefix(const RunConfig& rc) {
    return {rc.dataset, std::to_string(rc.schedule.batch_size),
            rc.multi_shot ? "multi-shot/" + task_name(rc.task) : "one-shot"};
}

std::vector<Report> aggregate_blocks(const std::vector<Report>& all, std::size_t blocks, int runs) {
    std::vector<Report> out;
    for (std::size_t b = 0; b < blocks; ++b)
        out.push_back(aggregate_runs({all.begin() + long(b * std::size_t(runs)),
                                      all.begin() + long((b + 1) * std::size_t(runs))}));
    return out;
}

}  // namespace

const Json& default_config() {
    static const Json d = [] {
        const Hyperparams hp;
        const TripletConfig tc;
        const SolverOptions so;
        const SyntheticSpec sy;
        return Json{
            {"data",
             {{"source", "synthetic"},
              {"name", ""},
              {"preset", ""},
              {"path", ""},
              {"test_path", ""},
              {"dim", 0},
              {"delimiter", ","},
              {"label_column", 0},
              {"header", false},
              {"classes", Json::array()},
              {"split", Json::array()},
              {"synthetic",
               {{"classes", sy.classes},
                {"blocks", sy.blocks},
                {"separation", sy.separation},
                {"nuisance_rank", sy.nuisance_rank},
                {"nuisance", sy.nuisance},
                {"modes", sy.modes},
                {"mode_spread", sy.mode_spread},
                {"scale", sy.scale}}}}},
            {"scenario",
             {{"kind", "one-shot"},
              {"task", "task1"},
              {"batch_size", 80},
              {"t_batches", 6},
              {"blocks", Json::array()},
              {"batches_per_stage", Json::array()}}},
            {"hp",
             {{"gamma", hp.gamma},
              {"lambda", hp.lambda},
              {"rho", hp.rho},
              {"sigma", hp.sigma},
              {"rank_k", hp.rank_k},
              {"inner_iters", hp.inner_iters},
              {"converge_delta", hp.converge_delta}}},
            {"triplets", {{"n_p", tc.n_p}, {"n_q", tc.n_q}, {"n_k", tc.n_k}, {"per_batch", tc.triplets_per_batch}}},
            {"solver",
             {{"sinkhorn_max_iters", so.sinkhorn_max_iters},
              {"sinkhorn_tolerance", so.sinkhorn_tolerance},
              {"ridge_eps", so.ridge_eps},
              {"curvature_floor", so.curvature_floor}}},
            {"eval", {{"knn_k", 1}}},
            {"variant", "full"},
            {"variants", {"full", "woT", "woI", "woW", "woLR"}},
            {"runs", 10},
            {"seed", 1},
            {"sweep", {{"gamma", Json::array()}, {"lambda", Json::array()}, {"rho", Json::array()}}},
            {"output", {{"report", ""}, {"table", ""}, {"timings", ""}, {"delimiter", ","}, {"traces", true}}},
        };
    }();
    return d;
}

Json merge_config(const Json& user) {
    Json out = default_config();
    merge_into(out, user, "");
    return out;
}

void apply_override(Json& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) bad(assignment, "override must look like key.path=value");
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    Json value = Json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    // Build {"a": {"b": value}} and merge it, so overrides get the same checks as files.
    Json patch = value;
    std::size_t end = key.size();
    while (true) {
        const auto dot = key.rfind('.', end - 1);
        const std::string part = key.substr(dot == std::string::npos ? 0 : dot + 1,
                                            end - (dot == std::string::npos ? 0 : dot + 1));
        if (part.empty()) bad(key, "empty key component");
        patch = Json{{part, patch}};
        if (dot == std::string::npos) break;
        end = dot;
    }
    // A string-typed key given a bare word such as 1e-3 or true keeps the literal text.
    try {
        merge_into(cfg, patch, "");
    } catch (const ValidationError&) {
        if (value.is_string()) throw;
        Json retry = patch;
        Json* leaf = &retry;
        while (leaf->is_object() && leaf->size() == 1 && leaf->begin().value().is_object()) leaf = &leaf->begin().value();
        leaf->begin().value() = text;
        merge_into(cfg, retry, "");
    }
}

RunConfig parse_config(const Json& merged) {
    RunConfig rc;
    rc.doc = merged;
    const Json& d = rc.doc;

    FeatureSplit split;
    load_data(rc, split);
    build_schedule(rc, split);

    PipelineConfig& p = rc.pipeline;
    p.hp.gamma = get_num(d, "hp.gamma");
    p.hp.lambda = get_num(d, "hp.lambda");
    p.hp.rho = get_num(d, "hp.rho");
    p.hp.sigma = get_num(d, "hp.sigma");
    p.hp.rank_k = get_int(d, "hp.rank_k");
    p.hp.inner_iters = get_int(d, "hp.inner_iters");
    p.hp.converge_delta = get_num(d, "hp.converge_delta");
    within("hp", [&] { p.hp.validate(); });
    p.triplets.n_p = get_int(d, "triplets.n_p");
    p.triplets.n_q = get_int(d, "triplets.n_q");
    p.triplets.n_k = get_int(d, "triplets.n_k");
    p.triplets.triplets_per_batch = get_int(d, "triplets.per_batch");
    within("triplets", [&] { p.triplets.validate(); });
    p.solver.sinkhorn_max_iters = get_int(d, "solver.sinkhorn_max_iters");
    p.solver.sinkhorn_tolerance = get_num(d, "solver.sinkhorn_tolerance");
    p.solver.ridge_eps = get_num(d, "solver.ridge_eps");
    p.solver.curvature_floor = get_num(d, "solver.curvature_floor");
    p.eval.knn_k = get_int(d, "eval.knn_k");
    within("variant", [&] { p.variant = parse_variant(d.at("variant").get<std::string>()); });
    within("solver", [&] { p.validate(); });

    rc.runs = get_int(d, "runs");
    if (rc.runs < 1) bad("runs", "must be >= 1");
    rc.seed = std::uint64_t(integral(d.at("seed"), "seed", 0, std::numeric_limits<long long>::max()));

    std::set<VariantKind> seen;
    for (const auto& v : d.at("variants")) {
        if (!v.is_string()) bad("variants", "expected variant names");
        VariantKind k{};
        within("variants", [&] { k = parse_variant(v.get<std::string>()); });
        if (!seen.insert(k).second) bad("variants", "duplicate variant '" + v.get<std::string>() + "'");
        rc.variants.push_back(k);
    }
    if (rc.variants.empty()) bad("variants", "empty list");

    for (const char* axis : {"gamma", "lambda", "rho"}) {
        const std::string key = std::string("sweep.") + axis;
        GridAxis g{axis, {}, {}};
        for (const auto& v : at(d, key)) {
            double x = 0;
            std::string label;
            if (v.is_number()) {
                x = v.get<double>();
                label = format_double(x);
            } else if (v.is_string()) {
                label = v.get<std::string>();
                char* end = nullptr;
                x = std::strtod(label.c_str(), &end);
                if (label.empty() || *end != '\0') bad(key, "'" + label + "' is not a number");
            } else {
                bad(key, "expected numbers");
            }
            if (!std::isfinite(x) || x < 0) bad(key, "values must be finite and >= 0");
            g.values.push_back(x);
            g.labels.push_back(label);
        }
        if (!g.values.empty()) rc.grid.push_back(std::move(g));
    }

    const Json& o = d.at("output");
    const std::string delim = o.at("delimiter").get<std::string>();
    if (delim.size() != 1) bad("output.delimiter", "must be a single character");
    rc.delimiter = delim[0];
    rc.traces = o.at("traces").get<bool>();
    rc.report_path = o.at("report").get<std::string>();
    rc.table_path = o.at("table").get<std::string>();
    rc.timings_path = o.at("timings").get<std::string>();
    return rc;
}

std::uint64_t run_seed(std::uint64_t seed, int run) { return mix_seed(seed, 0x7000 + std::uint64_t(run)); }

Report run_once(const RunConfig& rc, const PipelineConfig& pipeline, VariantKind v, std::uint64_t stream_seed) {
    const auto stream = rc.synthetic ? make_synthetic_stream(rc.synth, rc.schedule, stream_seed)
                                     : make_stream(rc.data, rc.schedule, stream_seed);
    PipelineConfig p = pipeline;
    p.triplets.rng_seed = mix_seed(stream_seed, 0x7e1);
    Report r = rc.multi_shot ? run_variant(v, stream, rc.schedule, p, rc.task) : run_variant(v, stream, p);
    r.seeds = {stream_seed};
    return r;
}

int workers_from_env() {
    const char* env = std::getenv("EML_WORKERS");
    if (!env) return std::max(1u, std::thread::hardware_concurrency());
    const std::string s = env;
    char* end = nullptr;
    const long v = std::strtol(s.c_str(), &end, 10);
    if (s.empty() || *end != '\0' || v < 1 || v > 4096)
        throw ValidationError("EML_WORKERS must be a positive integer, got '" + s + "'");
    return int(v);
}

Outcome cmd_run(const RunConfig& rc, int workers) {
    const VariantKind v = rc.pipeline.variant;
    const auto all = run_jobs(std::size_t(rc.runs), workers, [&](std::size_t r) {
        return run_once(rc, rc.pipeline, v, run_seed(rc.seed, int(r)));
    });
    const Report agg = aggregate_runs(all);

    Outcome o;
    o.report = {{"command", "run"},
                {"dataset", rc.dataset},
                {"config", echoed(rc)},
                {"seeds", seeds_of(rc)},
                {"results", Json::array({result_json(agg, rc.traces)})}};
    const char d = rc.delimiter;
    o.table = join({"dataset", "n_i", "scenario", "variant", "stage", "runs", "mean", "sd"}, d);
    for (std::size_t s = 0; s < agg.stage_names.size(); ++s) {
        auto row = row_prefix(rc);
        row.insert(row.end(), {agg.variant, agg.stage_names[s], std::to_string(agg.runs),
                               format_double(agg.accuracy[s].mean), format_double(agg.accuracy[s].sd)});
        o.table += join(row, d);
    }
    o.timings = {{"command", "run"}, {"results", Json::array({timing_json(agg)})}};
    return o;
}

Outcome cmd_ablate(const RunConfig& rc, int workers) {
    std::vector<VariantKind> variants = rc.variants;
    if (std::find(variants.begin(), variants.end(), VariantKind::Full) == variants.end())
        variants.insert(variants.begin(), VariantKind::Full);
    const std::size_t runs = std::size_t(rc.runs);
    const auto all = run_jobs(variants.size() * runs, workers, [&](std::size_t i) {
        return run_once(rc, rc.pipeline, variants[i / runs], run_seed(rc.seed, int(i % runs)));
    });
    const auto aggs = aggregate_blocks(all, variants.size(), rc.runs);
    const auto full_at = std::size_t(std::find(variants.begin(), variants.end(), VariantKind::Full) - variants.begin());
    const Report& full = aggs[full_at];

    Outcome o;
    Json results = Json::array(), timings = Json::array();
    const char d = rc.delimiter;
    o.table = join({"dataset", "n_i", "scenario", "variant", "stage", "runs", "mean", "sd", "delta_vs_full"}, d);
    for (const auto& a : aggs) {
        Json r = result_json(a, rc.traces);
        Json deltas = Json::array();
        for (std::size_t s = 0; s < a.stage_names.size(); ++s) {
            const double delta = a.accuracy[s].mean - full.accuracy[s].mean;
            deltas.push_back(delta);
            auto row = row_prefix(rc);
            row.insert(row.end(), {a.variant, a.stage_names[s], std::to_string(a.runs), format_double(a.accuracy[s].mean),
                                   format_double(a.accuracy[s].sd), format_double(delta)});
            o.table += join(row, d);
        }
        r["delta_vs_full"] = deltas;
        results.push_back(r);
        timings.push_back(timing_json(a));
    }
    o.report = {{"command", "ablate"},
                {"dataset", rc.dataset},
                {"config", echoed(rc)},
                {"seeds", seeds_of(rc)},
                {"results", results}};
    o.timings = {{"command", "ablate"}, {"results", timings}};
    return o;
}

Outcome cmd_sweep(const RunConfig& rc, int workers) {
    if (rc.grid.empty()) throw ValidationError("sweep: empty grid (set sweep.gamma, sweep.lambda or sweep.rho)");
    // Cartesian product, first axis slowest.
    std::vector<std::vector<std::size_t>> points{{}};
    for (const auto& axis : rc.grid) {
        std::vector<std::vector<std::size_t>> next;
        for (const auto& p : points)
            for (std::size_t i = 0; i < axis.values.size(); ++i) {
                next.push_back(p);
                next.back().push_back(i);
            }
        points = std::move(next);
    }
    std::vector<PipelineConfig> configs;
    for (const auto& p : points) {
        PipelineConfig c = rc.pipeline;
        for (std::size_t a = 0; a < rc.grid.size(); ++a) {
            const double v = rc.grid[a].values[p[a]];
            if (rc.grid[a].key == "gamma") c.hp.gamma = v;
            if (rc.grid[a].key == "lambda") c.hp.lambda = v;
            if (rc.grid[a].key == "rho") c.hp.rho = v;
        }
        configs.push_back(c);
    }
    const std::size_t runs = std::size_t(rc.runs);
    const auto all = run_jobs(configs.size() * runs, workers, [&](std::size_t i) {
        return run_once(rc, configs[i / runs], rc.pipeline.variant, run_seed(rc.seed, int(i % runs)));
    });
    const auto aggs = aggregate_blocks(all, configs.size(), rc.runs);

    Outcome o;
    Json results = Json::array(), timings = Json::array();
    const char d = rc.delimiter;
    std::vector<std::string> header{"dataset", "n_i", "scenario"};
    for (const auto& axis : rc.grid) header.push_back(axis.key);
    header.insert(header.end(), {"variant", "stage", "runs", "mean", "sd"});
    o.table = join(header, d);
    for (std::size_t c = 0; c < aggs.size(); ++c) {
        const Report& a = aggs[c];
        Json point = Json::object();
        for (std::size_t ax = 0; ax < rc.grid.size(); ++ax) point[rc.grid[ax].key] = rc.grid[ax].values[points[c][ax]];
        Json r = result_json(a, rc.traces);
        r["point"] = point;
        results.push_back(r);
        Json t = timing_json(a);
        t["point"] = point;
        timings.push_back(t);
        for (std::size_t s = 0; s < a.stage_names.size(); ++s) {
            auto row = row_prefix(rc);
            for (std::size_t ax = 0; ax < rc.grid.size(); ++ax) row.push_back(rc.grid[ax].labels[points[c][ax]]);
            row.insert(row.end(), {a.variant, a.stage_names[s], std::to_string(a.runs), format_double(a.accuracy[s].mean),
                                   format_double(a.accuracy[s].sd)});
            o.table += join(row, d);
        }
    }
    o.report = {{"command", "sweep"},
                {"dataset", rc.dataset},
                {"config", echoed(rc)},
                {"seeds", seeds_of(rc)},
                {"results", results}};
    o.timings = {{"command", "sweep"}, {"results", timings}};
    return o;
}

std::string cmd_datasets(char d) {
    auto joined = [](const auto& v) {
        std::string s;
        for (const auto& x : v) s += (s.empty() ? "" : " ") + std::to_string(x);
        return s;
    };
    std::string out = join({"name", "kind", "classes", "class_filter", "split", "batch_sizes", "train_total", "notes"}, d);
    const SyntheticSpec sy;
    out += join({"synthetic", "synthetic", std::to_string(sy.classes), "", "10/20/10", "", "",
                 "data.source=synthetic; blocks/separation/modes/scale under data.synthetic"},
                d);
    out += join({"synthetic-multishot", "synthetic", std::to_string(sy.classes), "", "10/10/10/10", "", "",
                 "scenario.kind=multi-shot with data.synthetic.blocks=[10,10,10,10]"},
                d);
    for (const auto& p : dataset_presets()) {
        const std::string split = std::to_string(p.split.vanished) + "/" + std::to_string(p.split.survived) + "/" +
                                  std::to_string(p.split.augmented);
        out += join({p.name, "file", std::to_string(p.classes), joined(p.class_filter), split, joined(p.batch_sizes),
                     std::to_string(p.train_total), p.source},
                    d);
    }
    return out;
}

std::string format_double(double v) {
    if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
    char buf[40];
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

}  // namespace eml::cli
