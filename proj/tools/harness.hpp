#pragma once

// Experiment harness behind the eml command line: configuration documents, dotted
// overrides, a bounded worker pool over runs, and deterministic report emission.

#include "eml/data_io.hpp"
#include "eml/evolution.hpp"

#include "json.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace eml::cli {

using Json = nlohmann::json;

/// Every accepted key with its default value; unknown keys are rejected against it.
const Json& default_config();

/// Deep-merges `user` over the defaults. Throws ValidationError naming the first unknown
/// key or type mismatch ("hp.gama: unknown key").
Json merge_config(const Json& user);

/// Applies "a.b.c=value"; value is parsed as JSON when possible, else kept as a string.
void apply_override(Json& cfg, const std::string& assignment);

struct GridAxis {
    std::string key;                  ///< "gamma", "lambda" or "rho"
    std::vector<double> values;
    std::vector<std::string> labels;  ///< values as written by the user
};

struct RunConfig {
    Json doc;                         ///< effective configuration, echoed in the report
    std::string dataset;              ///< table label
    bool synthetic = true;
    SyntheticSpec synth;
    LabeledData data;                 ///< file-backed data, labels remapped to 0..C-1
    bool multi_shot = false;
    TaskKind task = TaskKind::TaskI;
    EvolutionSchedule schedule;
    PipelineConfig pipeline;
    int runs = 1;
    std::uint64_t seed = 1;
    std::vector<VariantKind> variants;
    std::vector<GridAxis> grid;       ///< non-empty axes only
    char delimiter = ',';
    bool traces = true;
    std::string report_path;
    std::string table_path;
    std::string timings_path;
};

/// Validates the merged document and loads any file-backed data. Errors name the key.
RunConfig parse_config(const Json& merged);

/// Seed of run r; shared by every variant and grid point.
std::uint64_t run_seed(std::uint64_t seed, int run);

/// One run of one variant on the stream drawn with `stream_seed`.
Report run_once(const RunConfig& rc, const PipelineConfig& pipeline, VariantKind v, std::uint64_t stream_seed);

struct Outcome {
    Json report;
    std::string table;
    Json timings;
};

/// EML_WORKERS when set (must be a positive integer), else the hardware concurrency.
int workers_from_env();

Outcome cmd_run(const RunConfig& rc, int workers);
Outcome cmd_ablate(const RunConfig& rc, int workers);
Outcome cmd_sweep(const RunConfig& rc, int workers);
std::string cmd_datasets(char delimiter = ',');

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

}  // namespace eml::cli
