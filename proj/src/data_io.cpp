#include "eml/data_io.hpp"

#include "eml/random.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

namespace eml {

namespace {

std::string where(std::size_t line) { return "line " + std::to_string(line) + ": "; }

bool parse_int(std::string_view s, int& out) {
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
    return r.ec == std::errc() && r.ptr == s.data() + s.size();
}

bool parse_double(std::string_view s, double& out) {
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
    return r.ec == std::errc() && r.ptr == s.data() + s.size() && std::isfinite(out);
}

/// Integral label, also accepting "1.0"-style spellings.
bool parse_label(std::string_view s, int& out) {
    if (parse_int(s, out)) return true;
    double v = 0;
    if (!parse_double(s, v) || v != std::floor(v) || std::abs(v) > 1e9) return false;
    out = int(v);
    return true;
}

std::string format_double(double v) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

std::vector<std::string_view> split_fields(std::string_view line, char delim) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(delim, start);
        out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::ifstream open_or_throw(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path);
    return in;
}

}  // namespace

LabeledData parse_sparse_text(std::istream& in, Eigen::Index dim) {
    std::vector<int> labels;
    std::vector<std::vector<std::pair<Eigen::Index, double>>> rows;
    Eigen::Index width = 0;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string_view rest = trim(line);
        if (rest.empty() || rest.front() == '#') continue;
        std::istringstream tokens{std::string(rest)};
        std::string tok;
        tokens >> tok;
        int label = 0;
        if (!parse_label(tok, label)) throw ParseError(where(lineno) + "bad label '" + tok + "'");
        std::vector<std::pair<Eigen::Index, double>> entries;
        Eigen::Index last = 0;
        while (tokens >> tok) {
            const auto colon = tok.find(':');
            int idx = 0;
            double val = 0;
            if (colon == std::string::npos || !parse_int(std::string_view(tok).substr(0, colon), idx) ||
                !parse_double(std::string_view(tok).substr(colon + 1), val))
                throw ParseError(where(lineno) + "malformed entry '" + tok + "'");
            if (idx < 1) throw ParseError(where(lineno) + "index " + std::to_string(idx) + " is not 1-based");
            if (idx <= last)
                throw ParseError(where(lineno) + "indices not strictly increasing at " + std::to_string(idx));
            if (dim > 0 && idx > dim)
                throw ParseError(where(lineno) + "index " + std::to_string(idx) + " exceeds dimension " +
                                 std::to_string(dim));
            last = idx;
            entries.emplace_back(idx - 1, val);
        }
        width = std::max(width, last);
        labels.push_back(label);
        rows.push_back(std::move(entries));
    }
    LabeledData out;
    out.X = MatrixXd::Zero(Eigen::Index(rows.size()), dim > 0 ? dim : width);
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (const auto& [c, v] : rows[r]) out.X(Eigen::Index(r), c) = v;
    out.y = std::move(labels);
    return out;
}

LabeledData parse_sparse_text_file(const std::string& path, Eigen::Index dim) {
    auto in = open_or_throw(path);
    try {
        return parse_sparse_text(in, dim);
    } catch (const ParseError& e) {
        throw ParseError(path + ": " + e.what());
    }
}

void write_sparse_text(std::ostream& out, const MatrixXd& X, const std::vector<int>& y) {
    if (Eigen::Index(y.size()) != X.rows()) throw ShapeError("write_sparse_text: label count mismatch");
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        out << y[std::size_t(i)];
        for (Eigen::Index j = 0; j < X.cols(); ++j)
            if (X(i, j) != 0.0) out << ' ' << (j + 1) << ':' << format_double(X(i, j));
        out << '\n';
    }
}

LabeledData parse_delimited(std::istream& in, const DelimitedFormat& fmt) {
    std::vector<int> labels;
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t lineno = 0;
    std::size_t width = 0;
    bool skipped_header = !fmt.header;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        if (!skipped_header) {
            skipped_header = true;
            continue;
        }
        const auto fields = split_fields(line, fmt.delimiter);
        if (width == 0) {
            width = fields.size();
            if (width < 2) throw ParseError(where(lineno) + "need a label and at least one feature");
        } else if (fields.size() != width) {
            throw ParseError(where(lineno) + "expected " + std::to_string(width) + " fields, found " +
                             std::to_string(fields.size()));
        }
        const long lc = fmt.label_column < 0 ? long(width) + fmt.label_column : fmt.label_column;
        if (lc < 0 || lc >= long(width))
            throw ParseError(where(lineno) + "label column " + std::to_string(fmt.label_column) +
                             " outside " + std::to_string(width) + " fields");
        std::vector<double> row;
        for (std::size_t c = 0; c < fields.size(); ++c) {
            const auto cell = trim(fields[c]);
            if (long(c) == lc) {
                int label = 0;
                if (!parse_label(cell, label))
                    throw ParseError(where(lineno) + "column " + std::to_string(c + 1) + ": bad label '" +
                                     std::string(cell) + "'");
                labels.push_back(label);
            } else {
                double v = 0;
                if (!parse_double(cell, v))
                    throw ParseError(where(lineno) + "column " + std::to_string(c + 1) + ": non-numeric cell '" +
                                     std::string(cell) + "'");
                row.push_back(v);
            }
        }
        rows.push_back(std::move(row));
    }
    LabeledData out;
    out.X.resize(Eigen::Index(rows.size()), width == 0 ? 0 : Eigen::Index(width) - 1);
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows[r].size(); ++c) out.X(Eigen::Index(r), Eigen::Index(c)) = rows[r][c];
    out.y = std::move(labels);
    return out;
}

LabeledData parse_delimited_file(const std::string& path, const DelimitedFormat& fmt) {
    auto in = open_or_throw(path);
    try {
        return parse_delimited(in, fmt);
    } catch (const ParseError& e) {
        throw ParseError(path + ": " + e.what());
    }
}

void write_delimited(std::ostream& out, const MatrixXd& X, const std::vector<int>& y, const DelimitedFormat& fmt) {
    if (Eigen::Index(y.size()) != X.rows()) throw ShapeError("write_delimited: label count mismatch");
    const long width = long(X.cols()) + 1;
    const long lc = fmt.label_column < 0 ? width + fmt.label_column : fmt.label_column;
    if (lc < 0 || lc >= width) throw ValidationError("write_delimited: label column out of range");
    if (fmt.header) {
        for (long c = 0, f = 0; c < width; ++c) {
            if (c) out << fmt.delimiter;
            if (c == lc) out << "label";
            else out << 'x' << ++f;
        }
        out << '\n';
    }
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        for (long c = 0, f = 0; c < width; ++c) {
            if (c) out << fmt.delimiter;
            if (c == lc) out << y[std::size_t(i)];
            else out << format_double(X(i, f++));
        }
        out << '\n';
    }
}

LabelMap remap_labels(const std::vector<int>& y) {
    LabelMap m;
    const std::set<int> distinct(y.begin(), y.end());
    m.classes.assign(distinct.begin(), distinct.end());
    std::map<int, int> index;
    for (std::size_t c = 0; c < m.classes.size(); ++c) index[m.classes[c]] = int(c);
    m.y.reserve(y.size());
    for (int v : y) m.y.push_back(index[v]);
    return m;
}

LabeledData filter_classes(const LabeledData& data, const std::vector<int>& keep) {
    if (keep.empty()) return data;
    const std::set<int> k(keep.begin(), keep.end());
    std::vector<Eigen::Index> rows;
    for (std::size_t i = 0; i < data.y.size(); ++i)
        if (k.count(data.y[i])) rows.push_back(Eigen::Index(i));
    LabeledData out;
    out.X.resize(Eigen::Index(rows.size()), data.X.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        out.X.row(Eigen::Index(r)) = data.X.row(rows[r]);
        out.y.push_back(data.y[std::size_t(rows[r])]);
    }
    return out;
}

FeatureSplit split_features(Eigen::Index d) {
    if (d < 4) throw ValidationError("split_features: need at least 4 features, got " + std::to_string(d));
    const Eigen::Index v = (d + 3) / 4, n = d / 4;
    return {v, d - v - n, n};
}

const std::vector<DatasetSpec>& dataset_presets() {
    static const std::vector<DatasetSpec> presets = {
        {"EV-Action", 20, {}, {1024, 1024, 75}, {500, 600, 700}, 4200, "pre-extracted skeleton/RGB descriptors"},
        {"Mnist0vs5", 2, {0, 5}, split_features(455), {80, 160, 320}, 3200, "MNIST digits 0 and 5"},
        {"Mnist0vs3vs5", 3, {0, 3, 5}, {123, 245, 121}, {120, 240, 480}, 4800, "MNIST digits 0, 3 and 5"},
        {"Splice", 2, {}, {10, 40, 10}, {80, 160, 320}, 2240, "splice sparse-text release (60 features)"},
        {"Gisette", 2, {}, split_features(4955), {100, 200, 300}, 6000, "gisette sparse-text release"},
        {"USPS0vs5", 2, {0, 5}, split_features(256), {120, 160, 240}, 960, "USPS digits 0 and 5"},
        {"USPS0vs3vs5", 3, {0, 3, 5}, split_features(256), {180, 240, 300}, 1440, "USPS digits 0, 3 and 5"},
        {"Satimage", 3, {}, {10, 18, 8}, {60, 90, 120}, 1080, "satimage sparse-text release (36 features)"},
        {"ImageNet", 1000, {}, split_features(2048), {10000, 12000, 14000}, 1200000, "pre-extracted CNN features"},
        {"PAMAP2", 18, {}, split_features(324), {600, 700, 800}, 7200, "pre-extracted IMU features"},
    };
    return presets;
}

std::optional<DatasetSpec> find_preset(const std::string& name) {
    auto lower = [](std::string s) {
        std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return char(std::tolower(c)); });
        return s;
    };
    for (const auto& p : dataset_presets())
        if (lower(p.name) == lower(name)) return p;
    return std::nullopt;
}

EvolutionSchedule schedule_from_blocks(const std::vector<Eigen::Index>& blocks,
                                       const std::vector<int>& batches_per_stage, int batch_size) {
    EvolutionSchedule s;
    if (blocks.size() < 3) throw ValidationError("schedule: need at least three feature blocks");
    s.shots = int(blocks.size()) - 2;
    s.blocks = blocks;
    s.batches_per_stage = batches_per_stage;
    s.batch_size = batch_size;
    for (int st = 0; st < s.stages(); ++st)
        s.layout_per_stage.push_back(st == 0 ? FeatureLayout::transforming(blocks[0], blocks[1])
                                             : FeatureLayout::inheriting(blocks[st], blocks[st + 1]));
    s.validate();
    return s;
}

EvolutionSchedule one_shot_schedule(const FeatureSplit& split, int t_batches, int batch_size) {
    return schedule_from_blocks({split.vanished, split.survived, split.augmented}, {t_batches, 2}, batch_size);
}

namespace {

/// Places class-sorted rows in a seeded random order and records the stage bookkeeping.
std::vector<StreamBatch> cut_batches(const EvolutionSchedule& schedule, const MatrixXd& rows,
                                     const std::vector<int>& labels, Rng& rng) {
    std::vector<StreamBatch> out;
    Eigen::Index cursor = 0;
    int index = 0;
    for (int st = 1; st <= schedule.stages(); ++st) {
        const ColumnRange cols = schedule.stage_columns(st);
        for (int b = 0; b < schedule.batches_per_stage[std::size_t(st - 1)]; ++b) {
            std::vector<Eigen::Index> order(std::size_t(schedule.batch_size));
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = cursor + Eigen::Index(i);
            for (std::size_t i = order.size(); i > 1; --i)
                std::swap(order[i - 1], order[std::size_t(uniform_index(rng, i))]);
            StreamBatch batch;
            batch.X.resize(schedule.batch_size, cols.size);
            for (std::size_t i = 0; i < order.size(); ++i) {
                batch.X.row(Eigen::Index(i)) = rows.block(order[i], cols.begin, 1, cols.size);
                batch.y.push_back(labels[std::size_t(order[i])]);
            }
            batch.layout = schedule.layout_per_stage[std::size_t(st - 1)];
            batch.batch_index = index++;
            batch.stage = st;
            batch.validate();
            out.push_back(std::move(batch));
            cursor += schedule.batch_size;
        }
    }
    return out;
}

/// Per-class sample counts of batch `b`: as equal as possible, the extra slots rotating
/// over classes from batch to batch.
std::vector<int> class_counts(const EvolutionSchedule& schedule, int classes, int b) {
    if (classes < 2) throw InfeasibleError("stream: need at least two classes, found " + std::to_string(classes));
    if (schedule.batch_size < classes)
        throw InfeasibleError("stream: batch size " + std::to_string(schedule.batch_size) + " cannot hold all " +
                              std::to_string(classes) + " classes");
    const int base = schedule.batch_size / classes, extra = schedule.batch_size % classes;
    std::vector<int> n(std::size_t(classes), base);
    for (int c = 0; c < classes; ++c) n[std::size_t(c)] += ((c - b) % classes + classes) % classes < extra;
    return n;
}

}  // namespace

std::vector<StreamBatch> make_stream(const LabeledData& data, const EvolutionSchedule& schedule, std::uint64_t seed) {
    schedule.validate();
    Eigen::Index width = 0;
    for (auto b : schedule.blocks) width += b;
    if (data.X.cols() != width)
        throw ShapeError("make_stream: data has " + std::to_string(data.X.cols()) + " features, schedule needs " +
                         std::to_string(width));
    if (Eigen::Index(data.y.size()) != data.X.rows()) throw ShapeError("make_stream: label count mismatch");
    std::map<int, std::vector<Eigen::Index>> pools;
    for (std::size_t i = 0; i < data.y.size(); ++i) pools[data.y[i]].push_back(Eigen::Index(i));
    const int batches = schedule.total_batches();
    const int classes = int(pools.size());
    std::vector<std::vector<int>> counts;
    std::vector<std::size_t> need(std::size_t(classes), 0);
    for (int b = 0; b < batches; ++b) {
        counts.push_back(class_counts(schedule, classes, b));
        for (int c = 0; c < classes; ++c) need[std::size_t(c)] += std::size_t(counts.back()[std::size_t(c)]);
    }

    Rng rng(mix_seed(seed, 0x5eed));
    int c = 0;
    for (auto& [label, pool] : pools) {
        if (pool.size() < need[std::size_t(c)])
            throw InfeasibleError("make_stream: class " + std::to_string(label) + " has " +
                                  std::to_string(pool.size()) + " samples, the schedule needs " +
                                  std::to_string(need[std::size_t(c)]));
        for (std::size_t i = pool.size(); i > 1; --i) std::swap(pool[i - 1], pool[std::size_t(uniform_index(rng, i))]);
        ++c;
    }
    // Row block b*n .. (b+1)*n holds batch b, class by class.
    MatrixXd rows(Eigen::Index(batches) * schedule.batch_size, width);
    std::vector<int> labels;
    std::vector<std::size_t> cursor(std::size_t(classes), 0);
    Eigen::Index r = 0;
    for (int b = 0; b < batches; ++b) {
        c = 0;
        for (const auto& [label, pool] : pools) {
            for (int i = 0; i < counts[std::size_t(b)][std::size_t(c)]; ++i) {
                rows.row(r++) = data.X.row(pool[cursor[std::size_t(c)]++]);
                labels.push_back(label);
            }
            ++c;
        }
    }
    return cut_batches(schedule, rows, labels, rng);
}

void SyntheticSpec::validate() const {
    if (classes < 2) throw ValidationError("synthetic.classes must be >= 2");
    if (blocks.size() < 3) throw ValidationError("synthetic.blocks needs at least three feature blocks");
    for (auto b : blocks)
        if (b < 1) throw ValidationError("synthetic.blocks must be positive");
    if (!std::isfinite(separation) || separation < 0) throw ValidationError("synthetic.separation must be >= 0");
    if (nuisance_rank < 0 || !std::isfinite(nuisance) || nuisance < 0)
        throw ValidationError("synthetic.nuisance must be >= 0");
    for (auto b : blocks)
        if (b < classes - 1)
            throw ValidationError("synthetic.blocks: every block needs at least classes-1 = " +
                                  std::to_string(classes - 1) + " features");
    if ((classes - 1) * Eigen::Index(blocks.size()) + nuisance_rank > width())
        throw ValidationError("synthetic: informative plus nuisance directions exceed the feature width");
    if (modes < 1) throw ValidationError("synthetic.modes must be >= 1");
    if (!std::isfinite(mode_spread) || mode_spread < 0) throw ValidationError("synthetic.mode_spread must be >= 0");
    if (!std::isfinite(scale) || scale <= 0) throw ValidationError("synthetic.scale must be > 0");
}

Eigen::Index SyntheticSpec::width() const {
    Eigen::Index w = 0;
    for (auto b : blocks) w += b;
    return w;
}

namespace {

struct Geometry {
    MatrixXd centroids;  // classes x d
    MatrixXd nuisance;   // d x nuisance_rank, orthonormal, orthogonal to the centroids
    MatrixXd modes;      // (classes * modes) x d sub-cluster centres
};

Geometry synthetic_geometry(const SyntheticSpec& spec, std::uint64_t seed) {
    Rng rng(mix_seed(seed, 0x9e0));
    const Eigen::Index d = spec.width(), r = spec.classes - 1, q = spec.nuisance_rank;
    auto gaussian = [&](Eigen::Index rows, Eigen::Index cols) {
        MatrixXd G(rows, cols);
        for (Eigen::Index j = 0; j < cols; ++j)
            for (Eigen::Index i = 0; i < rows; ++i) G(i, j) = standard_normal(rng);
        return G;
    };
    auto orthonormal = [](const MatrixXd& G) -> MatrixXd {
        return Eigen::HouseholderQR<MatrixXd>(G).householderQ() * MatrixXd::Identity(G.rows(), G.cols());
    };
    // Regular simplex: centred unit vectors of R^C have pairwise distance sqrt(2) and
    // span a (C-1)-dimensional subspace.
    const Eigen::Index C = spec.classes;
    const MatrixXd E = MatrixXd::Identity(C, C).rowwise() - VectorXd::Constant(C, 1.0 / double(C)).transpose();
    Eigen::JacobiSVD<MatrixXd> svd(E, Eigen::ComputeThinV);
    const MatrixXd coords = E * svd.matrixV().leftCols(r);  // C x (C-1), same pairwise distances

    // Each block holds its own copy of the simplex in a random (C-1)-dimensional subspace,
    // so every block separates the classes on its own.
    Geometry g;
    g.centroids = MatrixXd::Zero(C, d);
    MatrixXd informative = MatrixXd::Zero(d, r * Eigen::Index(spec.blocks.size()));
    Eigen::Index col = 0;
    for (std::size_t k = 0; k < spec.blocks.size(); ++k) {
        const Eigen::Index w = spec.blocks[k];
        const MatrixXd Qb = orthonormal(gaussian(w, r));
        g.centroids.middleCols(col, w) = (spec.separation / std::sqrt(2.0)) * coords * Qb.transpose();
        informative.block(col, Eigen::Index(k) * r, w, r) = Qb;
        col += w;
    }
    MatrixXd N = gaussian(d, q);
    N -= informative * (informative.transpose() * N);
    g.nuisance = q > 0 ? orthonormal(N) : MatrixXd(d, 0);
    g.modes.resize(C * spec.modes, d);
    for (Eigen::Index c = 0; c < C; ++c)
        for (int m = 0; m < spec.modes; ++m) {
            VectorXd u(d);
            for (Eigen::Index j = 0; j < d; ++j) u(j) = standard_normal(rng);
            const Eigen::Index r = c * spec.modes + m;
            g.modes.row(r) = g.centroids.row(c);
            if (spec.modes > 1) g.modes.row(r) += spec.mode_spread * u.normalized().transpose();
        }
    return g;
}

void fill_samples(const SyntheticSpec& spec, const Geometry& g, const std::vector<int>& counts, Rng& rng,
                  MatrixXd& X, std::vector<int>& y) {
    const Eigen::Index d = spec.width();
    X.resize(std::accumulate(counts.begin(), counts.end(), Eigen::Index(0)), d);
    y.clear();
    Eigen::Index r = 0;
    for (int c = 0; c < spec.classes; ++c)
        for (int i = 0; i < counts[std::size_t(c)]; ++i, ++r) {
            for (Eigen::Index j = 0; j < d; ++j) X(r, j) = standard_normal(rng);
            for (Eigen::Index j = 0; j < g.nuisance.cols(); ++j)
                X.row(r) += (spec.nuisance * standard_normal(rng)) * g.nuisance.col(j).transpose();
            const Eigen::Index m = spec.modes > 1 ? Eigen::Index(uniform_index(rng, std::size_t(spec.modes))) : 0;
            X.row(r) += g.modes.row(c * spec.modes + m);
            X.row(r) *= spec.scale;
            y.push_back(c);
        }
}

}  // namespace

std::vector<StreamBatch> make_synthetic_stream(const SyntheticSpec& spec, const EvolutionSchedule& schedule,
                                               std::uint64_t seed) {
    spec.validate();
    schedule.validate();
    if (spec.blocks != schedule.blocks)
        throw ValidationError("make_synthetic_stream: schedule blocks differ from the synthetic feature blocks");
    const Geometry g = synthetic_geometry(spec, seed);
    Rng rng(mix_seed(seed, 0x5a3));
    const int batches = schedule.total_batches();
    MatrixXd rows(Eigen::Index(batches) * schedule.batch_size, spec.width());
    std::vector<int> labels;
    MatrixXd Xb;
    std::vector<int> yb;
    for (int b = 0; b < batches; ++b) {
        fill_samples(spec, g, class_counts(schedule, spec.classes, b), rng, Xb, yb);
        rows.middleRows(Eigen::Index(b) * schedule.batch_size, schedule.batch_size) = Xb;
        labels.insert(labels.end(), yb.begin(), yb.end());
    }
    return cut_batches(schedule, rows, labels, rng);
}

LabeledData sample_synthetic(const SyntheticSpec& spec, int per_class, std::uint64_t seed) {
    spec.validate();
    if (per_class < 1) throw ValidationError("sample_synthetic: per_class must be >= 1");
    const Geometry g = synthetic_geometry(spec, seed);
    Rng rng(mix_seed(seed, 0x5a4));
    LabeledData out;
    fill_samples(spec, g, std::vector<int>(std::size_t(spec.classes), per_class), rng, out.X, out.y);
    return out;
}

}  // namespace eml
