#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "support.hpp"

#include "eml/data_io.hpp"
#include "eml/eval.hpp"

#include <set>
#include <sstream>

using namespace eml;
using namespace eml::testing;

TEST_CASE("sparse text round trip") {
    std::istringstream in("1 1:0.5 3:-2\n-1 2:1e-3\n\n+1.0 1:4 2:5 3:6\n");
    const auto d = parse_sparse_text(in);
    REQUIRE(d.X.rows() == 3);
    REQUIRE(d.X.cols() == 3);
    CHECK(d.y == std::vector<int>{1, -1, 1});
    CHECK(d.X(0, 0) == 0.5);
    CHECK(d.X(0, 1) == 0.0);
    CHECK(d.X(0, 2) == -2.0);
    CHECK(d.X(1, 1) == 1e-3);
    CHECK(d.X(2, 2) == 6.0);

    std::ostringstream out;
    write_sparse_text(out, d.X, d.y);
    std::istringstream back(out.str());
    const auto e = parse_sparse_text(back, 3);
    CHECK(e.X == d.X);
    CHECK(e.y == d.y);

    Rng rng(3);
    const MatrixXd X = random_matrix(rng, 6, 5);
    std::ostringstream o2;
    write_sparse_text(o2, X, {0, 1, 2, 0, 1, 2});
    std::istringstream i2(o2.str());
    CHECK(parse_sparse_text(i2, 5).X == X);  // shortest round-trip formatting is exact
}

TEST_CASE("sparse text errors name the line") {
    auto fails_on = [](const std::string& text, const std::string& needle, Eigen::Index dim = 0) {
        std::istringstream in(text);
        try {
            parse_sparse_text(in, dim);
        } catch (const ParseError& e) {
            return std::string(e.what()).find(needle) != std::string::npos;
        }
        return false;
    };
    CHECK(fails_on("1 1:2\n1 3:1 2:1\n", "line 2"));
    CHECK(fails_on("1 0:2\n", "line 1"));
    CHECK(fails_on("1 1:2\nx 1:1\n", "line 2"));
    CHECK(fails_on("1 1:abc\n", "line 1"));
    CHECK(fails_on("1 1:2 4:1\n", "line 1", 3));
    CHECK(fails_on("1 2\n", "line 1"));
}

TEST_CASE("delimited round trip and errors") {
    std::istringstream in("f1,f2,label\n1.5,2,0\n-3,4e2,1\n");
    DelimitedFormat fmt;
    fmt.header = true;
    fmt.label_column = -1;
    const auto d = parse_delimited(in, fmt);
    REQUIRE(d.X.rows() == 2);
    CHECK(d.X(1, 1) == 400.0);
    CHECK(d.y == std::vector<int>{0, 1});

    std::ostringstream out;
    write_delimited(out, d.X, d.y, fmt);
    std::istringstream back(out.str());
    const auto e = parse_delimited(back, fmt);
    CHECK(e.X == d.X);
    CHECK(e.y == d.y);

    std::istringstream ragged("0,1,2\n1,2\n");
    CHECK_THROWS_AS(parse_delimited(ragged), ParseError);
    std::istringstream bad("0,1,zz\n");
    try {
        parse_delimited(bad);
        FAIL("expected a parse error");
    } catch (const ParseError& err) {
        CHECK(std::string(err.what()).find("column 3") != std::string::npos);
    }
}

TEST_CASE("labels and class filters") {
    const auto m = remap_labels({7, -1, 7, 3});
    CHECK(m.y == std::vector<int>{2, 0, 2, 1});
    CHECK(m.classes == std::vector<int>{-1, 3, 7});
    LabeledData d{MatrixXd::Identity(4, 4), {0, 3, 5, 3}};
    const auto f = filter_classes(d, {3, 5});
    CHECK(f.y == std::vector<int>{3, 5, 3});
    CHECK(f.X.row(0) == d.X.row(1));
    CHECK(filter_classes(d, {}).y == d.y);
}

TEST_CASE("feature splits") {
    CHECK(split_features(455) == FeatureSplit{114, 228, 113});
    CHECK(split_features(4955) == FeatureSplit{1239, 2478, 1238});
    CHECK(split_features(4) == FeatureSplit{1, 2, 1});
    for (Eigen::Index d = 4; d < 200; ++d) CHECK(split_features(d).total() == d);
    CHECK_THROWS_AS(split_features(3), ValidationError);

    const auto splice = find_preset("SPLICE");
    REQUIRE(splice.has_value());
    CHECK(splice->split == FeatureSplit{10, 40, 10});
    CHECK(find_preset("satimage")->split == FeatureSplit{10, 18, 8});
    CHECK_FALSE(find_preset("nope").has_value());
    for (const auto& p : dataset_presets()) CHECK(p.split.total() > 0);
}

TEST_CASE("schedules") {
    const auto one = one_shot_schedule({2, 3, 4}, 3, 6);
    CHECK(one.total_batches() == 5);
    CHECK(one.layout_per_stage[0] == FeatureLayout::transforming(2, 3));
    CHECK(one.layout_per_stage[1] == FeatureLayout::inheriting(3, 4));
    const auto multi = schedule_from_blocks({2, 3, 4, 5}, {2, 2, 2}, 4);
    CHECK(multi.stages() == 3);
    CHECK(multi.stage_columns(3).begin == 5);
    CHECK(multi.stage_columns(3).size == 9);
    CHECK_THROWS_AS(schedule_from_blocks({2, 3, 4}, {2, 1}, 4), ValidationError);
}

TEST_CASE("make_stream cuts disjoint near-balanced batches") {
    const int n = 200;
    LabeledData d;
    d.X.resize(n, 9);
    for (int i = 0; i < n; ++i) {
        d.X.row(i).setConstant(double(i));
        d.y.push_back(i % 3);
    }
    const auto sched = one_shot_schedule({2, 3, 4}, 3, 10);
    const auto s = make_stream(d, sched, 11);
    REQUIRE(s.size() == 5);
    std::set<double> seen;
    for (const auto& b : s) {
        CHECK(b.size() == 10);
        std::vector<int> count(3, 0);
        for (int y : b.y) ++count[std::size_t(y)];
        CHECK(*std::max_element(count.begin(), count.end()) - *std::min_element(count.begin(), count.end()) <= 1);
        for (Eigen::Index r = 0; r < b.X.rows(); ++r) {
            CHECK(seen.insert(b.X(r, 0)).second);
            CHECK(int(b.X(r, 0)) % 3 == b.y[std::size_t(r)]);  // rows keep their labels
        }
    }
    CHECK(s[0].X.cols() == 5);
    CHECK(s[4].X.cols() == 7);
    CHECK(s[4].stage == 2);
    CHECK(s[3].batch_index == 3);

    const auto again = make_stream(d, sched, 11);
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(again[i].X == s[i].X);
    CHECK_FALSE(make_stream(d, sched, 12)[0].X == s[0].X);

    LabeledData small{d.X.topRows(30), std::vector<int>(d.y.begin(), d.y.begin() + 30)};
    CHECK_THROWS_AS(make_stream(small, sched, 1), InfeasibleError);
}

TEST_CASE("synthetic streams") {
    SyntheticSpec sp;
    sp.blocks = {4, 6, 4};
    const auto sched = one_shot_schedule({4, 6, 4}, 2, 12);
    const auto a = make_synthetic_stream(sp, sched, 5);
    const auto b = make_synthetic_stream(sp, sched, 5);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].X == b[i].X);
        CHECK(a[i].y == b[i].y);
    }
    CHECK_FALSE(make_synthetic_stream(sp, sched, 6)[0].X == a[0].X);

    auto raw_accuracy = [](const SyntheticSpec& s, std::uint64_t seed) {
        // One geometry per seed: split a single sample into reference and query halves.
        const auto all = sample_synthetic(s, 120, seed);
        LabeledData tr, te;
        tr.X.resize(all.X.rows() / 2, s.width());
        te.X.resize(all.X.rows() / 2, s.width());
        for (Eigen::Index i = 0; i < all.X.rows(); ++i) {
            auto& half = i % 2 ? te : tr;
            half.X.row(Eigen::Index(half.y.size())) = all.X.row(i);
            half.y.push_back(all.y[std::size_t(i)]);
        }
        const MatrixXd I = MatrixXd::Identity(s.width(), s.width());
        return accuracy(knn_predict(tr.X, tr.y, te.X, I, 1), te.y);
    };
    SyntheticSpec far = sp;
    far.separation = 10;
    CHECK(raw_accuracy(far, 1) == 1.0);
    SyntheticSpec none = sp;
    none.separation = 0;
    double chance = 0;
    for (int s = 0; s < 10; ++s) chance += raw_accuracy(none, std::uint64_t(s)) / 10;
    CHECK(chance == doctest::Approx(1.0 / 3.0).epsilon(0.25));

    SyntheticSpec bad = sp;
    bad.blocks = {1, 6, 4};
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    CHECK_THROWS_AS(make_synthetic_stream(sp, one_shot_schedule({4, 5, 5}, 2, 12), 1), ValidationError);
}
