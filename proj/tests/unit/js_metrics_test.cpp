#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "../common/metric_golden.hpp"
#include "jsvuln/js/metrics.hpp"

using namespace jsvuln::js;

namespace {

MetricVector only(const std::string& src) {
    const auto fns = analyze_source(src, "t.js");
    EXPECT_FALSE(fns.empty());
    return compute_metrics(fns.at(0));
}

/// Random function built from a small statement grammar.
std::string random_function(std::mt19937& gen, int depth = 0) {
    static const char* simple[] = {"x = x + 1;", "y(x, 2);", "return x;", "var z = a && b || !c;",
                                   "q = p ? 1 : 2;", "// note", "/* block */", "s = 'str';", "t = `${x}`;"};
    std::string body;
    const int n = int(gen() % 6);
    for (int i = 0; i < n; ++i) {
        switch (gen() % 6) {
            case 0: body += "  if (x > 1) {\n" + std::string(simple[gen() % 9]) + "\n  }\n"; break;
            case 1: body += "  for (var i = 0; i < n; i++) " + std::string(simple[gen() % 9]) + "\n"; break;
            case 2:
                if (depth < 2) body += "  var f" + std::to_string(i) + " = " + random_function(gen, depth + 1) + ";\n";
                break;
            default: body += "  " + std::string(simple[gen() % 9]) + "\n";
        }
    }
    return "function (a, b) {\n" + body + "}";
}

}  // namespace

TEST(MetricNames, ThirtyFiveColumnsInOrder) {
    EXPECT_EQ(kMetricNames.size(), 35u);
    EXPECT_EQ(kMetricNames.front(), "CC");
    EXPECT_EQ(kMetricNames[std::size_t(Metric::McCC)], "McCC");
    EXPECT_EQ(kMetricNames.back(), "CYCL_DENS");
    EXPECT_TRUE(is_ratio_metric(Metric::CD));
    EXPECT_TRUE(is_ratio_metric(Metric::HVOL));
    EXPECT_FALSE(is_ratio_metric(Metric::LOC));
    MetricVector v;
    EXPECT_THROW(v.at("NOPE"), std::out_of_range);
}

TEST(MetricGolden, HandCountedFunctions) {
    int checked = 0;
    const auto mismatches = golden::check_all(std::string(JSVULN_FIXTURES) + "/metrics_golden", true, &checked);
    EXPECT_EQ(checked, 12);
    for (const auto& m : mismatches) ADD_FAILURE() << golden::describe(m);
}

TEST(MetricGolden, ListingTwoHalstead) {
    const auto m = only("function foo(a) {\n  var i = 4 * a;\n  // call bar\n  var tmp = bar(i);\n  return tmp;\n}\n");
    EXPECT_EQ(m[Metric::HOR_D], 10);
    EXPECT_EQ(m[Metric::HOR_T], 16);
    EXPECT_EQ(m[Metric::HON_D], 5);
    EXPECT_EQ(m[Metric::HON_T], 8);
    EXPECT_NEAR(m[Metric::HVOL], 93.76537429460445, 1e-9);
    EXPECT_NEAR(m[Metric::HEFF], 750.1229943568356, 1e-9);
    EXPECT_NEAR(m[Metric::CD], 1.0 / 6.0, 1e-12);
}

TEST(MetricGuards, EmptyFunctionHasNoDivisionByZero) {
    const auto m = only("function e(){}");
    for (double v : m.values) EXPECT_TRUE(std::isfinite(v));
    EXPECT_EQ(m[Metric::HDIFF], 0);
    EXPECT_EQ(m[Metric::HEFF], 0);
    EXPECT_EQ(m[Metric::CD], 0);
    EXPECT_NEAR(m[Metric::HVOL], 5 * std::log2(5.0), 1e-12);
}

TEST(MetricGuards, CloneMetricsAreZero) {
    const auto m = only("function f(a) { return a; }");
    for (auto k : {Metric::CC, Metric::CCL, Metric::CCO, Metric::CI, Metric::CLC, Metric::LDC}) EXPECT_EQ(m[k], 0);
}

TEST(MetricProperties, IdentitiesOnRandomFunctions) {
    std::mt19937 gen(11);
    for (int trial = 0; trial < 300; ++trial) {
        const std::string src = "var top = " + random_function(gen) + ";\n";
        const auto tree = analyze_source(src, "r.js");
        for (const auto* f : flatten(tree)) {
            const auto m = compute_metrics(*f);
            for (double v : m.values) ASSERT_TRUE(std::isfinite(v)) << src;
            EXPECT_EQ(m[Metric::HLEN], m[Metric::HOR_T] + m[Metric::HON_T]);
            EXPECT_EQ(m[Metric::HVOC], m[Metric::HOR_D] + m[Metric::HON_D]);
            EXPECT_LE(m[Metric::HOR_D], m[Metric::HOR_T]);
            EXPECT_LE(m[Metric::HON_D], m[Metric::HON_T]);
            EXPECT_NEAR(m[Metric::HEFF], m[Metric::HDIFF] * m[Metric::HVOL], 1e-9 * (1 + m[Metric::HEFF]));
            EXPECT_EQ(m[Metric::McCC], m[Metric::CYCL]);
            EXPECT_GE(m[Metric::McCC], 1);
            EXPECT_LE(m[Metric::NLE], m[Metric::NL]);
            EXPECT_LE(m[Metric::LLOC], m[Metric::LOC]);
            EXPECT_LE(m[Metric::LOC], m[Metric::TLOC]);
            EXPECT_LE(m[Metric::LLOC], m[Metric::TLLOC]);
            EXPECT_LE(m[Metric::NOS], m[Metric::TNOS]);
            EXPECT_LE(m[Metric::CLOC], m[Metric::TCLOC]);
            EXPECT_EQ(m[Metric::TLOC], f->end_line - f->start_line + 1);
            EXPECT_GE(m[Metric::CD], 0);
            EXPECT_LE(m[Metric::CD], 1);
            EXPECT_EQ(m[Metric::PARAMS], 2);
        }
    }
}

TEST(MetricProperties, BlankLineInsideBodyChangesOnlyLineSpans) {
    std::mt19937 gen(5);
    for (int trial = 0; trial < 200; ++trial) {
        const std::string src = "var top = " + random_function(gen) + ";\n";
        std::vector<std::string> lines;
        std::string cur;
        for (char c : src) {
            if (c == '\n') {
                lines.push_back(cur);
                cur.clear();
            } else {
                cur += c;
            }
        }
        // Blank line after a random body line that is not a comment.
        std::vector<std::size_t> spots;
        for (std::size_t i = 0; i + 1 < lines.size(); ++i)
            if (lines[i].find("//") == std::string::npos && lines[i].find("/*") == std::string::npos) spots.push_back(i);
        const std::size_t at = spots[gen() % spots.size()];
        std::string padded;
        for (std::size_t i = 0; i < lines.size(); ++i) padded += lines[i] + (i == at ? "\n\n" : "\n");

        const auto ta = analyze_source(src, "a.js");
        const auto tb = analyze_source(padded, "b.js");
        ASSERT_EQ(ta.size(), 1u);
        const auto ma = compute_metrics(ta[0]), mb = compute_metrics(tb[0]);
        EXPECT_EQ(mb[Metric::TLOC], ma[Metric::TLOC] + 1) << padded;
        EXPECT_GE(mb[Metric::LOC], ma[Metric::LOC]);
        EXPECT_LE(mb[Metric::LOC], ma[Metric::LOC] + 1);
        for (std::size_t k = 0; k < kMetricCount; ++k) {
            const auto name = kMetricNames[k];
            if (name == "LOC" || name == "TLOC") continue;
            EXPECT_EQ(ma.values[k], mb.values[k]) << name << "\n" << padded;
        }
    }
}

TEST(MetricProperties, BlankLineInFlatBodyIncrementsLoc) {
    const auto a = only("function f(x) {\n  x++;\n  return x;\n}\n");
    const auto b = only("function f(x) {\n  x++;\n\n  return x;\n}\n");
    EXPECT_EQ(b[Metric::LOC], a[Metric::LOC] + 1);
    EXPECT_EQ(b[Metric::TLOC], a[Metric::TLOC] + 1);
    EXPECT_EQ(b[Metric::LLOC], a[Metric::LLOC]);
    EXPECT_EQ(b[Metric::NOS], a[Metric::NOS]);
    EXPECT_EQ(b[Metric::HVOL], a[Metric::HVOL]);
}
