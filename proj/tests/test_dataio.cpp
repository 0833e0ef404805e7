#include "fuzz.hpp"

#include "sntf/dataio.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace sntf;
using namespace sntf::testing;

namespace {

GeneSetCollection gmt(const std::string& text, Warnings* w = nullptr) {
    std::istringstream in(text);
    return parse_gmt(in, w);
}

InteractionGraph edges(const std::string& text, Warnings* w = nullptr) {
    std::istringstream in(text);
    return parse_edge_list(in, w);
}

LabeledExpression expression(const std::string& matrix, const std::string& labels,
                             Warnings* w = nullptr) {
    std::istringstream m(matrix), l(labels);
    return parse_expression(m, l, w);
}

template <typename F>
FormatError format_error(F&& f) {
    try {
        f();
    } catch (const FormatError& e) {
        return e;
    }
    ADD_FAILURE() << "no FormatError thrown";
    return FormatError("none");
}

} // namespace

TEST(Gmt, SingleSet) {
    const auto c = gmt("PWAY_A\tdesc\tG1\tG2\n");
    ASSERT_EQ(c.size(), 1u);
    EXPECT_EQ(c.sets[0].id, "PWAY_A");
    EXPECT_EQ(c.sets[0].description, "desc");
    EXPECT_EQ(c.sets[0].members, (std::vector<std::string>{"G1", "G2"}));
}

TEST(Gmt, DuplicateMemberWarns) {
    Warnings w;
    const auto c = gmt("PWAY_A\tdesc\tG1\tG1\n", &w);
    EXPECT_EQ(c.sets[0].members, (std::vector<std::string>{"G1"}));
    EXPECT_EQ(w.size(), 1u);
}

TEST(Gmt, OrderPreservedAndTrailingTabsIgnored) {
    const auto c = gmt("B\tx\tG1\t\t\nA\ty\tG2\tG3\r\n\n");
    ASSERT_EQ(c.size(), 2u);
    EXPECT_EQ(c.sets[0].id, "B");
    EXPECT_EQ(c.sets[1].id, "A");
    EXPECT_EQ(c.sets[0].members.size(), 1u);
}

TEST(Gmt, Errors) {
    EXPECT_EQ(format_error([] { gmt("A\tB\tG1\nONLY\tdesc\n"); }).line(), 2);
    const auto dup = format_error([] { gmt("A\td\tG1\n\nA\td\tG2\n"); });
    EXPECT_EQ(dup.line(), 3);
    EXPECT_NE(std::string(dup.what()).find("duplicate"), std::string::npos);
}

TEST(EdgeList, PathGraph) {
    const auto g = edges("A B\nB C\n");
    EXPECT_EQ(g.size(), 3u);
    EXPECT_EQ(g.edges().size(), 2u);
}

TEST(EdgeList, SelfLoopDroppedWithWarning) {
    Warnings w;
    const auto g = edges("A A\n", &w);
    EXPECT_TRUE(g.edges().empty());
    EXPECT_EQ(w.size(), 1u);
    EXPECT_TRUE(g.contains("A"));
}

TEST(EdgeList, RepeatedEdgeKeepsMaximum) {
    const auto g = edges("A B 2.0\nB A 1.0\n");
    ASSERT_EQ(g.edges().size(), 1u);
    EXPECT_EQ(g.edges()[0].weight, 2.0);
}

TEST(EdgeList, CommentsAndErrors) {
    const auto g = edges("# header\n  \nA\tB\n#C D\n");
    EXPECT_EQ(g.size(), 2u);
    const auto e = format_error([] { edges("A B\nB C heavy\n"); });
    EXPECT_EQ(e.line(), 2);
    EXPECT_EQ(e.column(), 3);
    EXPECT_THROW(edges("A B 1 2\n"), FormatError);
}

TEST(Expression, WellFormed) {
    const auto e = expression("id\tG1\tG2\nS1\t1.5\t-2\nS2\t3e-1\t0\n", "S1\tBRCA\nS2\tLUAD\n");
    EXPECT_EQ(e.X.rows(), 2);
    EXPECT_EQ(e.X.cols(), 2);
    EXPECT_EQ(e.K(), 2);
    EXPECT_EQ(e.X(1, 0), 0.3);
}

TEST(Expression, MissingValueCitesCoordinates) {
    const auto e = format_error(
        [] { expression("id\tG1\tG2\nS1\t1\t2\nS2\t\t4\n", "S1\ta\nS2\tb\n"); });
    EXPECT_EQ(e.line(), 3);
    EXPECT_EQ(e.column(), 2);
    const auto r = format_error([] { expression("id\tG1\tG2\nS1\t1\n", "S1\ta\n"); });
    EXPECT_EQ(r.line(), 2);
    EXPECT_THROW(expression("id\tG1\nS1\tnan\n", "S1\ta\n"), FormatError);
    EXPECT_THROW(expression("id\tG1\nS1\t1,5\n", "S1\ta\n"), FormatError);
}

TEST(Expression, UnlabeledSampleDropped) {
    Warnings w;
    const auto e = expression("id\tG1\nS1\t1\nS2\t2\nS3\t3\n", "S1\ta\nS3\tb\n", &w);
    EXPECT_EQ(e.sample_ids, (std::vector<std::string>{"S1", "S3"}));
    EXPECT_EQ(e.X(1, 0), 3.0);
    EXPECT_EQ(w.size(), 1u);
}

TEST(Expression, DuplicateSampleRowIsAnError) {
    EXPECT_THROW(expression("id\tG1\nS1\t1\nS1\t2\n", "S1\ta\n"), FormatError);
    EXPECT_THROW(expression("id\tG1\nS1\t1\n", "S1\ta\nS1\tb\n"), FormatError);
}

TEST(NumberParsing, LocaleIndependentAndStrict) {
    double v = 0.0;
    EXPECT_TRUE(parse_number("  -1.25e2 ", v));
    EXPECT_EQ(v, -125.0);
    EXPECT_TRUE(parse_number("+4", v));
    EXPECT_FALSE(parse_number("1,5", v));
    EXPECT_FALSE(parse_number("inf", v));
    EXPECT_FALSE(parse_number("1.0x", v));
    EXPECT_FALSE(parse_number("", v));
    EXPECT_TRUE(parse_number(format_number(0.1 + 0.2), v));
    EXPECT_EQ(v, 0.1 + 0.2);
}

TEST(Align, IntersectsAndDropsEmptySets) {
    const auto e = expression("id\tG1\tG2\tG3\nS1\t1\t2\t3\nS2\t4\t5\t6\n", "S1\tb\nS2\ta\n");
    const auto sets = gmt("P1\t\tG2\tG3\nP2\t\tG4\n");
    const auto g = edges("G2\nG3\nG4\n");
    Warnings w;
    const auto o = align(e, sets, g, &w);
    EXPECT_EQ(o.feature_ids, (std::vector<std::string>{"G2", "G3"}));
    EXPECT_EQ(o.D(), 2);
    EXPECT_EQ(o.R(), 1);
    EXPECT_EQ(w.size(), 1u);
    EXPECT_EQ(o.X(1, 1), 6.0);
    // Cluster columns follow sorted label order.
    EXPECT_EQ(o.cluster_ids, (std::vector<std::string>{"a", "b"}));
    EXPECT_EQ(o.U0(0, 1), 1.0);
    EXPECT_EQ(o.U0(1, 0), 1.0);
    EXPECT_EQ(o.graph.node_labels(), o.feature_ids);
}

TEST(Align, IdenticalUniverseNoWarnings) {
    const auto e = expression("id\tA\tB\tC\tD\tE\nS\t1\t2\t3\t4\t5\n", "S\tk\n");
    const auto sets = gmt("P\t\tA\tB\tC\nQ\t\tD\tE\tA\n");
    const auto g = edges("A B\nB C\nC D\nD E\n");
    Warnings w;
    const auto o = align(e, sets, g, &w);
    EXPECT_EQ(o.D(), 5);
    EXPECT_TRUE(w.empty());
    EXPECT_EQ(o.M.size(), 6u);
    EXPECT_EQ(o.graph.edges().size(), 4u);
}

TEST(Align, EmptyIntersectionIsFatal) {
    const auto e = expression("id\tA\nS\t1\n", "S\tk\n");
    EXPECT_THROW(align(e, gmt("P\t\tB\n"), edges("A B\n")), DomainError);
}

TEST(Align, IdempotentThroughDecompose) {
    const auto e = expression("id\tG3\tG1\tG2\tG9\nS1\t1\t2\t3\t4\nS2\t5\t6\t7\t8\n"
                              "S3\t9\t10\t11\t12\n",
                              "S1\tz\nS2\ty\nS3\tz\n");
    const auto sets = gmt("P1\t\tG1\tG3\nP2\t\tG2\tG1\tG7\nP3\t\tG9\n");
    const auto g = edges("G1 G2\nG2 G3 0.5\nG3 G7\nG9 G9\nG1\n");
    const auto o = align(e, sets, g);
    const auto t = decompose(o);
    Warnings w;
    const auto again = align(t.expression, t.sets, t.graph, &w);
    EXPECT_TRUE(same_observations(o, again));
    EXPECT_TRUE(w.empty());
}

TEST(RoundTrip, SpecificCases) {
    EXPECT_TRUE(gmt_round_trip("A\td\tG1\tG2\nB\t\tG3\n").same_bytes);
    EXPECT_TRUE(edge_round_trip("A B 0.1\nB C\nD\n").same_bytes);
    EXPECT_TRUE(matrix_round_trip("x\ta\tb\nr\t0.1\t-0\n").same_bytes);
    EXPECT_TRUE(matrix_round_trip("x\n").same_object);
}

TEST(RoundTrip, FuzzedInputs) {
    TextFuzzer fz(2024);
    for (int t = 0; t < 1000; ++t) {
        const auto g = fz.gmt(), e = fz.edge_list(), m = fz.matrix();
        const auto rg = gmt_round_trip(g);
        const auto re = edge_round_trip(e);
        const auto rm = matrix_round_trip(m);
        ASSERT_TRUE(rg.same_object && rg.same_bytes) << g;
        ASSERT_TRUE(re.same_object && re.same_bytes) << e;
        ASSERT_TRUE(rm.same_object && rm.same_bytes) << m;
    }
}

TEST(RoundTrip, ExpressionAndLabels) {
    const auto e = expression("id\tG1\tG2\nS1\t0.1\t2\nS2\t-3\t1e-300\n", "S2\tb\nS1\ta\n");
    std::ostringstream m, l;
    write_expression(m, l, e);
    EXPECT_EQ(expression(m.str(), l.str()), e);
}
