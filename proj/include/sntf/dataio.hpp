#pragma once

// Text formats: GMT gene sets, whitespace edge lists, labelled TSV matrices
// and two-column label files. Parsers are streaming and locale-independent;
// serializers are canonical, so parse -> write -> parse is the identity.

#include "sntf/error.hpp"
#include "sntf/graph.hpp"
#include "sntf/model.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

namespace sntf {

/// Collects non-fatal diagnostics. Null means "discard".
using Warnings = std::vector<std::string>;

struct GeneSet {
    std::string id;
    std::string description;
    std::vector<std::string> members;
    bool operator==(const GeneSet&) const = default;
};

struct GeneSetCollection {
    std::vector<GeneSet> sets;
    std::size_t size() const noexcept { return sets.size(); }
    bool operator==(const GeneSetCollection&) const = default;
};

/// A matrix with row and column labels; `corner` is the header's first cell.
struct LabeledMatrix {
    std::string corner;
    std::vector<std::string> row_ids;
    std::vector<std::string> col_ids;
    Matrix values;

    bool operator==(const LabeledMatrix& o) const {
        return corner == o.corner && row_ids == o.row_ids &&
               col_ids == o.col_ids && values.rows() == o.values.rows() &&
               values.cols() == o.values.cols() && values == o.values;
    }
};

struct LabeledExpression {
    std::vector<std::string> sample_ids;
    std::vector<std::string> feature_ids;
    Matrix X;                                // N x D
    std::vector<std::string> cluster_labels; // one per sample

    /// Distinct cluster labels in lexicographic order; index = U0 column.
    std::vector<std::string> cluster_names() const {
        std::set<std::string> u(cluster_labels.begin(), cluster_labels.end());
        return {u.begin(), u.end()};
    }
    Index K() const { return static_cast<Index>(cluster_names().size()); }

    bool operator==(const LabeledExpression& o) const {
        return sample_ids == o.sample_ids && feature_ids == o.feature_ids &&
               cluster_labels == o.cluster_labels && X.rows() == o.X.rows() &&
               X.cols() == o.X.cols() && X == o.X;
    }
};

namespace detail {

inline void warn(Warnings* w, std::string msg) {
    if (w)
        w->push_back(std::move(msg));
}

inline std::string_view trim(std::string_view s) {
    const auto ws = " \t\r\n\v\f";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos)
        return {};
    const auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string_view> split_tabs(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto p = line.find('\t', start);
        if (p == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, p - start));
        start = p + 1;
    }
}

inline std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i])))
            ++i;
        const std::size_t b = i;
        while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i])))
            ++i;
        if (i > b)
            out.push_back(line.substr(b, i - b));
    }
    return out;
}

inline void strip_cr(std::string& line) {
    if (!line.empty() && line.back() == '\r')
        line.pop_back();
}

} // namespace detail

/// Parses a finite decimal number; returns false on anything else
/// (including "nan", "inf" and trailing garbage).
inline bool parse_number(std::string_view text, double& out) {
    text = detail::trim(text);
    if (text.empty())
        return false;
    if (text.front() == '+')
        text.remove_prefix(1);
    const auto res = std::from_chars(text.data(), text.data() + text.size(), out,
                                     std::chars_format::general);
    return res.ec == std::errc{} && res.ptr == text.data() + text.size() &&
           std::isfinite(out);
}

/// Shortest-safe round-trip form: 17 significant digits.
inline std::string format_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// ---- GMT ----------------------------------------------------------------

inline GeneSetCollection parse_gmt(std::istream& in, Warnings* warnings = nullptr) {
    GeneSetCollection out;
    std::unordered_set<std::string> seen_ids;
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        detail::strip_cr(line);
        if (detail::trim(line).empty())
            continue;
        auto fields = detail::split_tabs(line);
        while (!fields.empty() && detail::trim(fields.back()).empty())
            fields.pop_back();
        if (fields.size() < 3)
            throw FormatError("gene set line needs id, description and at least "
                              "one member",
                              lineno);
        GeneSet gs;
        gs.id = std::string(detail::trim(fields[0]));
        if (gs.id.empty())
            throw FormatError("empty gene set id", lineno, 1);
        if (!seen_ids.insert(gs.id).second)
            throw FormatError("duplicate gene set id '" + gs.id + "'", lineno, 1);
        gs.description = std::string(detail::trim(fields[1]));
        std::unordered_set<std::string> members;
        for (std::size_t f = 2; f < fields.size(); ++f) {
            std::string m(detail::trim(fields[f]));
            if (m.empty())
                continue;
            if (!members.insert(m).second) {
                detail::warn(warnings, "line " + std::to_string(lineno) +
                                           ": duplicate member '" + m +
                                           "' in set '" + gs.id + "' ignored");
                continue;
            }
            gs.members.push_back(std::move(m));
        }
        out.sets.push_back(std::move(gs));
    }
    return out;
}

inline void write_gmt(std::ostream& os, const GeneSetCollection& c) {
    for (const auto& s : c.sets) {
        os << s.id << '\t' << s.description;
        for (const auto& m : s.members)
            os << '\t' << m;
        os << '\n';
    }
}

// ---- Edge list ----------------------------------------------------------

/// Each non-comment line: `a b [weight]`. A line holding a single label
/// declares an isolated node. Self-loops keep the node, drop the edge.
inline InteractionGraph parse_edge_list(std::istream& in,
                                        Warnings* warnings = nullptr) {
    InteractionGraph g;
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        detail::strip_cr(line);
        const auto t = detail::trim(line);
        if (t.empty() || t.front() == '#')
            continue;
        const auto f = detail::split_ws(t);
        if (f.size() > 3)
            throw FormatError("edge line has more than three fields", lineno);
        if (f.size() == 1) {
            g.add_node(std::string(f[0]));
            continue;
        }
        double w = 1.0;
        if (f.size() == 3) {
            if (!parse_number(f[2], w))
                throw FormatError("non-numeric edge weight '" + std::string(f[2]) +
                                      "'",
                                  lineno, 3);
            if (w < 0.0)
                throw FormatError("negative edge weight", lineno, 3);
        }
        const auto a = g.add_node(std::string(f[0]));
        const auto b = g.add_node(std::string(f[1]));
        if (a == b) {
            detail::warn(warnings, "line " + std::to_string(lineno) +
                                       ": self-loop on '" + std::string(f[0]) +
                                       "' dropped");
            continue;
        }
        g.add_edge(a, b, w);
    }
    return g;
}

/// Canonical form: every node on its own line (fixing node order), then one
/// `a<TAB>b<TAB>weight` line per edge.
inline void write_edge_list(std::ostream& os, const InteractionGraph& g) {
    for (const auto& l : g.node_labels())
        os << l << '\n';
    const auto& labels = g.node_labels();
    for (const auto& e : g.edges())
        os << labels[e.a] << '\t' << labels[e.b] << '\t' << format_number(e.weight)
           << '\n';
}

// ---- Labelled matrices --------------------------------------------------

/// Header `corner<TAB>col...`, then `row_id<TAB>value...` rows. Errors carry
/// 1-based line and field coordinates.
inline LabeledMatrix parse_labeled_matrix(std::istream& in) {
    LabeledMatrix out;
    std::string line;
    long lineno = 0;
    bool have_header = false;
    std::vector<double> values;
    std::unordered_set<std::string> seen_rows;
    while (std::getline(in, line)) {
        ++lineno;
        detail::strip_cr(line);
        if (detail::trim(line).empty())
            continue;
        const auto f = detail::split_tabs(line);
        if (!have_header) {
            out.corner = std::string(detail::trim(f[0]));
            std::unordered_set<std::string> seen;
            for (std::size_t c = 1; c < f.size(); ++c) {
                std::string id(detail::trim(f[c]));
                if (id.empty())
                    throw FormatError("empty column label", lineno,
                                      static_cast<long>(c + 1));
                if (!seen.insert(id).second)
                    throw FormatError("duplicate column label '" + id + "'", lineno,
                                      static_cast<long>(c + 1));
                out.col_ids.push_back(std::move(id));
            }
            have_header = true;
            continue;
        }
        if (f.size() != out.col_ids.size() + 1)
            throw FormatError("row has " + std::to_string(f.size()) +
                                  " fields, expected " +
                                  std::to_string(out.col_ids.size() + 1),
                              lineno,
                              static_cast<long>(std::min(f.size(),
                                                         out.col_ids.size() + 1) +
                                                1));
        std::string id(detail::trim(f[0]));
        if (id.empty())
            throw FormatError("empty row label", lineno, 1);
        if (!seen_rows.insert(id).second)
            throw FormatError("duplicate row label '" + id + "'", lineno, 1);
        for (std::size_t c = 1; c < f.size(); ++c) {
            double v;
            if (!parse_number(f[c], v))
                throw FormatError("missing or non-numeric value '" +
                                      std::string(f[c]) + "'",
                                  lineno, static_cast<long>(c + 1));
            values.push_back(v);
        }
        out.row_ids.push_back(std::move(id));
    }
    if (!have_header)
        throw FormatError("matrix file is empty");
    const auto n = static_cast<Index>(out.row_ids.size());
    const auto d = static_cast<Index>(out.col_ids.size());
    out.values.resize(n, d);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < d; ++j)
            out.values(i, j) = values[static_cast<std::size_t>(i * d + j)];
    return out;
}

inline void write_labeled_matrix(std::ostream& os, const LabeledMatrix& m) {
    os << m.corner;
    for (const auto& c : m.col_ids)
        os << '\t' << c;
    os << '\n';
    for (Index i = 0; i < m.values.rows(); ++i) {
        os << m.row_ids[static_cast<std::size_t>(i)];
        for (Index j = 0; j < m.values.cols(); ++j)
            os << '\t' << format_number(m.values(i, j));
        os << '\n';
    }
}

// ---- Expression + labels ------------------------------------------------

/// Two tab-separated columns: sample id, cluster label.
inline std::vector<std::pair<std::string, std::string>>
parse_labels(std::istream& in) {
    std::vector<std::pair<std::string, std::string>> out;
    std::unordered_map<std::string, std::string> seen;
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        detail::strip_cr(line);
        if (detail::trim(line).empty())
            continue;
        const auto f = detail::split_tabs(line);
        if (f.size() != 2)
            throw FormatError("label line needs exactly two tab-separated fields",
                              lineno);
        std::string id(detail::trim(f[0])), label(detail::trim(f[1]));
        if (id.empty() || label.empty())
            throw FormatError("empty sample id or cluster label", lineno,
                              id.empty() ? 1 : 2);
        auto [it, fresh] = seen.emplace(id, label);
        if (!fresh) {
            if (it->second != label)
                throw FormatError("sample '" + id + "' has conflicting labels",
                                  lineno, 2);
            continue;
        }
        out.emplace_back(std::move(id), std::move(label));
    }
    return out;
}

inline LabeledExpression parse_expression(std::istream& matrix, std::istream& labels,
                                          Warnings* warnings = nullptr) {
    const LabeledMatrix m = parse_labeled_matrix(matrix);
    const auto lab = parse_labels(labels);
    std::unordered_map<std::string, std::string> by_id(lab.begin(), lab.end());

    LabeledExpression out;
    out.feature_ids = m.col_ids;
    std::vector<Index> keep;
    for (std::size_t i = 0; i < m.row_ids.size(); ++i) {
        auto it = by_id.find(m.row_ids[i]);
        if (it == by_id.end()) {
            detail::warn(warnings, "sample '" + m.row_ids[i] +
                                       "' has no cluster label; dropped");
            continue;
        }
        keep.push_back(static_cast<Index>(i));
        out.sample_ids.push_back(m.row_ids[i]);
        out.cluster_labels.push_back(it->second);
    }
    out.X.resize(static_cast<Index>(keep.size()), m.values.cols());
    for (std::size_t i = 0; i < keep.size(); ++i)
        out.X.row(static_cast<Index>(i)) = m.values.row(keep[i]);
    return out;
}

inline void write_expression(std::ostream& matrix, std::ostream& labels,
                             const LabeledExpression& e) {
    write_labeled_matrix(matrix, {"sample", e.sample_ids, e.feature_ids, e.X});
    for (std::size_t i = 0; i < e.sample_ids.size(); ++i)
        labels << e.sample_ids[i] << '\t' << e.cluster_labels[i] << '\n';
}

// ---- Alignment ----------------------------------------------------------

/// Restricts all three sources to their common features (expression order),
/// builds Z0, U0 and M, and drops sets left empty.
inline ObservationSet align(const LabeledExpression& expr, const GeneSetCollection& sets,
                            const InteractionGraph& graph,
                            Warnings* warnings = nullptr) {
    std::unordered_set<std::string> in_sets;
    for (const auto& s : sets.sets)
        in_sets.insert(s.members.begin(), s.members.end());

    std::vector<Index> cols;
    std::vector<std::string> universe;
    for (std::size_t j = 0; j < expr.feature_ids.size(); ++j) {
        const auto& f = expr.feature_ids[j];
        if (in_sets.count(f) && graph.contains(f)) {
            cols.push_back(static_cast<Index>(j));
            universe.push_back(f);
        }
    }
    if (universe.empty())
        throw DomainError("no feature is shared by the expression matrix, the gene "
                          "sets and the graph");
    std::unordered_map<std::string, Index> pos;
    for (std::size_t j = 0; j < universe.size(); ++j)
        pos.emplace(universe[j], static_cast<Index>(j));

    ObservationSet o;
    const auto D = static_cast<Index>(universe.size());
    std::vector<Eigen::VectorXd> zcols;
    for (const auto& s : sets.sets) {
        Eigen::VectorXd z = Eigen::VectorXd::Zero(D);
        for (const auto& m : s.members) {
            auto it = pos.find(m);
            if (it != pos.end())
                z(it->second) = 1.0;
        }
        if (z.sum() == 0.0) {
            detail::warn(warnings, "gene set '" + s.id +
                                       "' has no member in the shared feature set; "
                                       "dropped");
            continue;
        }
        zcols.push_back(std::move(z));
        o.set_ids.push_back(s.id);
    }
    if (zcols.empty())
        throw DomainError("every gene set is empty after alignment");
    o.Z0.resize(D, static_cast<Index>(zcols.size()));
    for (std::size_t r = 0; r < zcols.size(); ++r)
        o.Z0.col(static_cast<Index>(r)) = zcols[r];

    const auto N = static_cast<Index>(expr.sample_ids.size());
    o.X.resize(N, D);
    for (Index j = 0; j < D; ++j)
        o.X.col(j) = expr.X.col(cols[static_cast<std::size_t>(j)]);

    o.cluster_ids = expr.cluster_names();
    std::unordered_map<std::string, Index> cpos;
    for (std::size_t k = 0; k < o.cluster_ids.size(); ++k)
        cpos.emplace(o.cluster_ids[k], static_cast<Index>(k));
    o.U0 = Matrix::Zero(N, static_cast<Index>(o.cluster_ids.size()));
    for (Index i = 0; i < N; ++i)
        o.U0(i, cpos.at(expr.cluster_labels[static_cast<std::size_t>(i)])) = 1.0;

    o.M = ObservationSet::constraints_from_mask(o.Z0);
    o.graph = graph.induced(universe);
    o.sample_ids = expr.sample_ids;
    o.feature_ids = std::move(universe);
    return o;
}

/// The three source objects of an aligned set; align() maps them back to `o`.
struct SourceTriple {
    LabeledExpression expression;
    GeneSetCollection sets;
    InteractionGraph graph;
};

inline SourceTriple decompose(const ObservationSet& o) {
    SourceTriple t;
    t.expression.sample_ids = o.sample_ids;
    t.expression.feature_ids = o.feature_ids;
    t.expression.X = o.X;
    for (Index i = 0; i < o.N(); ++i) {
        Index k;
        o.U0.row(i).maxCoeff(&k);
        t.expression.cluster_labels.push_back(o.cluster_ids[static_cast<std::size_t>(k)]);
    }
    for (Index r = 0; r < o.R(); ++r) {
        GeneSet gs{o.set_ids[static_cast<std::size_t>(r)], "", {}};
        for (Index j = 0; j < o.D(); ++j)
            if (o.Z0(j, r) == 1.0)
                gs.members.push_back(o.feature_ids[static_cast<std::size_t>(j)]);
        t.sets.sets.push_back(std::move(gs));
    }
    t.graph = o.graph;
    return t;
}

inline bool same_observations(const ObservationSet& a, const ObservationSet& b) {
    auto eq = [](const Matrix& x, const Matrix& y) {
        return x.rows() == y.rows() && x.cols() == y.cols() && x == y;
    };
    return eq(a.X, b.X) && eq(a.U0, b.U0) && eq(a.Z0, b.Z0) && a.M == b.M &&
           a.graph == b.graph && a.sample_ids == b.sample_ids &&
           a.feature_ids == b.feature_ids && a.cluster_ids == b.cluster_ids &&
           a.set_ids == b.set_ids;
}

} // namespace sntf
