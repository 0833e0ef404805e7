#pragma once

// Command-line front end: fit, simulate, eval, rank.
//
// Exit codes: 0 success (fit: converged), 1 bad input or configuration,
// 2 numerical failure, 3 fit stopped at max_sweeps.

#include "sntf/dataio.hpp"
#include "sntf/inference.hpp"
#include "sntf/synth.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace sntf::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kInputError = 1, kNumericalError = 2, kMaxSweeps = 3 };

struct RunConfig {
    std::string expression;
    std::string labels;
    std::string gmt;
    std::string edges;
    std::string out_dir;
    Hyperparameters hyper;
    Index top_m = 5;
    bool clamp_constraints = false;
    /// Start q(Z = 1) near Phi(2) on the known memberships.
    bool constrained_start = false;
    /// Sweeps before the coupling block is first updated.
    int coupling_warmup = 0;
};

/// Entries of a `key = value` file. '#' starts a comment; keys are
/// normalized to use '-' between words.
inline std::vector<std::pair<std::string, std::string>> read_config(std::istream& in) {
    std::vector<std::pair<std::string, std::string>> out;
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto h = line.find('#'); h != std::string::npos)
            line.erase(h);
        const auto t = detail::trim(line);
        if (t.empty())
            continue;
        const auto eq = t.find('=');
        if (eq == std::string_view::npos)
            throw FormatError("expected 'key = value'", lineno);
        std::string key(detail::trim(t.substr(0, eq)));
        std::string value(detail::trim(t.substr(eq + 1)));
        if (key.empty())
            throw FormatError("empty key", lineno);
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
            value = value.substr(1, value.size() - 2);
        std::replace(key.begin(), key.end(), '_', '-');
        out.emplace_back(std::move(key), std::move(value));
    }
    return out;
}

inline std::vector<std::pair<std::string, std::string>> read_config(const fs::path& p) {
    std::ifstream in(p);
    if (!in)
        throw FormatError("cannot open config file " + p.string());
    try {
        return read_config(in);
    } catch (const FormatError& e) {
        throw FormatError(p.string() + ": " + e.what());
    }
}

/// Thread count from SNTF_THREADS, else 1.
inline int default_threads() {
    if (const char* v = std::getenv("SNTF_THREADS")) {
        char* end = nullptr;
        const long n = std::strtol(v, &end, 10);
        if (end != v && *end == '\0' && n >= 1 && n <= 1024)
            return static_cast<int>(n);
    }
    return 1;
}

// ---- Output helpers -----------------------------------------------------

inline void write_file(const fs::path& p, const std::string& text) {
    std::ofstream os(p, std::ios::binary);
    os << text;
    if (!os)
        throw FormatError("cannot write " + p.string());
}

inline std::string matrix_text(const std::string& corner, const std::vector<std::string>& rows,
                               const std::vector<std::string>& cols, const Matrix& m) {
    std::ostringstream os;
    write_labeled_matrix(os, {corner, rows, cols, m});
    return os.str();
}

inline std::string ranked_text(const std::vector<std::string>& cluster_ids,
                               const std::vector<std::vector<RankedSet>>& ranked) {
    std::ostringstream os;
    os << "cluster\trank\tset_id\tscore\n";
    for (std::size_t k = 0; k < ranked.size(); ++k)
        for (std::size_t i = 0; i < ranked[k].size(); ++i)
            os << cluster_ids[k] << '\t' << i + 1 << '\t' << ranked[k][i].set_id << '\t'
               << format_number(ranked[k][i].score) << '\n';
    return os.str();
}

struct RankedRow {
    std::string cluster;
    int rank = 0;
    std::string set_id;
    double score = 0.0;
    bool operator==(const RankedRow&) const = default;
};

inline std::vector<RankedRow> parse_ranked(std::istream& in) {
    std::vector<RankedRow> out;
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        detail::strip_cr(line);
        if (lineno == 1 || detail::trim(line).empty())
            continue;
        const auto f = detail::split_tabs(line);
        if (f.size() != 4)
            throw FormatError("ranked row needs four fields", lineno);
        RankedRow r{std::string(f[0]), 0, std::string(f[2]), 0.0};
        double rank = 0.0;
        if (!parse_number(f[1], rank) || rank < 1 || rank != std::floor(rank))
            throw FormatError("bad rank", lineno, 2);
        r.rank = static_cast<int>(rank);
        if (!parse_number(f[3], r.score))
            throw FormatError("bad score", lineno, 4);
        out.push_back(std::move(r));
    }
    return out;
}

inline std::string trace_text(const ElboTrace& t) {
    std::ostringstream os;
    os << "sweep\telbo\tpenalty\tobjective\n";
    for (const auto& r : t.records)
        os << r.sweep << '\t' << format_number(r.elbo) << '\t' << format_number(r.penalty)
           << '\t' << format_number(r.objective) << '\n';
    return os.str();
}

inline std::string join(const std::vector<std::string>& v, char sep = ',') {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i)
        s += (i ? std::string(1, sep) : std::string()) + v[i];
    return s;
}

/// Resolved configuration as a config file. Entries prefixed `meta.` are
/// informational and ignored when the file is read back as --config. The
/// output directory and thread count are left out: neither affects results.
inline std::string run_meta_text(const RunConfig& c, const Model& m, const FitReport& rep) {
    const auto& h = m.hyper();
    const auto& d = m.data();
    std::ostringstream os;
    auto kv = [&](const char* k, const std::string& v) { os << k << " = " << v << '\n'; };
    auto num = [&](const char* k, double v) { kv(k, format_number(v)); };
    auto path = [&](const char* k, const std::string& p) {
        kv(k, fs::absolute(p).lexically_normal().string());
    };
    path("expression", c.expression);
    path("labels", c.labels);
    path("gmt", c.gmt);
    path("edges", c.edges);
    num("alpha-a0", h.alpha_a0);
    num("alpha-b0", h.alpha_b0);
    num("lambda-s0", h.lambda_S0);
    num("mu-v0", h.mu_V0);
    num("sigma-v0", h.sigma_V0);
    num("beta-a", m.beta_a());
    num("zeta", h.zeta);
    num("xi", h.xi);
    num("epsilon", h.epsilon);
    kv("max-sweeps", std::to_string(h.schedule.max_sweeps));
    num("elbo-rel-tol", h.schedule.elbo_rel_tol);
    kv("seed", std::to_string(h.schedule.seed));
    kv("top-m", std::to_string(c.top_m));
    kv("clamp-constraints", c.clamp_constraints ? "true" : "false");
    kv("constrained-start", c.constrained_start ? "true" : "false");
    kv("coupling-warmup", std::to_string(c.coupling_warmup));
    kv("meta.N", std::to_string(d.N()));
    kv("meta.D", std::to_string(d.D()));
    kv("meta.K", std::to_string(d.K()));
    kv("meta.R", std::to_string(d.R()));
    kv("meta.constraints", std::to_string(d.M.size()));
    kv("meta.cluster-order", join(d.cluster_ids));
    kv("meta.converged", rep.converged ? "true" : "false");
    kv("meta.sweeps", std::to_string(rep.sweeps));
    num("meta.objective", rep.trace.records.back().objective);
    return os.str();
}

// ---- Commands -----------------------------------------------------------

namespace detail {

inline std::ifstream open_input(const std::string& path, const char* what) {
    std::ifstream in(path);
    if (path.empty() || !in)
        throw FormatError(std::string("cannot open ") + what + " file '" + path + "'");
    return in;
}

template <typename F>
auto with_file(const std::string& path, F&& f) {
    try {
        return f();
    } catch (const FormatError& e) {
        throw FormatError(path + ": " + e.what());
    }
}

inline void print_warnings(const Warnings& w, std::ostream& err) {
    for (const auto& s : w)
        err << "warning: " << s << '\n';
}

inline LabeledMatrix read_matrix(const fs::path& p) {
    std::ifstream in(p);
    if (!in)
        throw FormatError("missing file " + p.string());
    return with_file(p.string(), [&] { return parse_labeled_matrix(in); });
}

} // namespace detail

inline int cmd_fit(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    Warnings warnings;
    auto ein = detail::open_input(cfg.expression, "expression");
    auto lin = detail::open_input(cfg.labels, "labels");
    auto gin = detail::open_input(cfg.gmt, "gene set");
    auto gr = detail::open_input(cfg.edges, "edge list");
    const auto expr = detail::with_file(cfg.expression + " / " + cfg.labels, [&] {
        return parse_expression(ein, lin, &warnings);
    });
    const auto sets = detail::with_file(cfg.gmt, [&] { return parse_gmt(gin, &warnings); });
    const auto graph =
        detail::with_file(cfg.edges, [&] { return parse_edge_list(gr, &warnings); });
    const ObservationSet data = align(expr, sets, graph, &warnings);
    const Model model(data, cfg.hyper);
    if (cfg.top_m < 1)
        throw DomainError("top-m must be >= 1");
    if (cfg.coupling_warmup < 0)
        throw DomainError("coupling-warmup must be >= 0");

    VariationalState init = model.initial_state();
    if (cfg.constrained_start)
        init = constrained_start(model, std::move(init));
    FitOptions opt;
    opt.coupling_warmup = cfg.coupling_warmup;
    const FitReport rep = fit(model, std::move(init), opt);
    warnings.insert(warnings.end(), rep.warnings.begin(), rep.warnings.end());
    detail::print_warnings(warnings, err);

    const auto res = model.result(rep.state, cfg.top_m, cfg.clamp_constraints);
    const fs::path dir(cfg.out_dir);
    fs::create_directories(dir);
    write_file(dir / "association.tsv",
               matrix_text("cluster", data.cluster_ids, data.set_ids, res.assoc_mean));
    write_file(dir / "z_posterior.tsv",
               matrix_text("feature", data.feature_ids, data.set_ids, res.z_marginal));
    write_file(dir / "u_mixed.tsv",
               matrix_text("sample", data.sample_ids, data.cluster_ids, res.u_mixed));
    write_file(dir / "v_posterior.tsv",
               matrix_text("feature", data.feature_ids, data.set_ids, rep.state.basis_mean));
    write_file(dir / "ranked_sets.tsv", ranked_text(data.cluster_ids, res.ranked));
    write_file(dir / "elbo_trace.tsv", trace_text(rep.trace));
    write_file(dir / "run_meta", run_meta_text(cfg, model, rep));

    out << "N=" << data.N() << " D=" << data.D() << " K=" << data.K() << " R=" << data.R()
        << " sweeps=" << rep.sweeps << " converged=" << (rep.converged ? "yes" : "no")
        << " objective=" << format_number(rep.trace.records.back().objective) << '\n';
    return rep.converged ? kOk : kMaxSweeps;
}

struct SimulateConfig {
    GenerateConfig gen;
    std::string out_dir;
};

inline int cmd_simulate(const SimulateConfig& cfg, std::ostream& out) {
    const auto ds = generate(cfg.gen);
    const auto& o = ds.data;
    const auto& t = ds.truth;
    const fs::path dir(cfg.out_dir);
    fs::create_directories(dir / "truth");

    LabeledExpression e{o.sample_ids, o.feature_ids, o.X, {}};
    for (Index i = 0; i < o.N(); ++i) {
        Index k;
        o.U0.row(i).maxCoeff(&k);
        e.cluster_labels.push_back(o.cluster_ids[static_cast<std::size_t>(k)]);
    }
    std::ostringstream mx, lb, gm, ed;
    write_expression(mx, lb, e);
    GeneSetCollection sets;
    for (Index r = 0; r < o.R(); ++r) {
        GeneSet gs{o.set_ids[static_cast<std::size_t>(r)], "synthetic", {}};
        for (Index j = 0; j < o.D(); ++j)
            if (o.Z0(j, r) == 1.0)
                gs.members.push_back(o.feature_ids[static_cast<std::size_t>(j)]);
        if (gs.members.empty())
            throw DomainError("set " + gs.id +
                              " is empty; raise min-set-size or beta-a");
        sets.sets.push_back(std::move(gs));
    }
    write_gmt(gm, sets);
    write_edge_list(ed, o.graph);
    write_file(dir / "expression.tsv", mx.str());
    write_file(dir / "labels.tsv", lb.str());
    write_file(dir / "sets.gmt", gm.str());
    write_file(dir / "edges.txt", ed.str());

    const fs::path td = dir / "truth";
    write_file(td / "S.tsv", matrix_text("cluster", o.cluster_ids, o.set_ids, t.S));
    write_file(td / "V.tsv", matrix_text("feature", o.feature_ids, o.set_ids, t.V));
    write_file(td / "Z.tsv", matrix_text("feature", o.feature_ids, o.set_ids, t.Z));
    write_file(td / "Z0.tsv", matrix_text("feature", o.feature_ids, o.set_ids, t.Z0));
    write_file(td / "G.tsv", matrix_text("feature", o.feature_ids, o.set_ids, t.G));
    write_file(td / "pi.tsv", matrix_text("set", o.set_ids, {"pi"}, t.pi));
    write_file(td / "mean.tsv", matrix_text("sample", o.sample_ids, o.feature_ids, t.mean));
    std::ostringstream meta;
    meta << "gamma = " << format_number(t.gamma) << "\nseed = " << cfg.gen.seed
         << "\ncorruption = " << format_number(cfg.gen.corruption) << '\n';
    write_file(td / "meta", meta.str());

    std::ostringstream conf;
    conf << "expression = expression.tsv\nlabels = labels.tsv\ngmt = sets.gmt\n"
            "edges = edges.txt\n";
    write_file(dir / "fit.conf", conf.str());
    out << "wrote N=" << o.N() << " D=" << o.D() << " K=" << o.K() << " R=" << o.R()
        << " gamma=" << format_number(t.gamma) << " to " << dir.string() << '\n';
    return kOk;
}

namespace detail {

/// Rows of `m` reordered to `ids`, columns to `cols`; throws if a label is
/// missing.
inline Matrix pick(const LabeledMatrix& m, const std::vector<std::string>& ids,
                   const std::vector<std::string>& cols, const std::string& what) {
    std::unordered_map<std::string, Index> rp, cp;
    for (std::size_t i = 0; i < m.row_ids.size(); ++i)
        rp.emplace(m.row_ids[i], static_cast<Index>(i));
    for (std::size_t j = 0; j < m.col_ids.size(); ++j)
        cp.emplace(m.col_ids[j], static_cast<Index>(j));
    Matrix out(static_cast<Index>(ids.size()), static_cast<Index>(cols.size()));
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const auto ri = rp.find(ids[i]);
        if (ri == rp.end())
            throw FormatError(what + ": no row '" + ids[i] + "'");
        for (std::size_t j = 0; j < cols.size(); ++j) {
            const auto ci = cp.find(cols[j]);
            if (ci == cp.end())
                throw FormatError(what + ": no column '" + cols[j] + "'");
            out(static_cast<Index>(i), static_cast<Index>(j)) = m.values(ri->second, ci->second);
        }
    }
    return out;
}

} // namespace detail

/// Scores a fit directory against a simulate truth directory, matching
/// clusters, sets, features and samples by label.
inline Metrics evaluate_dirs(const fs::path& fit_dir, const fs::path& truth_dir, Index top_m) {
    const auto assoc = detail::read_matrix(fit_dir / "association.tsv");
    const auto z = detail::read_matrix(fit_dir / "z_posterior.tsv");
    const auto u = detail::read_matrix(fit_dir / "u_mixed.tsv");
    const auto v = detail::read_matrix(fit_dir / "v_posterior.tsv");
    const auto S = detail::read_matrix(truth_dir / "S.tsv");
    const auto V = detail::read_matrix(truth_dir / "V.tsv");
    const auto Z = detail::read_matrix(truth_dir / "Z.tsv");
    const auto Z0 = detail::read_matrix(truth_dir / "Z0.tsv");
    const auto mean = detail::read_matrix(truth_dir / "mean.tsv");

    const auto& clusters = assoc.row_ids;
    const auto& sets = assoc.col_ids;
    const auto& features = z.row_ids;
    const auto& samples = u.row_ids;

    Estimates e;
    e.assoc_mean = assoc.values;
    e.z_marginal = detail::pick(z, features, sets, "z_posterior.tsv");
    e.basis_mean = detail::pick(v, features, sets, "v_posterior.tsv");
    const Matrix um = detail::pick(u, samples, clusters, "u_mixed.tsv");
    e.reconstruction = um * e.assoc_mean * e.z_marginal.cwiseProduct(e.basis_mean).transpose();
    e.set_ids = sets;

    PlantedTruth t;
    t.S = detail::pick(S, clusters, sets, "S.tsv");
    t.V = detail::pick(V, features, sets, "V.tsv");
    t.Z = detail::pick(Z, features, sets, "Z.tsv");
    t.Z0 = detail::pick(Z0, features, sets, "Z0.tsv");
    t.mean = detail::pick(mean, samples, features, "mean.tsv");
    return score(e, t, top_m);
}

inline std::string metrics_text(const Metrics& m) {
    std::ostringstream os;
    os << "metric\tvalue\n"
       << "top_m\t" << m.top_m << '\n'
       << "precision_at_m\t" << format_number(m.precision_at_m) << '\n'
       << "rmse\t" << format_number(m.rmse) << '\n'
       << "auc_hidden\t" << format_number(m.auc_hidden) << '\n'
       << "sign_agreement\t" << format_number(m.sign_agreement) << '\n'
       << "hidden_positives\t" << m.hidden_positives << '\n'
       << "hidden_negatives\t" << m.hidden_negatives << '\n';
    return os.str();
}

inline int cmd_eval(const fs::path& fit_dir, const fs::path& truth_dir, Index top_m,
                    std::ostream& out) {
    const Metrics m = evaluate_dirs(fit_dir, truth_dir, top_m);
    const std::string text = metrics_text(m);
    write_file(fit_dir / "metrics.tsv", text);
    out << text;
    return kOk;
}

inline int cmd_rank(const fs::path& association, Index top_m, const std::string& out_path,
                    std::ostream& out) {
    const auto a = detail::read_matrix(association);
    AssociationResult res;
    res.assoc_mean = a.values;
    res.set_ids = a.col_ids;
    std::vector<std::vector<RankedSet>> ranked;
    for (Index k = 0; k < a.values.rows(); ++k)
        ranked.push_back(rank_sets(res, k, std::min<Index>(top_m, a.values.cols())));
    const std::string text = ranked_text(a.row_ids, ranked);
    if (out_path.empty())
        out << text;
    else
        write_file(out_path, text);
    return kOk;
}

// ---- Argument handling --------------------------------------------------

/// Moves `--config FILE` entries in front of the explicit flags, so that
/// flags given on the command line win. Relative paths in the file are taken
/// relative to the file itself.
inline std::vector<std::string> expand_config(const std::vector<std::string>& args) {
    if (args.empty())
        return args;
    std::vector<std::string> rest;
    std::vector<std::string> from_file;
    for (std::size_t i = 1; i < args.size(); ++i) {
        std::string path;
        if (args[i] == "--config") {
            if (i + 1 >= args.size())
                throw FormatError("--config needs a file");
            path = args[++i];
        } else if (args[i].rfind("--config=", 0) == 0) {
            path = args[i].substr(9);
        } else {
            rest.push_back(args[i]);
            continue;
        }
        const fs::path base = fs::path(path).parent_path();
        for (const auto& [k, v] : read_config(fs::path(path))) {
            if (k.rfind("meta.", 0) == 0)
                continue;
            std::string value = v;
            // paths inside a config file are relative to the file
            const bool is_path = k == "expression" || k == "labels" || k == "gmt" ||
                                 k == "edges" || k == "out";
            if (is_path && !value.empty() && fs::path(value).is_relative())
                value = (base / value).lexically_normal().string();
            from_file.push_back("--" + k + "=" + value);
        }
    }
    std::vector<std::string> out{args[0]};
    out.insert(out.end(), from_file.begin(), from_file.end());
    out.insert(out.end(), rest.begin(), rest.end());
    return out;
}

/// Runs one command. `args` excludes the program name.
inline int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Semi-nonnegative tri-factorization with graph-coupled sparsity", "sntf"};
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.require_subcommand(1);

    RunConfig fc;
    fc.hyper.schedule.threads = default_threads();
    double beta_a = 0.0;
    long long fit_seed = 1;
    auto* fit_cmd = app.add_subcommand("fit", "Fit the model to aligned data");
    fit_cmd->add_option("--config", "key = value file; flags override it");
    fit_cmd->add_option("--expression", fc.expression, "Expression matrix TSV")->required();
    fit_cmd->add_option("--labels", fc.labels, "Sample label TSV")->required();
    fit_cmd->add_option("--gmt", fc.gmt, "Gene sets (GMT)")->required();
    fit_cmd->add_option("--edges", fc.edges, "Interaction edge list")->required();
    fit_cmd->add_option("--out", fc.out_dir, "Output directory")->required();
    fit_cmd->add_option("--alpha-a0", fc.hyper.alpha_a0, "Noise Gamma shape");
    fit_cmd->add_option("--alpha-b0", fc.hyper.alpha_b0, "Noise Gamma rate");
    fit_cmd->add_option("--lambda-s0", fc.hyper.lambda_S0, "Exponential rate of S");
    fit_cmd->add_option("--mu-v0", fc.hyper.mu_V0, "Prior mean of V");
    fit_cmd->add_option("--sigma-v0", fc.hyper.sigma_V0, "Prior variance of V");
    auto* beta_opt = fit_cmd->add_option("--beta-a", beta_a, "Sparsity mass (default R/10)");
    fit_cmd->add_option("--zeta", fc.hyper.zeta, "Weight of the observed cluster labels");
    fit_cmd->add_option("--xi", fc.hyper.xi, "Membership penalty strength");
    fit_cmd->add_option("--epsilon", fc.hyper.epsilon, "Laplacian jitter");
    fit_cmd->add_option("--max-sweeps", fc.hyper.schedule.max_sweeps, "Sweep limit");
    fit_cmd->add_option("--elbo-rel-tol", fc.hyper.schedule.elbo_rel_tol,
                        "Relative convergence tolerance");
    fit_cmd->add_option("--seed", fit_seed, "Initialization seed");
    fit_cmd->add_option("--threads", fc.hyper.schedule.threads,
                        "Worker threads (default $SNTF_THREADS or 1)");
    fit_cmd->add_option("--top-m", fc.top_m, "Sets listed per cluster");
    fit_cmd->add_flag("--clamp-constraints", fc.clamp_constraints,
                      "Report q(Z = 1) = 1 on known memberships");
    fit_cmd->add_flag("--constrained-start", fc.constrained_start,
                      "Start known memberships near q(Z = 1) = 0.98");
    fit_cmd->add_option("--coupling-warmup", fc.coupling_warmup,
                        "Sweeps before the membership block is updated");

    SimulateConfig sc;
    sc.gen.min_set_size = 1;
    double snr = 0.0;
    long long sim_seed = 1;
    auto* sim_cmd = app.add_subcommand("simulate", "Write a planted synthetic dataset");
    sim_cmd->add_option("--config", "key = value file; flags override it");
    sim_cmd->add_option("--out", sc.out_dir, "Output directory")->required();
    sim_cmd->add_option("-N,--samples", sc.gen.N, "Samples");
    sim_cmd->add_option("-K,--clusters", sc.gen.K, "Clusters");
    sim_cmd->add_option("-D,--features", sc.gen.D, "Features");
    sim_cmd->add_option("-R,--sets", sc.gen.R, "Feature sets");
    sim_cmd->add_option("--corruption", sc.gen.corruption, "Fraction of memberships hidden");
    sim_cmd->add_option("--seed", sim_seed, "Random seed");
    auto* snr_opt = sim_cmd->add_option("--snr", snr, "Signal-to-noise ratio (sets gamma)");
    sim_cmd->add_option("--gamma", sc.gen.gamma, "Noise precision");
    sim_cmd->add_option("--beta-a", sc.gen.beta_a, "Sparsity mass");
    sim_cmd->add_option("--edge-prob", sc.gen.edge_prob, "Random-graph edge probability");
    sim_cmd->add_option("--epsilon", sc.gen.epsilon, "Laplacian jitter");
    sim_cmd->add_option("--lambda-s", sc.gen.lambda_S, "Exponential rate of S");
    sim_cmd->add_option("--mu-v", sc.gen.mu_V, "Mean of V");
    sim_cmd->add_option("--sigma-v", sc.gen.sigma_V, "Variance of V");
    sim_cmd->add_option("--min-set-size", sc.gen.min_set_size, "Smallest planted set");
    sim_cmd->add_flag("--independent", sc.gen.independent, "No graph coupling");

    std::string fit_dir, truth_dir;
    Index eval_top_m = 5;
    auto* eval_cmd = app.add_subcommand("eval", "Score a fit against a planted truth");
    eval_cmd->add_option("--config", "key = value file; flags override it");
    eval_cmd->add_option("--fit-dir", fit_dir, "Output directory of fit")->required();
    eval_cmd->add_option("--truth-dir", truth_dir, "truth/ directory of simulate")->required();
    eval_cmd->add_option("--top-m", eval_top_m, "Planted top sets per cluster");

    std::string assoc_path, rank_out;
    Index rank_top_m = 5;
    auto* rank_cmd = app.add_subcommand("rank", "Re-rank an association.tsv");
    rank_cmd->add_option("--config", "key = value file; flags override it");
    rank_cmd->add_option("--association", assoc_path, "association.tsv of a fit")->required();
    rank_cmd->add_option("--top-m", rank_top_m, "Sets listed per cluster");
    rank_cmd->add_option("--out", rank_out, "Output file (default stdout)");

    try {
        const auto args = expand_config(raw_args);
        std::vector<const char*> argv{"sntf"};
        for (const auto& a : args)
            argv.push_back(a.c_str());
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            out << app.help();
            if (!app.get_subcommands().empty())
                out << app.get_subcommands().front()->help();
            return kOk;
        }
        err << "error: " << e.what() << '\n';
        return kInputError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kInputError;
    }

    try {
        if (fit_cmd->parsed()) {
            if (beta_opt->count() > 0)
                fc.hyper.beta_a = beta_a;
            if (fit_seed < 0)
                throw DomainError("seed must be >= 0");
            fc.hyper.schedule.seed = static_cast<std::uint64_t>(fit_seed);
            return cmd_fit(fc, out, err);
        }
        if (sim_cmd->parsed()) {
            if (snr_opt->count() > 0)
                sc.gen.snr = snr;
            if (sim_seed < 0)
                throw DomainError("seed must be >= 0");
            sc.gen.seed = static_cast<std::uint64_t>(sim_seed);
            return cmd_simulate(sc, out);
        }
        if (eval_cmd->parsed())
            return cmd_eval(fit_dir, truth_dir, eval_top_m, out);
        if (rank_cmd->parsed())
            return cmd_rank(assoc_path, rank_top_m, rank_out, out);
    } catch (const NumericalError& e) {
        err << "numerical error in " << e.what() << '\n';
        return kNumericalError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kInputError;
    }
    return kInputError;
}

inline int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args, std::cout, std::cerr);
}

} // namespace sntf::cli
