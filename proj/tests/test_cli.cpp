#include "sntf/cli.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>
#include <sys/wait.h>

using namespace sntf;
using namespace sntf::cli;
namespace fs = std::filesystem;

namespace {

const fs::path kExample = SNTF_EXAMPLE_DIR;

const char* const kFitFiles[] = {"association.tsv", "z_posterior.tsv", "u_mixed.tsv",
                                 "ranked_sets.tsv", "elbo_trace.tsv",  "run_meta"};

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("sntf_cli_test_" + name);
    fs::remove_all(p);
    return p;
}

struct Result {
    int code;
    std::string out, err;
};

Result call(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run(args, out, err);
    return {code, out.str(), err.str()};
}

// Runs the installed binary; only the exit status and stderr are kept.
Result spawn(const std::string& args) {
    const auto err_file = scratch("stderr");
    const std::string cmd =
        std::string(SNTF_CLI_PATH) + " " + args + " >/dev/null 2>" + err_file.string();
    const int status = std::system(cmd.c_str());
    std::ifstream in(err_file);
    std::stringstream ss;
    ss << in.rdbuf();
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, "", ss.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

LabeledMatrix matrix(const fs::path& p) {
    std::ifstream in(p);
    return parse_labeled_matrix(in);
}

Result fit_example(const fs::path& out, std::vector<std::string> extra = {}) {
    std::vector<std::string> args{"fit", "--config", (kExample / "fit.conf").string(),
                                  "--out", out.string(), "--max-sweeps", "2000"};
    args.insert(args.end(), extra.begin(), extra.end());
    return call(args);
}

void expect_same_outputs(const fs::path& a, const fs::path& b) {
    for (const char* f : kFitFiles)
        EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
}

} // namespace

TEST(Config, ParsesKeyValueLines) {
    std::istringstream in("# comment\n max_sweeps = 40 \n\nseed=\"3\"\n  # x = y\n");
    const auto kv = read_config(in);
    ASSERT_EQ(kv.size(), 2u);
    EXPECT_EQ(kv[0], (std::pair<std::string, std::string>{"max-sweeps", "40"}));
    EXPECT_EQ(kv[1], (std::pair<std::string, std::string>{"seed", "3"}));
    std::istringstream bad("max-sweeps 40\n");
    EXPECT_THROW(read_config(bad), FormatError);
}

TEST(Fit, ExampleWritesAllOutputsWithMonotoneTrace) {
    const auto dir = scratch("smoke");
    const auto r = fit_example(dir);
    ASSERT_EQ(r.code, kOk) << r.err;
    for (const char* f : kFitFiles)
        EXPECT_TRUE(fs::exists(dir / f)) << f;
    const auto trace = matrix(dir / "elbo_trace.tsv");
    ASSERT_GT(trace.values.rows(), 1);
    const auto obj = trace.values.col(2);
    for (Index t = 1; t < obj.size(); ++t)
        EXPECT_GE(obj(t) - obj(t - 1), -1e-8 * std::abs(obj(t - 1))) << t;
    // every matrix output parses back with the data's labels
    const auto assoc = matrix(dir / "association.tsv");
    const auto z = matrix(dir / "z_posterior.tsv");
    EXPECT_EQ(assoc.values.rows(), 3);
    EXPECT_EQ(assoc.col_ids, z.col_ids);
    EXPECT_GE(z.values.minCoeff(), 0.0);
    EXPECT_LE(z.values.maxCoeff(), 1.0);
    std::ifstream rin(dir / "ranked_sets.tsv");
    EXPECT_EQ(parse_ranked(rin).size(), 3u * 5u);
}

TEST(Fit, RerunIsByteIdentical) {
    const auto a = scratch("rerun_a"), b = scratch("rerun_b");
    ASSERT_EQ(fit_example(a).code, kOk);
    ASSERT_EQ(fit_example(b).code, kOk);
    expect_same_outputs(a, b);
}

TEST(Fit, ThreadCountDoesNotChangeBytes) {
    const auto a = scratch("threads_1"), b = scratch("threads_8");
    ASSERT_EQ(fit_example(a, {"--threads", "1"}).code, kOk);
    ASSERT_EQ(fit_example(b, {"--threads", "8"}).code, kOk);
    expect_same_outputs(a, b);
}

TEST(Fit, RunMetaReproducesTheRun) {
    const auto a = scratch("meta_a"), b = scratch("meta_b");
    ASSERT_EQ(fit_example(a, {"--seed", "5", "--xi", "20"}).code, kOk);
    const auto r = call({"fit", "--config", (a / "run_meta").string(), "--out", b.string()});
    ASSERT_EQ(r.code, kOk) << r.err;
    expect_same_outputs(a, b);
}

TEST(Fit, FullLabelWeightGivesOneHotMixing) {
    const auto dir = scratch("zeta1");
    ASSERT_EQ(fit_example(dir, {"--zeta", "1"}).code, kOk);
    const auto u = matrix(dir / "u_mixed.tsv");
    std::ifstream l(kExample / "labels.tsv");
    std::map<std::string, std::string> label;
    std::string s, k;
    while (l >> s >> k)
        label[s] = k;
    for (std::size_t i = 0; i < u.row_ids.size(); ++i)
        for (std::size_t c = 0; c < u.col_ids.size(); ++c)
            EXPECT_EQ(u.values(static_cast<Index>(i), static_cast<Index>(c)),
                      label.at(u.row_ids[i]) == u.col_ids[c] ? 1.0 : 0.0);
}

TEST(Fit, FlagsOverrideConfigFile) {
    const auto dir = scratch("override");
    const auto conf = scratch("override.conf");
    std::ofstream(conf) << "max-sweeps = 1000\nxi = 5\n";
    const auto r = call({"fit", "--config", (kExample / "fit.conf").string(), "--config",
                         conf.string(), "--out", dir.string(), "--max-sweeps", "3"});
    EXPECT_EQ(r.code, kMaxSweeps);
    std::ifstream in(dir / "run_meta");
    std::map<std::string, std::string> meta;
    for (const auto& [key, value] : read_config(in))
        meta[key] = value;
    EXPECT_EQ(meta.at("max-sweeps"), "3");
    EXPECT_EQ(meta.at("xi"), "5");
    EXPECT_EQ(meta.at("meta.sweeps"), "3");
    EXPECT_EQ(matrix(dir / "elbo_trace.tsv").values.rows(), 4);
}

TEST(Simulate, FilesParseBackToTheGeneratedData) {
    const auto dir = scratch("sim_roundtrip");
    ASSERT_EQ(call({"simulate", "--out", dir.string(), "-N", "60", "-K", "3", "-D", "40", "-R",
                    "8", "--corruption", "0.1", "--seed", "7"})
                  .code,
              kOk);
    GenerateConfig c;
    c.N = 60;
    c.K = 3;
    c.D = 40;
    c.R = 8;
    c.corruption = 0.1;
    c.seed = 7;
    c.min_set_size = 1;
    const auto ds = generate(c);

    std::ifstream m(dir / "expression.tsv"), l(dir / "labels.tsv"), g(dir / "sets.gmt"),
        e(dir / "edges.txt");
    const auto expr = parse_expression(m, l);
    EXPECT_EQ(expr.X, ds.data.X);
    EXPECT_EQ(expr.feature_ids, ds.data.feature_ids);
    const auto sets = parse_gmt(g);
    const auto graph = parse_edge_list(e);
    EXPECT_EQ(graph, ds.data.graph);
    ASSERT_EQ(sets.size(), 8u);
    Matrix z0 = Matrix::Zero(40, 8);
    for (std::size_t r = 0; r < sets.size(); ++r)
        for (const auto& id : sets.sets[r].members)
            z0(std::stoi(id.substr(1)) - 1, static_cast<Index>(r)) = 1.0;
    EXPECT_EQ(z0, ds.data.Z0);
    EXPECT_EQ(matrix(dir / "truth" / "Z.tsv").values, ds.truth.Z);
    EXPECT_EQ(matrix(dir / "truth" / "S.tsv").values, ds.truth.S);
    EXPECT_EQ(matrix(dir / "truth" / "V.tsv").values, ds.truth.V);
    EXPECT_EQ(matrix(dir / "truth" / "mean.tsv").values, ds.truth.mean);
}

TEST(Simulate, NoCorruptionEmitsTrueMask) {
    const auto dir = scratch("sim_rho0");
    ASSERT_EQ(call({"simulate", "--out", dir.string(), "--corruption", "0", "--seed", "3"}).code,
              kOk);
    EXPECT_EQ(matrix(dir / "truth" / "Z0.tsv"), matrix(dir / "truth" / "Z.tsv"));
}

TEST(Simulate, SeedsGiveDifferentData) {
    const auto a = scratch("sim_seed_a"), b = scratch("sim_seed_b");
    ASSERT_EQ(call({"simulate", "--out", a.string(), "--seed", "1"}).code, kOk);
    ASSERT_EQ(call({"simulate", "--out", b.string(), "--seed", "2"}).code, kOk);
    EXPECT_NE(slurp(a / "expression.tsv"), slurp(b / "expression.tsv"));
    const auto c = scratch("sim_seed_c");
    ASSERT_EQ(call({"simulate", "--out", c.string(), "--seed", "1"}).code, kOk);
    EXPECT_EQ(slurp(a / "expression.tsv"), slurp(c / "expression.tsv"));
    EXPECT_EQ(slurp(a / "sets.gmt"), slurp(c / "sets.gmt"));
}

TEST(Simulate, InvalidDimsExitOne) {
    EXPECT_EQ(call({"simulate", "--out", scratch("sim_bad").string(), "-K", "0"}).code,
              kInputError);
    EXPECT_EQ(call({"simulate", "--out", scratch("sim_bad").string(), "-N", "2", "-K", "5"}).code,
              kInputError);
}

namespace {

// A fit directory holding exactly the planted quantities.
void write_oracle_fit(const fs::path& sim, const fs::path& dir) {
    fs::create_directories(dir);
    const fs::path t = sim / "truth";
    fs::copy_file(t / "S.tsv", dir / "association.tsv");
    fs::copy_file(t / "Z.tsv", dir / "z_posterior.tsv");
    fs::copy_file(t / "V.tsv", dir / "v_posterior.tsv");
    std::ifstream m(sim / "expression.tsv"), l(sim / "labels.tsv");
    const auto e = parse_expression(m, l);
    const auto S = matrix(t / "S.tsv");
    Matrix u = Matrix::Zero(e.X.rows(), static_cast<Index>(S.row_ids.size()));
    for (std::size_t i = 0; i < e.sample_ids.size(); ++i)
        for (std::size_t k = 0; k < S.row_ids.size(); ++k)
            if (e.cluster_labels[i] == S.row_ids[k])
                u(static_cast<Index>(i), static_cast<Index>(k)) = 1.0;
    write_file(dir / "u_mixed.tsv", matrix_text("sample", e.sample_ids, S.row_ids, u));
}

} // namespace

TEST(Eval, OracleFixtureIsPerfect) {
    const auto sim = scratch("eval_sim"), dir = scratch("eval_oracle");
    ASSERT_EQ(call({"simulate", "--out", sim.string(), "--seed", "4", "--corruption", "0.2",
                    "--min-set-size", "2"})
                  .code,
              kOk);
    write_oracle_fit(sim, dir);
    const auto r = call({"eval", "--fit-dir", dir.string(), "--truth-dir",
                         (sim / "truth").string(), "--top-m", "3"});
    ASSERT_EQ(r.code, kOk) << r.err;
    const auto m = matrix(dir / "metrics.tsv");
    std::map<std::string, double> v;
    for (std::size_t i = 0; i < m.row_ids.size(); ++i)
        v[m.row_ids[i]] = m.values(static_cast<Index>(i), 0);
    EXPECT_EQ(v.at("precision_at_m"), 1.0);
    EXPECT_LT(v.at("rmse"), 1e-12);
    EXPECT_EQ(v.at("auc_hidden"), 1.0);
    EXPECT_EQ(v.at("sign_agreement"), 1.0);
}

TEST(Eval, ChanceFixtureScoresNearMOverR) {
    const auto sim = scratch("chance_sim"), dir = scratch("chance_fit");
    ASSERT_EQ(call({"simulate", "--out", sim.string(), "--seed", "9", "-R", "10"}).code, kOk);
    write_oracle_fit(sim, dir);
    auto assoc = matrix(dir / "association.tsv");
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const int trials = 300;
    double s = 0.0, s2 = 0.0;
    for (int t = 0; t < trials; ++t) {
        for (Index i = 0; i < assoc.values.size(); ++i)
            assoc.values(i) = u(rng);
        write_file(dir / "association.tsv",
                   matrix_text("cluster", assoc.row_ids, assoc.col_ids, assoc.values));
        const double p = evaluate_dirs(dir, sim / "truth", 3).precision_at_m;
        s += p;
        s2 += p * p;
    }
    const double mean = s / trials;
    const double se = std::sqrt((s2 / trials - mean * mean) / trials);
    EXPECT_NEAR(mean, 0.3, 3.0 * se);
}

TEST(Eval, MissingFilesExitOne) {
    const auto sim = scratch("eval_missing_sim"), dir = scratch("eval_missing");
    ASSERT_EQ(call({"simulate", "--out", sim.string()}).code, kOk);
    write_oracle_fit(sim, dir);
    fs::remove(dir / "v_posterior.tsv");
    const auto r = call({"eval", "--fit-dir", dir.string(), "--truth-dir",
                         (sim / "truth").string()});
    EXPECT_EQ(r.code, kInputError);
    EXPECT_NE(r.err.find("v_posterior.tsv"), std::string::npos);
}

TEST(Rank, ReRanksWithNewTopM) {
    const auto dir = scratch("rank");
    ASSERT_EQ(fit_example(dir).code, kOk);
    const auto out = dir / "top2.tsv";
    ASSERT_EQ(call({"rank", "--association", (dir / "association.tsv").string(), "--top-m", "2",
                    "--out", out.string()})
                  .code,
              kOk);
    std::ifstream a(dir / "ranked_sets.tsv"), b(out);
    const auto full = parse_ranked(a), top2 = parse_ranked(b);
    std::vector<RankedRow> want;
    for (const auto& row : full)
        if (row.rank <= 2)
            want.push_back(row);
    EXPECT_EQ(top2, want);
}

TEST(ExitCodes, ProcessLevelContract) {
    const std::string conf = (kExample / "fit.conf").string();
    const auto out = scratch("exit_out");
    EXPECT_EQ(spawn("fit --config " + conf + " --out " + out.string()).code, kOk);
    EXPECT_EQ(spawn("fit --config " + conf + " --out " + out.string() + " --max-sweeps 2").code,
              kMaxSweeps);
    EXPECT_EQ(spawn("fit --config " + conf + " --out " + out.string() + " --zeta 2").code,
              kInputError);
    EXPECT_EQ(spawn("frobnicate").code, kInputError);

    // malformed expression file: the message names the file and the line
    const auto bad = scratch("exit_bad");
    fs::create_directories(bad);
    for (const char* f : {"labels.tsv", "sets.gmt", "edges.txt", "fit.conf"})
        fs::copy_file(kExample / f, bad / f);
    std::string text = slurp(kExample / "expression.tsv");
    const auto third = text.find('\n', text.find('\n') + 1);
    text.insert(text.find('\t', third + 1) + 1, "x");
    write_file(bad / "expression.tsv", text);
    const auto r = spawn("fit --config " + (bad / "fit.conf").string() + " --out " +
                         out.string());
    EXPECT_EQ(r.code, kInputError);
    EXPECT_NE(r.err.find("expression.tsv"), std::string::npos) << r.err;
    EXPECT_NE(r.err.find("line 3"), std::string::npos) << r.err;

    // values this large overflow the likelihood
    const auto huge = scratch("exit_huge");
    fs::create_directories(huge);
    for (const char* f : {"labels.tsv", "sets.gmt", "edges.txt", "fit.conf"})
        fs::copy_file(kExample / f, huge / f);
    auto e = matrix(kExample / "expression.tsv");
    e.values *= 1e200;
    write_file(huge / "expression.tsv", matrix_text(e.corner, e.row_ids, e.col_ids, e.values));
    EXPECT_EQ(spawn("fit --config " + (huge / "fit.conf").string() + " --out " + out.string())
                  .code,
              kNumericalError);
}
