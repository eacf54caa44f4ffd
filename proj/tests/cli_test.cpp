#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "slowfast/run.hpp"

namespace fs = std::filesystem;
using namespace slowfast;

namespace {

template <typename Fn>
void expect_error(ErrorCode want, Fn&& fn) {
    try {
        fn();
        FAIL() << "expected " << error_code_name(want);
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), want) << "got: " << e.what();
    }
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    EXPECT_TRUE(in.good()) << "cannot read " << p;
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
    fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    out << text;
    ASSERT_TRUE(out.good()) << "cannot write " << p;
}

fs::path fresh_dir(const std::string& name) {
    fs::path d = fs::temp_directory_path() / "slowfast_cli_test" / name;
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

std::size_t count_lines(const std::string& s) {
    std::size_t n = 0;
    for (char c : s)
        if (c == '\n') ++n;
    return n;
}

std::vector<std::string> split_lines(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream ss(s);
    std::string line;
    while (std::getline(ss, line)) out.push_back(line);
    return out;
}

/* value of the first "key=value" line in a run summary */
std::string summary_value(const std::string& summary, const std::string& key) {
    for (const auto& line : split_lines(summary))
        if (line.rfind(key + "=", 0) == 0) return line.substr(key.size() + 1);
    ADD_FAILURE() << "summary has no line " << key << "=";
    return "";
}

std::string drop_wall_line(const std::string& summary) {
    std::string out;
    for (const auto& line : split_lines(summary))
        if (line.rfind("wall_seconds=", 0) != 0) out += line + "\n";
    return out;
}

const std::string kBuiltinSys = "[system]\nbuiltin = markov-sym\n";

RunConfig load_into(const std::string& text, const fs::path& out_dir) {
    RunConfig cfg = load_config_text(text);
    cfg.out_dir = out_dir.string();
    return cfg;
}

} // namespace

/* ------------------------------------------------------------- parse layer */

TEST(ConfigParse, RoundTripIsStable) {
    const std::string text =
        "[system]\n"
        "builtin = iid-bessel\n"
        "[run]\n"
        "command = exit-times\n"
        "epsilons = 0.05, 0.04\n"
        "replicas = 10\n"
        "v_lo = -0.3\n"
        "v_hi = 0.3\n"
        "x0 = 0.0\n"
        "cap_slow = 100\n"
        "seed = 7\n"
        "[output]\n"
        "dir = somewhere\n"
        "svg = 1\n";
    RunConfig a = load_config_text(text);
    const std::string once = serialize_config(a);
    RunConfig b = load_config_text(once);
    EXPECT_EQ(once, serialize_config(b));
    EXPECT_EQ(b.command, "exit-times");
    EXPECT_EQ(b.seed, 7u);
    EXPECT_EQ(b.out_dir, "somewhere");
    EXPECT_TRUE(b.emit_svg);
}

TEST(ConfigParse, CommentsBlanksAndPaddingIgnored) {
    const std::string text =
        "# leading comment\n"
        "\n"
        "[run]   # trailing comment on a header\n"
        "  command   =   sim-histogram  \n"
        "steps = 100   # inline comment\n"
        "\n"
        "[system]\n"
        "builtin = markov-sym\n";
    RunConfig cfg = load_config_text(text);
    EXPECT_EQ(cfg.command, "sim-histogram");
    ASSERT_TRUE(cfg.has(cfg.run, "steps"));
    EXPECT_EQ(cfg.find(cfg.run, "steps")->value, "100");
}

TEST(ConfigParse, DuplicateKeyNamesBothLines) {
    const std::string text =
        "[run]\n"
        "command = sim-histogram\n"
        "steps = 100\n"
        "steps = 200\n";
    try {
        load_config_text(text);
        FAIL() << "expected ParseError";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ParseError);
        const std::string msg = e.what();
        EXPECT_NE(msg.find("duplicate key 'steps'"), std::string::npos) << msg;
        EXPECT_NE(msg.find("line 4"), std::string::npos) << msg;
        EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
    }
}

TEST(ConfigParse, StructuralErrorsRejected) {
    expect_error(ErrorCode::ParseError, [] { load_config_text("[run\ncommand = sim-histogram\n"); });
    expect_error(ErrorCode::ParseError, [] { load_config_text("[nonsense]\nx = 1\n"); });
    expect_error(ErrorCode::ParseError, [] { load_config_text("command = sim-histogram\n"); });
    expect_error(ErrorCode::ParseError, [] { load_config_text("[run]\n= 3\n"); });
}

TEST(ConfigParse, MissingEqualsReportsColumn) {
    try {
        load_config_text("[run]\ncommand sim-histogram\n");
        FAIL() << "expected ParseError";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ParseError);
        const std::string msg = e.what();
        EXPECT_NE(msg.find("line 2"), std::string::npos) << msg;
        EXPECT_NE(msg.find("column"), std::string::npos) << msg;
    }
}

TEST(ConfigParse, ValueValidationIsEager) {
    const std::string head = kBuiltinSys + "[run]\ncommand = sim-histogram\n";
    expect_error(ErrorCode::RangeError, [&] { load_config_text(head + "steps = -5\n"); });
    expect_error(ErrorCode::RangeError, [&] { load_config_text(head + "steps = 2.5\n"); });
    expect_error(ErrorCode::ParseError, [&] { load_config_text(head + "steps = 100\nx0 = abc\n"); });
    expect_error(ErrorCode::ParseError, [&] { load_config_text(head + "steps = 1e400\n"); });
}

TEST(ConfigParse, ListValidation) {
    const std::string head = kBuiltinSys +
                             "[run]\ncommand = exit-times\nreplicas = 5\nv_lo = -1\nv_hi = 1\n"
                             "x0 = 0\ncap_slow = 10\n";
    RunConfig ok = load_config_text(head + "epsilons = 0.05,0.04 , 0.02\n");
    EXPECT_EQ(cfg_list(ok, ok.run, "epsilons").size(), 3u);
    expect_error(ErrorCode::ParseError, [&] { load_config_text(head + "epsilons = 0.05,,0.02\n"); });
    expect_error(ErrorCode::ParseError, [&] { load_config_text(head + "epsilons = \n"); });
}

/* ------------------------------------------------------------ schema layer */

TEST(ConfigSchema, UnknownCommandRejected) {
    expect_error(ErrorCode::UnknownName,
                 [] { load_config_text("[run]\ncommand = frobnicate\n"); });
}

TEST(ConfigSchema, KeyFromAnotherCommandRejected) {
    expect_error(ErrorCode::UnknownKey, [] {
        load_config_text(kBuiltinSys + "[run]\ncommand = sim-histogram\nsteps = 10\nrho = 0.1\n");
    });
}

TEST(ConfigSchema, MissingRequiredKeyRejected) {
    expect_error(ErrorCode::MissingKey, [] {
        load_config_text(kBuiltinSys + "[run]\ncommand = averaging-check\nhorizon = 1\nreplicas = 5\n");
    });
}

TEST(ConfigSchema, ExitTimesNeedsOneCapKey) {
    const std::string base = kBuiltinSys +
                             "[run]\ncommand = exit-times\nepsilons = 0.05\nreplicas = 5\n"
                             "v_lo = -1\nv_hi = 1\nx0 = 0\n";
    expect_error(ErrorCode::MissingKey, [&] { load_config_text(base); });
    EXPECT_NO_THROW(load_config_text(base + "cap_slow = 10\n"));
    EXPECT_NO_THROW(load_config_text(base + "cap_r_hat = 0.2\n"));
}

TEST(ConfigSchema, BuiltinSystemTakesNoExtraKeys) {
    expect_error(ErrorCode::UnknownKey, [] {
        load_config_text("[system]\nbuiltin = markov-sym\nepsilon = 0.05\n"
                         "[run]\ncommand = sim-histogram\nsteps = 10\n");
    });
}

TEST(ConfigSchema, InlineSystemValidation) {
    const std::string run = "[run]\ncommand = sim-histogram\nsteps = 10\n";
    const std::string good =
        "[system]\nfamily = polysin\npoly = 0, 1\ndriver = additive-uniform\n"
        "epsilon = 0.01\ndomain_lo = -1\ndomain_hi = 1\n";
    EXPECT_NO_THROW(load_config_text(good + run));

    expect_error(ErrorCode::MissingKey, [&] {
        load_config_text("[system]\nfamily = polysin\npoly = 0, 1\ndriver = additive-uniform\n"
                         "epsilon = 0.01\ndomain_lo = -1\n" +
                         run);
    });
    expect_error(ErrorCode::UnknownName, [&] {
        load_config_text("[system]\nfamily = quadratic\npoly = 0, 1\ndriver = additive-uniform\n"
                         "epsilon = 0.01\ndomain_lo = -1\ndomain_hi = 1\n" +
                         run);
    });
    expect_error(ErrorCode::UnknownName, [&] {
        load_config_text("[system]\nfamily = polysin\npoly = 0, 1\ndriver = gaussian\n"
                         "epsilon = 0.01\ndomain_lo = -1\ndomain_hi = 1\n" +
                         run);
    });
    // the expanding driver needs its branching factor
    expect_error(ErrorCode::MissingKey, [&] {
        load_config_text("[system]\nfamily = polysin\npoly = 0, 1\ndriver = expanding\n"
                         "epsilon = 0.01\ndomain_lo = -1\ndomain_hi = 1\n" +
                         run);
    });
    expect_error(ErrorCode::UnknownKey, [&] {
        load_config_text(good + "[system]\nrho = 0.1\n" + run);
    });
}

TEST(ConfigSchema, SystemSectionRequiredExceptForResonance) {
    expect_error(ErrorCode::MissingKey,
                 [] { load_config_text("[run]\ncommand = quasipotential\n"); });
    RunConfig cfg =
        load_config_text("[run]\ncommand = resonance\nrho = 0.1\nepsilon = 0.01\nsteps = 10\n");
    EXPECT_EQ(cfg.command, "resonance");
}

TEST(ConfigSchema, OutputSectionKeysRestricted) {
    expect_error(ErrorCode::UnknownKey, [] {
        load_config_text(kBuiltinSys +
                         "[run]\ncommand = sim-histogram\nsteps = 10\n[output]\nformat = png\n");
    });
}

/* --------------------------------------------------------- system building */

TEST(SystemFromConfig, PolysinMatchesTheFormula) {
    RunConfig cfg = load_config_text(
        "[system]\nfamily = polysin\npoly = 1, 2, 3\nsin_amp = 0.7\n"
        "driver = additive-uniform\nepsilon = 0.02\ndomain_lo = -2\ndomain_hi = 2\n"
        "[run]\ncommand = sim-histogram\nsteps = 1\n");
    SystemSpec sys = make_system_from_config(cfg);
    EXPECT_EQ(sys.epsilon, 0.02);
    EXPECT_EQ(sys.slow_domain.box[0][0], -2.0);
    EXPECT_EQ(sys.slow_domain.box[0][1], 2.0);
    for (double x : {-1.5, -0.3, 0.0, 0.8}) {
        for (double y : {0.0, 0.25, 0.6}) {
            const double want = 1.0 + 2.0 * x + 3.0 * x * x + 0.7 * std::sin(kTwoPi * y);
            EXPECT_NEAR(sys.drift.rule(SlowVec(x), y).scalar(), want, 1e-14);
        }
    }
}

TEST(SystemFromConfig, AutoBoundCoversTheDrift) {
    RunConfig cfg = load_config_text(
        "[system]\nfamily = polysin\npoly = 0, -4, 0, 5, 0, -1\nsin_amp = 1\n"
        "driver = additive-uniform\nepsilon = 0.01\ndomain_lo = -3\ndomain_hi = 3\n"
        "[run]\ncommand = sim-histogram\nsteps = 1\n");
    SystemSpec sys = make_system_from_config(cfg);
    double peak = 0.0;
    for (int i = 0; i <= 300; ++i)
        for (int k = 0; k < 16; ++k)
            peak = std::max(peak, std::fabs(sys.drift.rule(SlowVec(-3.0 + 6.0 * i / 300.0),
                                                           k / 16.0)
                                                .scalar()));
    EXPECT_GE(sys.drift.bound, peak);
}

TEST(SystemFromConfig, UserBoundTooSmallRejected) {
    RunConfig cfg = load_config_text(
        "[system]\nfamily = polysin\npoly = 5\nbound = 0.1\ndriver = additive-uniform\n"
        "epsilon = 0.01\ndomain_lo = -1\ndomain_hi = 1\n"
        "[run]\ncommand = sim-histogram\nsteps = 1\n");
    expect_error(ErrorCode::BoundViolated, [&] { make_system_from_config(cfg); });
}

TEST(SystemFromConfig, ReversedDomainRejected) {
    RunConfig cfg = load_config_text(
        "[system]\nfamily = polysin\npoly = 0, 1\ndriver = additive-uniform\n"
        "epsilon = 0.01\ndomain_lo = 2\ndomain_hi = -2\n"
        "[run]\ncommand = sim-histogram\nsteps = 1\n");
    expect_error(ErrorCode::BadDomain, [&] { make_system_from_config(cfg); });
}

TEST(SystemFromConfig, BuiltinLookup) {
    RunConfig cfg = load_config_text("[system]\nbuiltin = iid-bessel\n"
                                     "[run]\ncommand = sim-histogram\nsteps = 1\n");
    SystemSpec sys = make_system_from_config(cfg);
    EXPECT_EQ(sys.name, "iid-bessel");
    EXPECT_EQ(sys.epsilon, 0.05);
}

/* ------------------------------------------------------------- svg drawing */

TEST(Svg, BarsScaleWithCounts) {
    Histogram h(0.0, 3.0, 3);
    h.add(0.5);
    h.add(1.2);
    h.add(1.7);
    h.add(2.4);
    const std::string svg = svg_histogram(h);
    std::vector<double> heights;
    for (const auto& line : split_lines(svg)) {
        if (line.find("steelblue") == std::string::npos) continue;
        const std::size_t at = line.find("height=\"");
        ASSERT_NE(at, std::string::npos) << line;
        heights.push_back(std::stod(line.substr(at + 8)));
    }
    ASSERT_EQ(heights.size(), 3u);
    EXPECT_NEAR(heights[0], 250.0, 0.01);
    EXPECT_NEAR(heights[1], 500.0, 0.01);  // the peak bin spans the full plot height
    EXPECT_NEAR(heights[2], 250.0, 0.01);
}

TEST(Svg, EmptyHistogramRejected) {
    Histogram empty(0.0, 1.0, 4);
    expect_error(ErrorCode::EmptyData, [&] { svg_histogram(empty); });
    Histogram off_range(0.0, 1.0, 4);
    off_range.add(5.0);  // counted, but lands out of range: all bins stay zero
    expect_error(ErrorCode::EmptyData, [&] { svg_histogram(off_range); });
}

TEST(Svg, TraceNeedsTwoAlignedSamples) {
    expect_error(ErrorCode::EmptyData, [] { svg_trace({0.0}, {1.0}); });
    expect_error(ErrorCode::EmptyData, [] { svg_trace({0.0, 1.0}, {1.0}); });
    EXPECT_NE(svg_trace({0.0, 1.0}, {2.0, 3.0}).find("polyline"), std::string::npos);
}

/* ------------------------------------------------------------ run dispatch */

TEST(RunCommand, HistogramRowsMatchBins) {
    const fs::path dir = fresh_dir("hist-rows");
    RunConfig cfg = load_into(kBuiltinSys +
                                  "[run]\ncommand = sim-histogram\nsteps = 20000\nbins = 64\n"
                                  "seed = 3\n[output]\nsvg = 1\n",
                              dir);
    RunResult res = run_command(cfg);
    ASSERT_EQ(res.files.size(), 3u);
    EXPECT_EQ(res.files[0], "histogram.csv");
    EXPECT_EQ(res.files[1], "histogram.svg");
    EXPECT_EQ(res.files.back(), "summary.txt");
    const std::string csv = slurp(dir / "histogram.csv");
    EXPECT_EQ(count_lines(csv), 65u);  // header + one row per bin
    EXPECT_EQ(split_lines(csv)[0], "bin_lo,bin_hi,count");
    // the starting point is binned along with the 20000 stepped states
    EXPECT_EQ(summary_value(res.summary, "total"), "20001");
    EXPECT_TRUE(fs::exists(dir / "histogram.svg"));
    EXPECT_NE(res.summary.find("--- config ---"), std::string::npos);
    EXPECT_NE(res.summary.find("wall_seconds="), std::string::npos);
}

TEST(RunCommand, SameConfigAndSeedIsByteIdentical) {
    const std::string text = kBuiltinSys +
                             "[run]\ncommand = sim-histogram\nsteps = 20000\nbins = 64\nseed = 9\n";
    const fs::path d1 = fresh_dir("det-a"), d2 = fresh_dir("det-b");
    RunResult r1 = run_command(load_into(text, d1));
    RunResult r2 = run_command(load_into(text, d2));
    EXPECT_EQ(slurp(d1 / "histogram.csv"), slurp(d2 / "histogram.csv"));
    EXPECT_EQ(drop_wall_line(r1.summary), drop_wall_line(r2.summary));
}

TEST(RunCommand, SeedChangesTheDraw) {
    const std::string a = kBuiltinSys +
                          "[run]\ncommand = sim-histogram\nsteps = 20000\nbins = 64\nseed = 1\n";
    const std::string b = kBuiltinSys +
                          "[run]\ncommand = sim-histogram\nsteps = 20000\nbins = 64\nseed = 2\n";
    const fs::path d1 = fresh_dir("seed-a"), d2 = fresh_dir("seed-b");
    run_command(load_into(a, d1));
    run_command(load_into(b, d2));
    EXPECT_NE(slurp(d1 / "histogram.csv"), slurp(d2 / "histogram.csv"));
}

TEST(RunCommand, AveragingSummarySchema) {
    const fs::path dir = fresh_dir("avg");
    RunConfig cfg = load_into(kBuiltinSys +
                                  "[run]\ncommand = averaging-check\nhorizon = 0.5\n"
                                  "replicas = 50\nthreshold = 0.75\nx0 = 0.5\n",
                              dir);
    RunResult res = run_command(cfg);
    const auto lines = split_lines(slurp(dir / "averaging.csv"));
    ASSERT_EQ(lines.size(), 2u);
    EXPECT_EQ(lines[0], "q50,q90,q99,exceed_fraction,replicas");
    const double q50 = std::stod(summary_value(res.summary, "q50"));
    const double q90 = std::stod(summary_value(res.summary, "q90"));
    const double q99 = std::stod(summary_value(res.summary, "q99"));
    EXPECT_LE(q50, q90);
    EXPECT_LE(q90, q99);
}

TEST(RunCommand, ExitsCsvSchemaAndExitPoints) {
    const fs::path dir = fresh_dir("exits");
    RunConfig cfg = load_into(
        "[system]\nbuiltin = iid-bessel\n"
        "[run]\ncommand = exit-times\nepsilons = 0.08, 0.06, 0.05\nreplicas = 25\n"
        "v_lo = -0.3\nv_hi = 0.3\nx0 = 0\ncap_slow = 500\nseed = 4\n",
        dir);
    RunResult res = run_command(cfg);
    const auto lines = split_lines(slurp(dir / "exits.csv"));
    ASSERT_EQ(lines.size(), 76u);  // header + 25 replicas x 3 epsilons
    EXPECT_EQ(lines[0], "epsilon,replica,tau_slow,censored,exit_x");
    for (std::size_t k = 1; k < lines.size(); ++k) {
        std::stringstream row(lines[k]);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(row, field, ',')) fields.push_back(field);
        ASSERT_EQ(fields.size(), 5u) << lines[k];
        const int censored = std::stoi(fields[3]);
        EXPECT_TRUE(censored == 0 || censored == 1);
        if (censored == 0) EXPECT_GE(std::fabs(std::stod(fields[4])), 0.3) << lines[k];
        EXPECT_GT(std::stod(fields[2]), 0.0);
    }
    EXPECT_NO_THROW(summary_value(res.summary, "slope"));
    EXPECT_NO_THROW(summary_value(res.summary, "r_squared"));
    EXPECT_NE(res.summary.find("group eps="), std::string::npos);
}

TEST(RunCommand, RateTableCsvsShareOneHeader) {
    const fs::path dir = fresh_dir("rates");
    RunConfig cfg = load_into(
        "[system]\nbuiltin = iid-bessel\n"
        "[run]\ncommand = rate-tables\nx_list = -0.5, 0.5\nn_beta = 21\nn_alpha = 21\nn_y = 64\n",
        dir);
    run_command(cfg);
    const auto h_lines = split_lines(slurp(dir / "rate_H.csv"));
    const auto l_lines = split_lines(slurp(dir / "rate_L.csv"));
    ASSERT_EQ(h_lines.size(), 1u + 2u * 21u);
    ASSERT_EQ(l_lines.size(), 1u + 2u * 21u);
    EXPECT_EQ(h_lines[0], "x,beta,H");
    EXPECT_EQ(l_lines[0], "x,alpha,L,beta_star,finite");
    for (std::size_t k = 1; k < h_lines.size(); ++k)
        EXPECT_EQ(h_lines[k].find("x,"), std::string::npos) << "repeated header at row " << k;
}

TEST(RunCommand, QuasipotentialEmitsFieldsPerAttractor) {
    const fs::path dir = fresh_dir("qp");
    RunConfig cfg = load_into(kBuiltinSys +
                                  "[run]\ncommand = quasipotential\nmethod = both\n"
                                  "n_nodes = 61\nn_speeds = 16\nn_y = 64\n",
                              dir);
    RunResult res = run_command(cfg);
    for (int i = 0; i < 3; ++i) {
        EXPECT_TRUE(fs::exists(dir / ("qp_dp_" + std::to_string(i) + ".csv")));
        EXPECT_TRUE(fs::exists(dir / ("qp_hj_" + std::to_string(i) + ".csv")));
    }
    EXPECT_NEAR(std::stod(summary_value(res.summary, "attractor_0")), -2.0, 1e-6);
    EXPECT_NEAR(std::stod(summary_value(res.summary, "attractor_1")), 0.0, 1e-6);
    EXPECT_NEAR(std::stod(summary_value(res.summary, "attractor_2")), 2.0, 1e-6);
    EXPECT_NEAR(std::stod(summary_value(res.summary, "separator_0")), -1.0, 1e-6);
    const auto rij = split_lines(slurp(dir / "rij.csv"));
    ASSERT_EQ(rij.size(), 7u);  // header + the six off-diagonal pairs
    EXPECT_EQ(rij[0], "i,j,R_ij");
    const double r_mid = std::stod(summary_value(res.summary, "R_1"));
    const double r_outer = std::stod(summary_value(res.summary, "R_0"));
    EXPECT_LT(r_mid, r_outer);  // the middle well is the shallow one
    const auto qp0 = split_lines(slurp(dir / "qp_dp_0.csv"));
    EXPECT_EQ(qp0[0], "x,R");
}

TEST(RunCommand, OccupationPredictionIsANormalizedSymmetricSplit) {
    const fs::path dir = fresh_dir("occ");
    RunConfig cfg = load_into(kBuiltinSys +
                                  "[run]\ncommand = predict-occupation\nmethod = hj\n"
                                  "n_nodes = 61\nn_y = 64\n",
                              dir);
    RunResult res = run_command(cfg);
    EXPECT_TRUE(fs::exists(dir / "occupation.csv"));
    EXPECT_TRUE(fs::exists(dir / "rij.csv"));
    const double p0 = std::stod(summary_value(res.summary, "prediction_0"));
    const double p1 = std::stod(summary_value(res.summary, "prediction_1"));
    const double p2 = std::stod(summary_value(res.summary, "prediction_2"));
    EXPECT_NEAR(p0 + p1 + p2, 1.0, 1e-12);
    EXPECT_NEAR(p0, p2, 1e-6);   // symmetric wells share the weight up to grid rounding
    EXPECT_LT(p1, 1e-10);        // the shallow middle well carries none of it
    const auto occ = split_lines(slurp(dir / "occupation.csv"));
    ASSERT_GE(occ.size(), 5u);
    EXPECT_NE(occ[0].find("epsilon="), std::string::npos);
    EXPECT_EQ(occ[1], "i,Q_i,prediction_i");
}

TEST(RunCommand, BoundaryChainLogsTheRequestedTransitions) {
    const fs::path dir = fresh_dir("chain");
    RunConfig cfg = load_into(
        "[system]\nfamily = polysin\npoly = 0, 0.2, 0, -0.2\nsin_amp = 1\n"
        "driver = additive-uniform\nepsilon = 0.05\ndomain_lo = -2\ndomain_hi = 2\n"
        "[run]\ncommand = boundary-chain\ndelta = 0.3\ntransitions = 10\n"
        "attractors = -1, 1\nseed = 5\n",
        dir);
    RunResult res = run_command(cfg);
    const auto lines = split_lines(slurp(dir / "transitions.csv"));
    ASSERT_EQ(lines.size(), 12u);  // header + settlement row + ten transitions
    EXPECT_EQ(lines[0], "k,attractor,entry_time,sojourn");
    EXPECT_EQ(summary_value(res.summary, "transitions"), "10");
    EXPECT_EQ(summary_value(res.summary, "capped"), "0");
    const double o0 = std::stod(summary_value(res.summary, "occupation_0"));
    const double o1 = std::stod(summary_value(res.summary, "occupation_1"));
    EXPECT_NEAR(o0 + o1, 1.0, 1e-12);
    // explicit attractors bypass the averaged-drift analysis: no prediction
    EXPECT_EQ(res.summary.find("prediction_0"), std::string::npos);
}

TEST(RunCommand, ResonanceArtifactsAndSummary) {
    const fs::path dir = fresh_dir("resonance");
    RunConfig cfg = load_into(
        "[run]\ncommand = resonance\nrho = 0.08\nepsilon = 0.006\nsteps = 4500000\n"
        "subsample = 450\nseed = 11\n",
        dir);
    RunResult res = run_command(cfg);
    EXPECT_TRUE(fs::exists(dir / "trace.csv"));
    EXPECT_TRUE(fs::exists(dir / "reversals.csv"));
    const auto rs = split_lines(slurp(dir / "resonance_summary.csv"));
    ASSERT_EQ(rs.size(), 2u);
    EXPECT_EQ(rs[0], "rho,v_minus,v_plus,T_pred,T_emp");
    const double v_minus = std::stod(summary_value(res.summary, "v_minus"));
    const double v_plus = std::stod(summary_value(res.summary, "v_plus"));
    EXPECT_LT(v_minus, 0.0);
    EXPECT_GT(v_plus, 0.0);
    const double t_pred = std::stod(summary_value(res.summary, "T_pred"));
    EXPECT_GT(t_pred, 0.5);
    EXPECT_LT(t_pred, 10.0);
    EXPECT_GE(std::stoi(summary_value(res.summary, "phases")), 3);
    const auto trace = split_lines(slurp(dir / "trace.csv"));
    EXPECT_EQ(trace[0], "t,V");
    EXPECT_GE(trace.size(), 1000u);
}

TEST(RunCommand, UnknownCommandCaughtAtDispatch) {
    RunConfig cfg;
    cfg.command = "made-up";
    cfg.out_dir = fresh_dir("bogus").string();
    expect_error(ErrorCode::UnknownName, [&] { run_command(cfg); });
}

/* -------------------------------------------------------- shipped examples */

TEST(ShippedConfigs, EveryExampleParses) {
    fs::path dir;
    for (const char* c : {"../configs", "configs", "../../configs"})
        if (fs::is_directory(c)) {
            dir = c;
            break;
        }
    if (dir.empty()) GTEST_SKIP() << "configs directory not reachable from test cwd";
    std::size_t n = 0;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.path().extension() != ".cfg") continue;
        ++n;
        EXPECT_NO_THROW(load_config_file(entry.path().string())) << entry.path();
    }
    EXPECT_GE(n, 8u) << "expected one example per command";
}

/* --------------------------------------------------------------- binary UX */

namespace {

std::string find_cli_binary() {
    for (const char* c : {"./slowfast", "build/slowfast", "../build/slowfast"})
        if (fs::exists(c)) return fs::absolute(c).string();
    return "";
}

int run_cli(const std::string& bin, const std::string& args) {
    const int status = std::system((bin + " " + args).c_str());
    if (status == -1 || !WIFEXITED(status)) return -1;
    return WEXITSTATUS(status);
}

} // namespace

TEST(CliBinary, ExitStatusClasses) {
    const std::string bin = find_cli_binary();
    if (bin.empty()) GTEST_SKIP() << "slowfast binary not found next to the test";
    const fs::path dir = fresh_dir("binary");

    spit(dir / "good.cfg", kBuiltinSys + "[run]\ncommand = sim-histogram\nsteps = 5000\nbins = 32\n"
                                         "[output]\ndir = " +
                               (dir / "good-out").string() + "\n");
    spit(dir / "bad-command.cfg", "[run]\ncommand = frobnicate\n");
    spit(dir / "no-attractors.cfg",
         "[system]\nfamily = polysin\npoly = 1\ndriver = additive-uniform\n"
         "epsilon = 0.05\ndomain_lo = -1\ndomain_hi = 1\n"
         "[run]\ncommand = boundary-chain\ndelta = 0.1\ntransitions = 2\ncap_steps = 100\n"
         "[output]\ndir = " +
             (dir / "na-out").string() + "\n");

    EXPECT_EQ(run_cli(bin, (dir / "good.cfg").string() + " > /dev/null 2>&1"), 0);
    EXPECT_TRUE(fs::exists(dir / "good-out" / "histogram.csv"));
    EXPECT_EQ(run_cli(bin, (dir / "missing.cfg").string() + " > /dev/null 2>&1"), 3);
    EXPECT_EQ(run_cli(bin, (dir / "bad-command.cfg").string() + " > /dev/null 2>&1"), 1);

    const std::string err_file = (dir / "stderr.txt").string();
    EXPECT_EQ(run_cli(bin, (dir / "no-attractors.cfg").string() + " > /dev/null 2> " + err_file), 2);
    const std::string err = slurp(err_file);
    EXPECT_NE(err.find("error:"), std::string::npos) << err;
    EXPECT_NE(err.find("NoAttractors"), std::string::npos) << err;
}

TEST(CliBinary, FlagsOverrideTheConfig) {
    const std::string bin = find_cli_binary();
    if (bin.empty()) GTEST_SKIP() << "slowfast binary not found next to the test";
    const fs::path dir = fresh_dir("binary-flags");

    auto cfg_with_seed = [&](int seed, const std::string& name) {
        spit(dir / name, kBuiltinSys +
                             "[run]\ncommand = sim-histogram\nsteps = 5000\nbins = 32\nseed = " +
                             std::to_string(seed) + "\n");
        return (dir / name).string();
    };
    const std::string seed1 = cfg_with_seed(1, "seed1.cfg");
    const std::string seed2 = cfg_with_seed(2, "seed2.cfg");

    const fs::path o1 = dir / "o1", o2 = dir / "o2", o3 = dir / "o3";
    ASSERT_EQ(run_cli(bin, seed1 + " --out " + o1.string() + " > /dev/null"), 0);
    ASSERT_EQ(run_cli(bin, seed2 + " --out " + o2.string() + " > /dev/null"), 0);
    ASSERT_EQ(run_cli(bin, seed1 + " --seed 2 --out " + o3.string() + " --svg > /dev/null"), 0);

    // --seed beats the config value: run 3 must reproduce run 2, not run 1
    EXPECT_EQ(slurp(o3 / "histogram.csv"), slurp(o2 / "histogram.csv"));
    EXPECT_NE(slurp(o3 / "histogram.csv"), slurp(o1 / "histogram.csv"));
    EXPECT_TRUE(fs::exists(o3 / "histogram.svg"));   // --svg forced it on
    EXPECT_FALSE(fs::exists(o1 / "histogram.svg"));  // config alone leaves it off
}

TEST(CliBinary, HelpDocumentsTheExitClasses) {
    const std::string bin = find_cli_binary();
    if (bin.empty()) GTEST_SKIP() << "slowfast binary not found next to the test";
    const fs::path dir = fresh_dir("binary-help");
    const std::string out_file = (dir / "help.txt").string();
    EXPECT_EQ(run_cli(bin, "--help > " + out_file + " 2>&1"), 0);
    const std::string help = slurp(out_file);
    EXPECT_NE(help.find("Exit status classes"), std::string::npos);
    EXPECT_NE(help.find("IoError"), std::string::npos);
    EXPECT_NE(help.find("resonance"), std::string::npos);
}
