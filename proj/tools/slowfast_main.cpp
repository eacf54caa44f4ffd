#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "slowfast/config.hpp"
#include "slowfast/run.hpp"

namespace {

constexpr const char* kFooter =
    "Config file: flat key=value text with [system], [run], [output] sections.\n"
    "Commands: sim-histogram | averaging-check | exit-times | rate-tables |\n"
    "          quasipotential | predict-occupation | boundary-chain | resonance\n"
    "\n"
    "Exit status classes (the specific error name is printed on stderr):\n"
    "  0  success\n"
    "  1  configuration/input error (ParseError, UnknownKey, MissingKey,\n"
    "     UnknownName, BadEpsilon, BoundViolated, NonStochasticRow,\n"
    "     NegativeDensity, BadDomain, RangeError, EmptyData, Unsupported,\n"
    "     TooLarge, NeighborhoodsOverlap, BetaOutOfBracket, OutOfTableRange)\n"
    "  2  numeric failure (NoConvergence, DegenerateZero, BlowUp, TooCensored,\n"
    "     TooFewGroups, NoAttractors, AllInfinite, TableGap, RhoAboveMerge,\n"
    "     NoRoot, SignViolation, NonMonotone, TooFewReversals)\n"
    "  3  I/O failure (IoError)\n";

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"slowfast: simulator and large-deviations toolkit for coupled slow-fast maps"};
    app.footer(kFooter);
    std::string config_path;
    std::uint64_t seed = 0;
    std::string out_dir;
    bool svg = false;
    app.add_option("config", config_path, "path to the run configuration file")->required();
    auto* seed_opt = app.add_option("--seed", seed, "replica master seed (overrides config)");
    auto* out_opt = app.add_option("--out", out_dir, "output directory (overrides config)");
    app.add_flag("--svg", svg, "also emit SVG renderings where supported");
    CLI11_PARSE(app, argc, argv);

    try {
        slowfast::RunConfig cfg = slowfast::load_config_file(config_path);
        if (seed_opt->count() > 0) cfg.seed = seed;
        if (out_opt->count() > 0) cfg.out_dir = out_dir;
        if (svg) cfg.emit_svg = true;
        slowfast::RunResult res = slowfast::run_command(cfg);
        std::fputs(res.summary.c_str(), stdout);
        return 0;
    } catch (const slowfast::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        if (e.is_io()) return 3;
        return e.is_config() ? 1 : 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
