#pragma once

#include <chrono>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "config.hpp"
#include "io.hpp"
#include "quasipotential.hpp"
#include "rate.hpp"
#include "resonance.hpp"
#include "simulate.hpp"

namespace slowfast {

struct RunResult {
    std::vector<std::string> files;  // paths written, relative to out_dir
    std::string summary;             // contents of summary.txt
};

namespace detail {

/* uniform-random starts for deterministic drivers (measure over initial
   conditions), fixed starts for stochastic ones; an explicit y0 wins */
inline Y0Policy default_y0(const RunConfig& cfg, const SystemSpec& sys) {
    Y0Policy p;
    if (const ConfigEntry* e = cfg.find(cfg.run, "y0")) {
        p.random = false;
        p.value = parse_real(*e);
        return p;
    }
    p.random = (sys.driver.kind == DriverKind::DeterministicExpanding);
    p.value = 0.0;
    return p;
}

struct Emitter {
    std::filesystem::path dir;
    std::vector<std::string>* files;

    void operator()(const std::string& name, const std::string& content) const {
        write_text_file((dir / name).string(), content);
        files->push_back(name);
    }
};

inline std::string kv(const std::string& k, double v) { return k + "=" + g17(v) + "\n"; }

} // namespace detail

/* Dispatch one parsed configuration: runs the requested computation, writes
   that command's CSV (and optional SVG) artifacts plus summary.txt into the
   output directory.  Output bytes depend only on (config, seed); the wall
   time line in summary.txt is the single exception. */
inline RunResult run_command(const RunConfig& cfg) {
    const auto t_start = std::chrono::steady_clock::now();
    RunResult res;
    std::filesystem::create_directories(cfg.out_dir);
    detail::Emitter emit{cfg.out_dir, &res.files};
    std::ostringstream sum;
    sum << "command=" << cfg.command << "\n";
    sum << "seed=" << cfg.seed << "\n";
    sum << "--- config ---\n" << serialize_config(cfg) << "--- results ---\n";

    if (cfg.command == "sim-histogram") {
        SystemSpec sys = make_system_from_config(cfg);
        const auto& box = sys.slow_domain.box[0];
        const std::uint64_t steps = cfg_count(cfg, cfg.run, "steps", 0);
        const int bins = static_cast<int>(cfg_count(cfg, cfg.run, "bins", 10000));
        const double lo = cfg_real(cfg, cfg.run, "hist_lo", box[0]);
        const double hi = cfg_real(cfg, cfg.run, "hist_hi", box[1]);
        const double x0 = cfg_real(cfg, cfg.run, "x0", 0.0);
        Histogram h = run_occupation_histogram(sys, x0, detail::default_y0(cfg, sys), steps, bins,
                                               lo, hi, cfg.seed);
        emit("histogram.csv", histogram_csv(h));
        if (cfg.emit_svg) emit("histogram.svg", svg_histogram(h));
        sum << "total=" << h.total << "\nout_of_range=" << h.out_of_range << "\n";
    } else if (cfg.command == "averaging-check") {
        SystemSpec sys = make_system_from_config(cfg);
        const int n_y = static_cast<int>(cfg_count(cfg, cfg.run, "n_y", 512));
        RateModel model(sys, n_y);
        const double x0 = cfg_real(cfg, cfg.run, "x0", 0.0);
        AveragingStat st = averaging_error_stat(
            sys, [&model](double x) { return model.bbar(x); }, x0, detail::default_y0(cfg, sys),
            cfg_real(cfg, cfg.run, "horizon", 1.0),
            static_cast<int>(cfg_count(cfg, cfg.run, "replicas", 100)),
            cfg_real(cfg, cfg.run, "threshold", 0.1), cfg.seed);
        std::ostringstream csv;
        csv << "q50,q90,q99,exceed_fraction,replicas\n"
            << g17(st.q50) << ',' << g17(st.q90) << ',' << g17(st.q99) << ','
            << g17(st.exceed_fraction) << ',' << st.replicas << '\n';
        emit("averaging.csv", csv.str());
        sum << detail::kv("q50", st.q50) << detail::kv("q90", st.q90) << detail::kv("q99", st.q99)
            << detail::kv("exceed_fraction", st.exceed_fraction);
    } else if (cfg.command == "exit-times") {
        SystemSpec sys = make_system_from_config(cfg);
        std::vector<double> eps = cfg_list(cfg, cfg.run, "epsilons");
        const double v_lo = cfg_real(cfg, cfg.run, "v_lo", 0.0);
        const double v_hi = cfg_real(cfg, cfg.run, "v_hi", 0.0);
        const double x0 = cfg_real(cfg, cfg.run, "x0", 0.0);
        const int replicas = static_cast<int>(cfg_count(cfg, cfg.run, "replicas", 100));
        std::function<double(double)> cap_rule;
        if (cfg.has(cfg.run, "cap_r_hat")) {
            const double r_hat = cfg_real(cfg, cfg.run, "cap_r_hat", 0.1);
            cap_rule = [r_hat](double e) { return 10.0 * std::exp(r_hat / e); };
            sum << detail::kv("cap_r_hat", r_hat);
        } else {
            const double cap = cfg_real(cfg, cfg.run, "cap_slow", 0.0);
            cap_rule = [cap](double) { return cap; };
        }
        std::vector<ExitSample> samples =
            exit_sweep(sys, eps, replicas, x0, detail::default_y0(cfg, sys), v_lo, v_hi, cap_rule,
                       cfg.seed);
        emit("exits.csv", exits_csv(samples));
        ExitFit fit = exit_scaling_fit(samples);
        sum << detail::kv("slope", fit.slope) << detail::kv("intercept", fit.intercept)
            << detail::kv("r_squared", fit.r_squared);
        for (std::size_t g = 0; g < fit.eps.size(); ++g)
            sum << "group eps=" << g17(fit.eps[g]) << " mean_tau=" << g17(fit.mean_tau[g])
                << " mean_tau_imputed=" << g17(fit.mean_tau_imputed[g])
                << " censored=" << g17(fit.censored_fraction[g]) << "\n";
    } else if (cfg.command == "rate-tables") {
        SystemSpec sys = make_system_from_config(cfg);
        const int n_y = static_cast<int>(cfg_count(cfg, cfg.run, "n_y", 512));
        const double b_max = cfg_real(cfg, cfg.run, "b_max", 6.0);
        RateModel model(sys, n_y, b_max);
        std::string h_csv, l_csv;
        for (double x : cfg_list(cfg, cfg.run, "x_list")) {
            RateTable t = build_rate_table(model, x,
                                           static_cast<int>(cfg_count(cfg, cfg.run, "n_beta", 241)),
                                           static_cast<int>(cfg_count(cfg, cfg.run, "n_alpha", 241)));
            validate_rate_table(t);
            std::string h_one = rate_H_csv(t), l_one = rate_L_csv(t);
            if (h_csv.empty()) {
                h_csv = h_one;
                l_csv = l_one;
            } else {  // drop the repeated header lines
                h_csv += h_one.substr(h_one.find('\n') + 1);
                l_csv += l_one.substr(l_one.find('\n') + 1);
            }
            sum << "x=" << g17(x) << " bbar=" << g17(t.bbar) << "\n";
        }
        emit("rate_H.csv", h_csv);
        emit("rate_L.csv", l_csv);
    } else if (cfg.command == "quasipotential" || cfg.command == "predict-occupation") {
        SystemSpec sys = make_system_from_config(cfg);
        const int n_y = static_cast<int>(cfg_count(cfg, cfg.run, "n_y", 512));
        const int n_nodes = static_cast<int>(cfg_count(cfg, cfg.run, "n_nodes", 241));
        const int n_speeds = static_cast<int>(cfg_count(cfg, cfg.run, "n_speeds", 96));
        const std::string method = cfg_str(cfg, cfg.run, "method", "both");
        RateModel model(sys, n_y);
        const auto& box = sys.slow_domain.box[0];
        AttractorSet aset =
            find_attractors([&model](double x) { return model.bbar(x); }, box[0], box[1]);
        for (std::size_t i = 0; i < aset.attractors.size(); ++i)
            sum << "attractor_" << i << "=" << g17(aset.attractors[i]) << "\n";
        for (std::size_t i = 0; i < aset.separators.size(); ++i)
            sum << "separator_" << i << "=" << g17(aset.separators[i]) << "\n";
        if (cfg.command == "quasipotential") {
            std::vector<double> specials = aset.attractors;
            specials.insert(specials.end(), aset.separators.begin(), aset.separators.end());
            std::vector<double> grid = qp_grid(box[0], box[1], n_nodes, specials);
            for (std::size_t i = 0; i < aset.attractors.size(); ++i) {
                if (method == "dp" || method == "both")
                    emit("qp_dp_" + std::to_string(i) + ".csv",
                         quasipotential_csv(
                             quasipotential_dp(model, aset.attractors[i], grid, n_speeds)));
                if (method == "hj" || method == "both")
                    emit("qp_hj_" + std::to_string(i) + ".csv",
                         quasipotential_csv(quasipotential_hj(model, aset.attractors[i], grid)));
            }
            TransitionStructure ts = transition_matrix(
                model, aset, method == "hj" ? QpMethod::HjRoot : QpMethod::Dp, n_nodes, n_speeds);
            emit("rij.csv", rij_csv(ts));
            for (std::size_t i = 0; i < ts.R_i.size(); ++i)
                sum << "R_" << i << "=" << g17(ts.R_i[i]) << "\n";
        } else {
            TransitionStructure ts = transition_matrix(
                model, aset, method == "dp" ? QpMethod::Dp : QpMethod::HjRoot, n_nodes, n_speeds);
            ts = igraph_weights(std::move(ts), sys.epsilon);
            emit("rij.csv", rij_csv(ts));
            emit("occupation.csv", occupation_csv(ts));
            for (std::size_t i = 0; i < ts.prediction.size(); ++i)
                sum << "prediction_" << i << "=" << g17(ts.prediction[i]) << "\n";
        }
    } else if (cfg.command == "boundary-chain") {
        SystemSpec sys = make_system_from_config(cfg);
        const int n_y = static_cast<int>(cfg_count(cfg, cfg.run, "n_y", 512));
        RateModel model(sys, n_y);
        const auto& box = sys.slow_domain.box[0];
        std::vector<double> attractors;
        AttractorSet aset;
        if (cfg.has(cfg.run, "attractors")) {
            attractors = cfg_list(cfg, cfg.run, "attractors");
        } else {
            aset = find_attractors([&model](double x) { return model.bbar(x); }, box[0], box[1]);
            attractors = aset.attractors;
        }
        const double delta = cfg_real(cfg, cfg.run, "delta", 0.2);
        const double x0 = cfg_real(cfg, cfg.run, "x0", attractors.front());
        TransitionLog log = transition_sequence(
            sys, x0, detail::default_y0(cfg, sys), attractors, delta,
            static_cast<int>(cfg_count(cfg, cfg.run, "transitions", 100)),
            cfg_count(cfg, cfg.run, "cap_steps", 2000000000ull), cfg.seed);
        emit("transitions.csv", transitions_csv(log));
        std::vector<double> occ = log.occupation_times(static_cast<int>(attractors.size()));
        double span = 0.0;
        for (double o : occ) span += o;
        for (std::size_t i = 0; i < occ.size(); ++i)
            sum << "occupation_" << i << "=" << g17(span > 0.0 ? occ[i] / span : 0.0) << "\n";
        sum << "transitions=" << log.entries.size() << "\ncapped=" << (log.capped ? 1 : 0) << "\n";
        if (!cfg.has(cfg.run, "attractors")) {
            TransitionStructure ts = transition_matrix(
                model, aset,
                cfg_str(cfg, cfg.run, "method", "hj") == "dp" ? QpMethod::Dp : QpMethod::HjRoot,
                static_cast<int>(cfg_count(cfg, cfg.run, "n_nodes", 241)),
                static_cast<int>(cfg_count(cfg, cfg.run, "n_speeds", 96)));
            ts = igraph_weights(std::move(ts), sys.epsilon);
            emit("occupation.csv", occupation_csv(ts));
            for (std::size_t i = 0; i < ts.prediction.size(); ++i)
                sum << "prediction_" << i << "=" << g17(ts.prediction[i]) << "\n";
        }
    } else if (cfg.command == "resonance") {
        const double eps = cfg_real(cfg, cfg.run, "epsilon", 0.01);
        const double rho = cfg_real(cfg, cfg.run, "rho", 0.1);
        const std::string design = cfg_str(cfg, cfg.run, "design", "designed");
        const std::uint64_t steps = cfg_count(cfg, cfg.run, "steps", 0);
        const std::uint64_t subsample =
            cfg_count(cfg, cfg.run, "subsample", std::max<std::uint64_t>(1, steps / 200000));
        const double v0 = cfg_real(cfg, cfg.run, "v0", 0.0);
        const double x0 = cfg_real(cfg, cfg.run, "x0", -1.0);
        const double y0 = cfg_real(cfg, cfg.run, "y0", 0.123);
        const double radius = cfg_real(cfg, cfg.run, "marker_radius", 0.2);
        if (design == "paper") {
            ThreeScaleSpec spec = make_paper_three_scale(eps, rho);
            ThreeScaleTrace tr =
                run_three_scale(spec, v0, x0, y0, steps, subsample, cfg.seed, 0, {-1.0, 1.0}, radius);
            emit("trace.csv", trace_csv(tr));
            if (cfg.emit_svg) emit("trace.svg", svg_trace(tr.t, tr.v));
            sum << "samples=" << tr.t.size() << "\nmarkers=" << tr.markers.size() << "\n";
        } else {
            ResonanceDesign d = make_resonance_design(eps, rho);
            const double v_lo = cfg_real(cfg, cfg.run, "v_lo", -1.2);
            const double v_hi = cfg_real(cfg, cfg.run, "v_hi", 1.2);
            BarrierCurves bc = designed_barrier_curves(
                d, v_lo, v_hi, static_cast<int>(cfg_count(cfg, cfg.run, "n_v", 41)),
                static_cast<int>(cfg_count(cfg, cfg.run, "n_y", 256)),
                static_cast<int>(cfg_count(cfg, cfg.run, "n_cells", 128)));
            CrossingLevels cl =
                crossing_levels(make_linear_interp(bc.v, bc.R12), make_linear_interp(bc.v, bc.R21),
                                v_lo, v_hi, rho);
            const double t_pred =
                predicted_period([&d](double v) { return d.abar1(v); },
                                 [&d](double v) { return d.abar2(v); }, cl.v_minus, cl.v_plus);
            ThreeScaleTrace tr = run_three_scale(d.triple, v0, x0, y0, steps, subsample, cfg.seed,
                                                 0, {-1.0, 1.0}, radius);
            emit("trace.csv", trace_csv(tr));
            if (cfg.emit_svg) emit("trace.svg", svg_trace(tr.t, tr.v));
            PeriodEstimate pe = empirical_period(tr.t, tr.v);
            emit("reversals.csv", reversals_csv(pe));
            emit("resonance_summary.csv",
                 resonance_summary_csv(rho, cl.v_minus, cl.v_plus, t_pred, pe.period));
            sum << detail::kv("v_minus", cl.v_minus) << detail::kv("v_plus", cl.v_plus)
                << detail::kv("lambda_star", cl.lambda_star) << detail::kv("T_pred", t_pred)
                << detail::kv("T_emp", pe.period) << "phases=" << pe.n_phases << "\n";
        }
    } else {
        fail(ErrorCode::UnknownName, "unknown command '" + cfg.command + "'");
    }

    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    sum << "wall_seconds=" << g17(wall) << "\n";
    res.summary = sum.str();
    write_text_file((std::filesystem::path(cfg.out_dir) / "summary.txt").string(), res.summary);
    res.files.push_back("summary.txt");
    return res;
}

} // namespace slowfast
