#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "quasipotential.hpp"
#include "rate.hpp"
#include "resonance.hpp"
#include "simulate.hpp"

namespace slowfast {

/* ------------------------------------------------------------- formatting */

/* every float in every CSV goes through this: 17 significant digits round-trip */
inline std::string g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::IoError, "cannot open " + path + " for writing");
    out << content;
    out.flush();
    if (!out) fail(ErrorCode::IoError, "short write to " + path);
}

/* ------------------------------------------------------------ CSV writers */

inline std::string histogram_csv(const Histogram& h) {
    std::ostringstream s;
    s << "bin_lo,bin_hi,count\n";
    const double w = (h.hi - h.lo) / static_cast<double>(h.counts.size());
    for (std::size_t i = 0; i < h.counts.size(); ++i)
        s << g17(h.lo + w * static_cast<double>(i)) << ',' << g17(h.lo + w * static_cast<double>(i + 1))
          << ',' << h.counts[i] << '\n';
    return s.str();
}

inline std::string exits_csv(const std::vector<ExitSample>& samples) {
    std::ostringstream s;
    s << "epsilon,replica,tau_slow,censored,exit_x\n";
    for (const auto& e : samples)
        s << g17(e.epsilon) << ',' << e.replica << ',' << g17(e.tau_slow) << ','
          << (e.censored ? 1 : 0) << ',' << g17(e.exit_x) << '\n';
    return s.str();
}

/* row k = 0 is the initial settlement (sojourn 0); rows k >= 1 are logged
   attractor changes */
inline std::string transitions_csv(const TransitionLog& log) {
    std::ostringstream s;
    s << "k,attractor,entry_time,sojourn\n";
    s << 0 << ',' << log.initial_attractor << ',' << g17(log.initial_time) << ',' << g17(0.0)
      << '\n';
    for (std::size_t k = 0; k < log.entries.size(); ++k)
        s << (k + 1) << ',' << log.entries[k].attractor << ',' << g17(log.entries[k].entry_time)
          << ',' << g17(log.entries[k].sojourn) << '\n';
    return s.str();
}

inline std::string rate_H_csv(const RateTable& t) {
    std::ostringstream s;
    s << "x,beta,H\n";
    for (std::size_t k = 0; k < t.beta_grid.size(); ++k)
        s << g17(t.x) << ',' << g17(t.beta_grid[k]) << ',' << g17(t.H_values[k]) << '\n';
    return s.str();
}

/* L column carries the finite value, or the boundary lower bound when the
   sentinel marks the transform infinite (finite = 0 on those rows) */
inline std::string rate_L_csv(const RateTable& t) {
    std::ostringstream s;
    s << "x,alpha,L,beta_star,finite\n";
    for (std::size_t k = 0; k < t.alpha_grid.size(); ++k)
        s << g17(t.x) << ',' << g17(t.alpha_grid[k]) << ',' << g17(t.L_values[k].value) << ','
          << g17(t.beta_star[k]) << ',' << (t.L_values[k].finite ? 1 : 0) << '\n';
    return s.str();
}

inline std::string quasipotential_csv(const QuasipotentialField& f) {
    std::ostringstream s;
    s << "x,R\n";
    for (std::size_t k = 0; k < f.x.size(); ++k) s << g17(f.x[k]) << ',' << g17(f.R[k]) << '\n';
    return s.str();
}

inline std::string rij_csv(const TransitionStructure& ts) {
    std::ostringstream s;
    s << "i,j,R_ij\n";
    for (std::size_t i = 0; i < ts.R.size(); ++i)
        for (std::size_t j = 0; j < ts.R.size(); ++j) {
            if (i == j) continue;
            s << i << ',' << j << ',' << g17(ts.R[i][j]) << '\n';
        }
    return s.str();
}

/* Q_i as a raw exponential may underflow for tiny epsilon; the prediction
   column is the underflow-safe normalized weight */
inline std::string occupation_csv(const TransitionStructure& ts) {
    std::ostringstream s;
    s << "# epsilon=" << g17(ts.epsilon) << '\n';
    s << "i,Q_i,prediction_i\n";
    for (std::size_t i = 0; i < ts.log_Q.size(); ++i)
        s << i << ',' << g17(std::exp(ts.log_Q[i])) << ',' << g17(ts.prediction[i]) << '\n';
    return s.str();
}

inline std::string trace_csv(const ThreeScaleTrace& tr) {
    std::ostringstream s;
    s << "t,V\n";
    for (std::size_t k = 0; k < tr.t.size(); ++k) s << g17(tr.t[k]) << ',' << g17(tr.v[k]) << '\n';
    return s.str();
}

inline std::string reversals_csv(const PeriodEstimate& pe) {
    std::ostringstream s;
    s << "k,reversal_time,direction\n";
    for (std::size_t k = 0; k < pe.reversal_times.size(); ++k)
        s << k << ',' << g17(pe.reversal_times[k]) << ',' << pe.directions[k] << '\n';
    return s.str();
}

inline std::string resonance_summary_csv(double rho, double v_minus, double v_plus, double t_pred,
                                         double t_emp) {
    std::ostringstream s;
    s << "rho,v_minus,v_plus,T_pred,T_emp\n";
    s << g17(rho) << ',' << g17(v_minus) << ',' << g17(v_plus) << ',' << g17(t_pred) << ','
      << g17(t_emp) << '\n';
    return s.str();
}

/* ------------------------------------------------------------- SVG output */

namespace detail {

inline std::string svg_open() {
    return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"600\" "
           "viewBox=\"0 0 800 600\">\n"
           "<rect x=\"0\" y=\"0\" width=\"800\" height=\"600\" fill=\"white\"/>\n";
}

inline std::string svg_axes() {
    return "<line x1=\"60\" y1=\"540\" x2=\"760\" y2=\"540\" stroke=\"black\"/>\n"
           "<line x1=\"60\" y1=\"40\" x2=\"60\" y2=\"540\" stroke=\"black\"/>\n";
}

inline std::string fmt2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

} // namespace detail

/* bar chart of a histogram in a fixed 800x600 viewport */
inline std::string svg_histogram(const Histogram& h) {
    if (h.total == 0 || h.counts.empty()) fail(ErrorCode::EmptyData, "histogram has no samples");
    std::uint64_t peak = 0;
    for (auto c : h.counts) peak = std::max(peak, c);
    if (peak == 0) fail(ErrorCode::EmptyData, "histogram counts are all zero");
    std::ostringstream s;
    s << detail::svg_open() << detail::svg_axes();
    const double plot_w = 700.0, plot_h = 500.0;
    const double bw = plot_w / static_cast<double>(h.counts.size());
    for (std::size_t i = 0; i < h.counts.size(); ++i) {
        if (h.counts[i] == 0) continue;
        const double bh = plot_h * static_cast<double>(h.counts[i]) / static_cast<double>(peak);
        s << "<rect x=\"" << detail::fmt2(60.0 + bw * static_cast<double>(i)) << "\" y=\""
          << detail::fmt2(540.0 - bh) << "\" width=\"" << detail::fmt2(std::max(bw, 0.5))
          << "\" height=\"" << detail::fmt2(bh) << "\" fill=\"steelblue\"/>\n";
    }
    s << "<text x=\"60\" y=\"570\" font-size=\"14\">" << detail::fmt2(h.lo) << "</text>\n";
    s << "<text x=\"720\" y=\"570\" font-size=\"14\">" << detail::fmt2(h.hi) << "</text>\n";
    s << "</svg>\n";
    return s.str();
}

/* polyline of a sampled signal in the same viewport */
inline std::string svg_trace(const std::vector<double>& t, const std::vector<double>& v) {
    if (t.size() != v.size() || t.size() < 2) fail(ErrorCode::EmptyData, "trace needs >= 2 samples");
    double t_lo = t.front(), t_hi = t.front(), v_lo = v.front(), v_hi = v.front();
    for (std::size_t k = 0; k < t.size(); ++k) {
        t_lo = std::min(t_lo, t[k]);
        t_hi = std::max(t_hi, t[k]);
        v_lo = std::min(v_lo, v[k]);
        v_hi = std::max(v_hi, v[k]);
    }
    if (!(t_hi > t_lo)) t_hi = t_lo + 1.0;
    if (!(v_hi > v_lo)) v_hi = v_lo + 1.0;
    std::ostringstream s;
    s << detail::svg_open() << detail::svg_axes();
    s << "<polyline fill=\"none\" stroke=\"firebrick\" stroke-width=\"1\" points=\"";
    for (std::size_t k = 0; k < t.size(); ++k) {
        const double px = 60.0 + 700.0 * (t[k] - t_lo) / (t_hi - t_lo);
        const double py = 540.0 - 500.0 * (v[k] - v_lo) / (v_hi - v_lo);
        s << detail::fmt2(px) << ',' << detail::fmt2(py) << ' ';
    }
    s << "\"/>\n";
    s << "<text x=\"60\" y=\"570\" font-size=\"14\">" << detail::fmt2(t_lo) << "</text>\n";
    s << "<text x=\"720\" y=\"570\" font-size=\"14\">" << detail::fmt2(t_hi) << "</text>\n";
    s << "</svg>\n";
    return s.str();
}

} // namespace slowfast
