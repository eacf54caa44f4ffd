#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <queue>
#include <string>
#include <vector>

#include "errors.hpp"
#include "rate.hpp"
#include "types.hpp"

namespace slowfast {

/* ---------------------------------------------------- averaged-flow zeros */

struct Basin {
    double lo = 0.0, hi = 0.0;
};

struct AttractorSet {
    std::vector<double> attractors;  // stable zeros of bbar, increasing
    std::vector<double> separators;  // repelling zeros, increasing
    std::vector<Basin> basins;       // basins[k] belongs to attractors[k]
};

/* Scan for sign changes of bbar, bisect each bracket, and classify the zero
   by a centered derivative.  Zeros with derivative magnitude below 1e-10
   are rejected as degenerate rather than misclassified. */
inline AttractorSet find_attractors(const std::function<double(double)>& bbar, double lo,
                                    double hi, int n_grid = 2048) {
    if (!(lo < hi)) fail(ErrorCode::BadDomain, "empty scan interval");
    if (n_grid < 64) fail(ErrorCode::RangeError, "attractor scan needs n_grid >= 64");
    struct Zero {
        double z;
        bool stable;
    };
    std::vector<Zero> zeros;
    const double tol = 1e-12 * std::max({1.0, std::fabs(lo), std::fabs(hi)});
    double xa = lo, fa = bbar(lo);
    for (int k = 1; k <= n_grid; ++k) {
        const double xb = lo + (hi - lo) * static_cast<double>(k) / n_grid;
        const double fb = bbar(xb);
        if ((fa < 0.0 && fb > 0.0) || (fa > 0.0 && fb < 0.0) || fa == 0.0) {
            double a = xa, b = xb, va = fa;
            if (fa != 0.0) {
                while (b - a > tol) {
                    const double m = 0.5 * (a + b);
                    const double vm = bbar(m);
                    if (vm == 0.0) {
                        a = b = m;
                        break;
                    }
                    if ((va < 0.0) == (vm < 0.0)) {
                        a = m;
                        va = vm;
                    } else {
                        b = m;
                    }
                }
            } else {
                b = a;
            }
            const double z = 0.5 * (a + b);
            const double h = 1e-6;
            const double d = (bbar(z + h) - bbar(z - h)) / (2.0 * h);
            if (std::fabs(d) < 1e-10)
                fail(ErrorCode::DegenerateZero, "flat zero of the averaged drift at x=" + std::to_string(z));
            if (zeros.empty() || z - zeros.back().z > 10.0 * tol) zeros.push_back({z, d < 0.0});
        }
        xa = xb;
        fa = fb;
    }
    AttractorSet s;
    for (const auto& z : zeros)
        (z.stable ? s.attractors : s.separators).push_back(z.z);
    if (s.attractors.empty()) fail(ErrorCode::NoAttractors, "averaged drift has no stable zero");
    for (std::size_t k = 0; k + 1 < zeros.size(); ++k)
        if (zeros[k].stable == zeros[k + 1].stable)
            fail(ErrorCode::BadDomain, "consecutive zeros of equal stability; refine n_grid");
    for (std::size_t k = 0; k < s.attractors.size(); ++k) {
        Basin b;
        b.lo = lo;
        b.hi = hi;
        for (double sep : s.separators) {
            if (sep < s.attractors[k]) b.lo = std::max(b.lo, sep);
            if (sep > s.attractors[k]) b.hi = std::min(b.hi, sep);
        }
        s.basins.push_back(b);
    }
    return s;
}

/* --------------------------------------------------- quasipotential field */

enum class QpMethod { Dp, HjRoot };

struct QuasipotentialField {
    double source = 0.0;
    std::size_t source_index = 0;
    std::vector<double> x;
    std::vector<double> R;  // +inf marks nodes unreachable at finite action
    QpMethod method = QpMethod::Dp;

    double at(double xq) const {
        auto it = std::lower_bound(x.begin(), x.end(), xq - 1e-9);
        if (it == x.end() || std::fabs(*it - xq) > 1e-9)
            fail(ErrorCode::TableGap, "no grid node at x=" + std::to_string(xq));
        return R[static_cast<std::size_t>(it - x.begin())];
    }
};

/* uniform grid with the nearest nodes snapped onto the special points
   (sources, attractors, separators) so lookups there are exact */
inline std::vector<double> qp_grid(double lo, double hi, int n, const std::vector<double>& specials) {
    if (n < 8) fail(ErrorCode::RangeError, "quasipotential grid needs >= 8 nodes");
    std::vector<double> g(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) g[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (n - 1.0);
    for (double s : specials) {
        if (s < lo || s > hi) fail(ErrorCode::TableGap, "special point outside grid range");
        std::size_t best = 0;
        for (std::size_t i = 1; i < g.size(); ++i)
            if (std::fabs(g[i] - s) < std::fabs(g[best] - s)) best = i;
        g[best] = s;
    }
    for (std::size_t i = 1; i < g.size(); ++i)
        if (!(g[i] > g[i - 1])) fail(ErrorCode::BadDomain, "grid collapsed while snapping special points");
    return g;
}

namespace detail {

/* cheapest rate of crossing from xa to xb: min over traversal speeds of
   (distance / s) * L(midpoint, signed s); speeds live strictly inside
   (0, K) because L is infinite at and beyond the local drift bound */
inline double dp_edge_cost(const RateModel& model, double xa, double xb, int n_speeds) {
    const double dist = std::fabs(xb - xa);
    const double dir = (xb > xa) ? 1.0 : -1.0;
    const double mid = 0.5 * (xa + xb);
    const double K = model.local_drift_bound(mid);
    const double inf = std::numeric_limits<double>::infinity();
    if (!(K > 0.0)) return inf;  // drift vanishes identically: no motion
    std::vector<double> speeds;
    speeds.reserve(static_cast<std::size_t>(n_speeds) + 1);
    const double s_lo = std::log(1e-3 * K), s_hi = std::log(0.999 * K);
    for (int k = 0; k < n_speeds; ++k)
        speeds.push_back(std::exp(s_lo + (s_hi - s_lo) * k / (n_speeds - 1.0)));
    const double bb = model.bbar(mid);
    if (dir * bb > 0.0 && std::fabs(bb) < 0.999 * K)
        speeds.push_back(std::fabs(bb));  // the free speed: L vanishes there
    double best = inf;
    for (double s : speeds) {
        LegendreResult r = model.legendre(mid, dir * s);
        if (!r.L.finite) continue;
        best = std::min(best, dist / s * r.L.value);
    }
    return best;
}

} // namespace detail

/* shortest-action distances from the source by Dijkstra; on the 1-D grid
   the graph is the chain of adjacent nodes with direction-dependent edge
   costs, all nonnegative, so label-setting is exact */
inline QuasipotentialField quasipotential_dp(const RateModel& model, double source,
                                             const std::vector<double>& grid,
                                             int n_speeds = 96) {
    const auto& box = model.system().slow_domain.box[0];
    if (grid.front() < box[0] - 1e-12 || grid.back() > box[1] + 1e-12)
        fail(ErrorCode::TableGap, "grid exceeds the system's slow domain");
    QuasipotentialField f;
    f.method = QpMethod::Dp;
    f.source = source;
    f.x = grid;
    const double inf = std::numeric_limits<double>::infinity();
    f.R.assign(grid.size(), inf);
    std::size_t src = 0;
    bool found = false;
    for (std::size_t i = 0; i < grid.size(); ++i)
        if (std::fabs(grid[i] - source) <= 1e-12) {
            src = i;
            found = true;
            break;
        }
    if (!found) fail(ErrorCode::TableGap, "source is not a grid node");
    f.source_index = src;
    using Item = std::pair<double, std::size_t>;  // (distance, node)
    std::priority_queue<Item, std::vector<Item>, std::greater<Item>> pq;
    f.R[src] = 0.0;
    pq.push({0.0, src});
    std::vector<char> done(grid.size(), 0);
    while (!pq.empty()) {
        auto [d, u] = pq.top();
        pq.pop();
        if (done[u]) continue;
        done[u] = 1;
        const std::size_t nbr[2] = {u > 0 ? u - 1 : u, u + 1 < grid.size() ? u + 1 : u};
        for (std::size_t v : nbr) {
            if (v == u || done[v]) continue;
            const double c = detail::dp_edge_cost(model, grid[u], grid[v], n_speeds);
            if (d + c < f.R[v]) {
                f.R[v] = d + c;
                pq.push({f.R[v], v});
            }
        }
    }
    return f;
}

namespace detail {

/* Climbing rate at x in direction dir.  Where the opposing averaged drift
   exceeds every achievable velocity there is no momentum root and the move
   is impossible at any finite action, which the fields record as +inf. */
inline double climb_rate(const RateModel& model, double x, int dir) {
    try {
        return model.hj_root(x, dir);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::NoRoot) return std::numeric_limits<double>::infinity();
        throw;
    }
}

}  // namespace detail

/* Scalar quasipotential from an attractor to a target by the level-zero
   momentum root: R = integral of the positive root of H(x, sign * b) = 0
   along the segment, trapezoid rule; stretches where the averaged flow
   already points toward the target contribute zero. */
inline double hj_root_quasipotential(const RateModel& model, double source, double target,
                                     int n_cells = 256) {
    if (n_cells < 2) fail(ErrorCode::RangeError, "need >= 2 cells");
    if (source == target) return 0.0;
    const int dir = (target > source) ? +1 : -1;
    const double width = target - source;
    double acc = 0.0;
    double prev = detail::climb_rate(model, source, dir);
    for (int k = 1; k <= n_cells; ++k) {
        const double xk = source + width * static_cast<double>(k) / n_cells;
        const double cur = detail::climb_rate(model, xk, dir);
        acc += 0.5 * (prev + cur) * std::fabs(width) / n_cells;
        prev = cur;
    }
    return acc;
}

/* full field of the root-integral method on a grid, accumulated outward
   from the source in both directions */
inline QuasipotentialField quasipotential_hj(const RateModel& model, double source,
                                             const std::vector<double>& grid) {
    QuasipotentialField f;
    f.method = QpMethod::HjRoot;
    f.source = source;
    f.x = grid;
    f.R.assign(grid.size(), 0.0);
    std::size_t src = 0;
    bool found = false;
    for (std::size_t i = 0; i < grid.size(); ++i)
        if (std::fabs(grid[i] - source) <= 1e-12) {
            src = i;
            found = true;
            break;
        }
    if (!found) fail(ErrorCode::TableGap, "source is not a grid node");
    f.source_index = src;
    std::vector<double> root_up(grid.size()), root_dn(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        root_up[i] = detail::climb_rate(model, grid[i], +1);
        root_dn[i] = detail::climb_rate(model, grid[i], -1);
    }
    for (std::size_t i = src + 1; i < grid.size(); ++i)
        f.R[i] = f.R[i - 1] + 0.5 * (root_up[i - 1] + root_up[i]) * (grid[i] - grid[i - 1]);
    for (std::size_t i = src; i-- > 0;)
        f.R[i] = f.R[i + 1] + 0.5 * (root_dn[i + 1] + root_dn[i]) * (grid[i + 1] - grid[i]);
    return f;
}

/* ----------------------------------------------------- transition weights */

struct TransitionStructure {
    std::vector<std::vector<double>> R;  // R[i][j], diagonal zero by convention
    std::vector<double> R_i;             // min over j != i
    double epsilon = 0.0;
    std::vector<double> log_Q;     // log-sum-exp over i-graphs
    std::vector<double> prediction;  // normalized occupation weights, sums to 1
};

/* Barrier matrix between attractors: R[i][j] is the field of source O_i read
   at the last separator crossed before entering the basin of O_j (descents
   cost nothing, so successive barriers accumulate automatically). */
inline TransitionStructure transition_matrix(const RateModel& model, const AttractorSet& aset,
                                             QpMethod method, int n_nodes = 241,
                                             int n_speeds = 96) {
    const std::size_t ell = aset.attractors.size();
    if (ell < 2) fail(ErrorCode::RangeError, "need >= 2 attractors");
    std::vector<double> specials = aset.attractors;
    specials.insert(specials.end(), aset.separators.begin(), aset.separators.end());
    const auto& box = model.system().slow_domain.box[0];
    std::vector<double> grid = qp_grid(box[0], box[1], n_nodes, specials);
    TransitionStructure ts;
    ts.R.assign(ell, std::vector<double>(ell, 0.0));
    ts.R_i.assign(ell, 0.0);
    for (std::size_t i = 0; i < ell; ++i) {
        QuasipotentialField f = (method == QpMethod::Dp)
                                    ? quasipotential_dp(model, aset.attractors[i], grid, n_speeds)
                                    : quasipotential_hj(model, aset.attractors[i], grid);
        for (std::size_t j = 0; j < ell; ++j) {
            if (j == i) continue;
            /* the separator bounding basin j on the side facing O_i */
            const double gate = (aset.attractors[j] > aset.attractors[i]) ? aset.basins[j].lo
                                                                          : aset.basins[j].hi;
            ts.R[i][j] = f.at(gate);
        }
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < ell; ++j)
            if (j != i) best = std::min(best, ts.R[i][j]);
        ts.R_i[i] = best;
    }
    return ts;
}

/* all arrow maps g on labels {0..ell-1} minus {i} with g(l) != l and every
   arrow chain terminating in i (no directed cycles) */
inline std::vector<std::vector<int>> enumerate_igraphs(int ell, int i) {
    if (ell < 2) fail(ErrorCode::RangeError, "need ell >= 2");
    if (ell > 8) fail(ErrorCode::TooLarge, "i-graph enumeration bounded at ell = 8");
    if (i < 0 || i >= ell) fail(ErrorCode::RangeError, "root label out of range");
    std::vector<int> movers;
    for (int l = 0; l < ell; ++l)
        if (l != i) movers.push_back(l);
    std::vector<std::vector<int>> graphs;
    std::vector<int> choice(movers.size(), 0);  // odometer over target slots
    const int n_targets = ell - 1;
    while (true) {
        std::vector<int> g(static_cast<std::size_t>(ell), -1);
        for (std::size_t k = 0; k < movers.size(); ++k) {
            int t = choice[k];
            if (t >= movers[k]) ++t;  // skip the self-arrow
            g[static_cast<std::size_t>(movers[k])] = t;
        }
        bool acyclic = true;
        for (int l : movers) {
            int cur = l, hops = 0;
            while (cur != i && hops <= ell) {
                cur = g[static_cast<std::size_t>(cur)];
                ++hops;
            }
            if (cur != i) {
                acyclic = false;
                break;
            }
        }
        if (acyclic) graphs.push_back(g);
        std::size_t k = 0;
        for (; k < choice.size(); ++k) {
            if (++choice[k] < n_targets) break;
            choice[k] = 0;
        }
        if (k == choice.size()) break;
    }
    return graphs;
}

/* occupation weights: log Q_i = log-sum-exp over i-graphs of
   -(1/epsilon) * sum of graph arrow barriers; prediction normalized */
inline TransitionStructure igraph_weights(TransitionStructure ts, double epsilon) {
    if (!(epsilon > 0.0)) fail(ErrorCode::BadEpsilon, "epsilon must be positive");
    const int ell = static_cast<int>(ts.R.size());
    ts.epsilon = epsilon;
    ts.log_Q.assign(static_cast<std::size_t>(ell), -std::numeric_limits<double>::infinity());
    for (int i = 0; i < ell; ++i) {
        std::vector<double> terms;
        for (const auto& g : enumerate_igraphs(ell, i)) {
            double sum = 0.0;
            bool finite = true;
            for (int l = 0; l < ell; ++l) {
                if (g[static_cast<std::size_t>(l)] < 0) continue;
                const double r = ts.R[static_cast<std::size_t>(l)]
                                     [static_cast<std::size_t>(g[static_cast<std::size_t>(l)])];
                if (!std::isfinite(r)) {
                    finite = false;
                    break;
                }
                sum += r;
            }
            if (finite) terms.push_back(-sum / epsilon);
        }
        if (terms.empty()) continue;  // log_Q stays -inf
        const double tmax = *std::max_element(terms.begin(), terms.end());
        double acc = 0.0;
        for (double t : terms) acc += std::exp(t - tmax);
        ts.log_Q[static_cast<std::size_t>(i)] = tmax + std::log(acc);
    }
    double wmax = -std::numeric_limits<double>::infinity();
    for (double w : ts.log_Q) wmax = std::max(wmax, w);
    if (!std::isfinite(wmax)) fail(ErrorCode::AllInfinite, "every i-graph carries an infinite barrier");
    double z = 0.0;
    ts.prediction.assign(static_cast<std::size_t>(ell), 0.0);
    for (int i = 0; i < ell; ++i) z += std::exp(ts.log_Q[static_cast<std::size_t>(i)] - wmax);
    for (int i = 0; i < ell; ++i)
        ts.prediction[static_cast<std::size_t>(i)] =
            std::exp(ts.log_Q[static_cast<std::size_t>(i)] - wmax) / z;
    return ts;
}

struct ExitPrediction {
    double point = 0.0;
    double band_lo = 0.0;
    double band_hi = 0.0;
};

inline ExitPrediction predict_exit_time(double R_i, double epsilon, double alpha_band) {
    if (!(epsilon > 0.0)) fail(ErrorCode::BadEpsilon, "epsilon must be positive");
    ExitPrediction p;
    p.point = std::exp(R_i / epsilon);
    p.band_lo = std::exp((R_i - alpha_band) / epsilon);
    p.band_hi = std::exp((R_i + alpha_band) / epsilon);
    return p;
}

/* -------------------------------------------- experimental planar variant */

/* Planar Dijkstra over an 8-neighbor box grid with a user-supplied local
   rate L(position, velocity).  Ships as an unvalidated generalization: the
   validated scope of everything above is one slow dimension. */
struct PlanarField {
    int nx = 0, ny = 0;
    double lo_x = 0.0, hi_x = 0.0, lo_y = 0.0, hi_y = 0.0;
    std::vector<double> R;  // row-major, R[iy*nx + ix]

    double node_x(int ix) const { return lo_x + (hi_x - lo_x) * ix / (nx - 1.0); }
    double node_y(int iy) const { return lo_y + (hi_y - lo_y) * iy / (ny - 1.0); }
};

inline PlanarField quasipotential_dp_2d(
    const std::function<ExtendedReal(const SlowVec&, const SlowVec&)>& L_rule, double lo_x,
    double hi_x, double lo_y, double hi_y, int nx, int ny, const SlowVec& source, double speed_cap,
    int n_speeds = 24) {
    if (nx < 4 || ny < 4) fail(ErrorCode::RangeError, "planar grid needs nx, ny >= 4");
    if (!(speed_cap > 0.0)) fail(ErrorCode::RangeError, "speed cap must be positive");
    PlanarField f;
    f.nx = nx;
    f.ny = ny;
    f.lo_x = lo_x;
    f.hi_x = hi_x;
    f.lo_y = lo_y;
    f.hi_y = hi_y;
    const double inf = std::numeric_limits<double>::infinity();
    f.R.assign(static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny), inf);
    int six = 0, siy = 0;
    double best = inf;
    for (int iy = 0; iy < ny; ++iy)
        for (int ix = 0; ix < nx; ++ix) {
            const double d = std::hypot(f.node_x(ix) - source[0], f.node_y(iy) - source[1]);
            if (d < best) {
                best = d;
                six = ix;
                siy = iy;
            }
        }
    auto idx = [nx](int ix, int iy) { return static_cast<std::size_t>(iy) * static_cast<std::size_t>(nx) + static_cast<std::size_t>(ix); };
    using Item = std::pair<double, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<Item>> pq;
    f.R[idx(six, siy)] = 0.0;
    pq.push({0.0, idx(six, siy)});
    std::vector<char> done(f.R.size(), 0);
    while (!pq.empty()) {
        auto [d, u] = pq.top();
        pq.pop();
        if (done[u]) continue;
        done[u] = 1;
        const int ux = static_cast<int>(u) % nx, uy = static_cast<int>(u) / nx;
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                if (dx == 0 && dy == 0) continue;
                const int vx = ux + dx, vy = uy + dy;
                if (vx < 0 || vx >= nx || vy < 0 || vy >= ny) continue;
                const std::size_t v = idx(vx, vy);
                if (done[v]) continue;
                const double ex = f.node_x(vx) - f.node_x(ux);
                const double ey = f.node_y(vy) - f.node_y(uy);
                const double dist = std::hypot(ex, ey);
                SlowVec mid(0.5 * (f.node_x(ux) + f.node_x(vx)), 0.5 * (f.node_y(uy) + f.node_y(vy)));
                double cost = inf;
                for (int k = 0; k < n_speeds; ++k) {
                    const double s = speed_cap * std::exp(std::log(1e-3) * (1.0 - k / (n_speeds - 1.0)));
                    SlowVec vel(ex / dist * s, ey / dist * s);
                    ExtendedReal L = L_rule(mid, vel);
                    if (!L.finite) continue;
                    cost = std::min(cost, dist / s * L.value);
                }
                if (d + cost < f.R[v]) {
                    f.R[v] = d + cost;
                    pq.push({f.R[v], v});
                }
            }
    }
    return f;
}

} // namespace slowfast
