// Exact minimization of the task loss for linear models and
// piecewise-linear costs, via the mixed-integer quadratic reformulation:
// per record n and coordinate k a continuous w_{n,k} tracks the active
// affine piece, selected by binaries y_{n,k,j} under big-M indicator
// constraints, and the objective is sum_n (sum_k w_{n,k} - r_n)^2.
//
// The solver is a dedicated branch-and-bound over the piece selections:
// binaries never enter the node relaxation (dropping the indicator
// constraints can only loosen it), so each node solves a small convex
// problem over theta with a ball constraint by projected gradient.
// Incumbents come from evaluating the true task loss at relaxation
// points, which implicitly repairs y to the argmax selection.

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <queue>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "endo/core.hpp"
#include "endo/costs.hpp"
#include "endo/models.hpp"
#include "endo/train.hpp"
#include "endo/vecmath.hpp"

namespace endo {

struct MIQPInstance {
    int theta_dim = 0;
    int n_records = 0;
    int n_coords = 0;
    double big_m = 0.0;
    std::optional<double> norm_bound;

    // f_{n,k}(theta) = gradient[n][k] . theta (bias slot included)
    std::vector<std::vector<Vec>> gradient;
    // piece value = az[k][j] * f_{n,k}(theta) + piece_const[n][k][j]
    std::vector<std::vector<double>> az;                     // [k][j]
    std::vector<std::vector<std::vector<double>>> piece_const; // [n][k][j]
    Vec r; // realized cost per record

    // the spec and params the instance was built from
    ModelSpec model;
    CostSpec cost_spec;
    json meta;

    int pieces(int k) const { return static_cast<int>(az[k].size()); }

    double piece_value(int n, int k, int j, const Vec& theta) const {
        return az[k][j] * dot(gradient[n][k], theta) + piece_const[n][k][j];
    }

    /// Objective at theta with binaries repaired to the argmax pieces;
    /// equals the sum-form task loss of the linear model at theta.
    double objective(const Vec& theta) const {
        double total = 0.0;
        for (int n = 0; n < n_records; ++n) {
            double s = 0.0;
            for (int k = 0; k < n_coords; ++k) {
                double best = piece_value(n, k, 0, theta);
                for (int j = 1; j < pieces(k); ++j)
                    best = std::max(best, piece_value(n, k, j, theta));
                s += best;
            }
            const double resid = s - r[n];
            total += resid * resid;
        }
        return total;
    }
};

struct MIQPSolution {
    enum class Status { optimal, gap_limited, time_limited };

    ModelParams theta;
    double objective = 0.0;
    double lower_bound = 0.0;
    double gap = 0.0;
    Status status = Status::optimal;
    std::vector<std::vector<int>> y; // selected piece per (n, k)
    int nodes_explored = 0;
};

/// Assemble the instance. Requires a linear model spec and a
/// piecewise-linear cost. M follows the documented default
/// 2 * (max|z| + norm_bound * max||(x,v)|| + 1) and is recorded, along
/// with the certified bound actually needed for the indicator
/// constraints over the norm ball.
inline MIQPInstance build_miqp(const CostSpec& cs, const Dataset& ds,
                               const ModelSpec& model_spec,
                               double norm_bound,
                               std::optional<double> big_m_override = {}) {
    if (model_spec.arch != ModelSpec::Arch::linear)
        throw std::invalid_argument("build_miqp: only linear models are supported");
    if (!cs.piecewise_linear())
        throw std::invalid_argument("build_miqp: cost is not piecewise-linear");
    if (ds.empty()) throw std::invalid_argument("build_miqp: empty dataset");
    if (norm_bound <= 0.0)
        throw std::invalid_argument("build_miqp: norm_bound must be > 0");
    model_spec.validate();

    const int d_z = model_spec.d_z;
    const int din = model_spec.input_dim();
    const PWLDecomposition pwl = pwl_decompose(cs, d_z);

    MIQPInstance inst;
    inst.theta_dim = model_spec.param_count();
    inst.n_records = static_cast<int>(ds.size());
    inst.n_coords = d_z;
    inst.norm_bound = norm_bound;
    inst.model = model_spec;
    inst.model.norm_bound = norm_bound;
    inst.cost_spec = cs;

    inst.az.resize(d_z);
    for (int k = 0; k < d_z; ++k)
        for (const AffinePiece& p : pwl.coords[k]) inst.az[k].push_back(p.az);

    double max_abs_z = 0.0, max_norm_u = 0.0;
    inst.gradient.resize(inst.n_records);
    inst.piece_const.resize(inst.n_records);
    inst.r.resize(inst.n_records);
    for (int n = 0; n < inst.n_records; ++n) {
        const Record& rec = ds[static_cast<std::size_t>(n)];
        const Vec u = concat(rec.x, rec.v);
        max_norm_u = std::max(max_norm_u, norm2(u));
        for (double zk : rec.z) max_abs_z = std::max(max_abs_z, std::abs(zk));
        inst.r[n] = cost(cs, rec.v, rec.z);
        inst.gradient[n].resize(d_z);
        inst.piece_const[n].resize(d_z);
        for (int k = 0; k < d_z; ++k) {
            // d f_k / d theta: row k of A gets u, bias slot k gets 1
            Vec g(inst.theta_dim, 0.0);
            for (int i = 0; i < din; ++i) g[k * din + i] = u[i];
            g[d_z * din + k] = 1.0;
            inst.gradient[n][k] = std::move(g);
            for (const AffinePiece& p : pwl.coords[k])
                inst.piece_const[n][k].push_back(p.bv * rec.v[k] + p.c0);
        }
    }

    const double m_default = 2.0 * (max_abs_z + norm_bound * max_norm_u + 1.0);
    // certified requirement: M >= max piece spread over the theta ball
    double m_required = 0.0;
    for (int n = 0; n < inst.n_records; ++n)
        for (int k = 0; k < d_z; ++k) {
            const double gn = norm2(inst.gradient[n][k]);
            for (int j = 0; j < inst.pieces(k); ++j)
                for (int j2 = 0; j2 < inst.pieces(k); ++j2) {
                    const double spread =
                        std::abs(inst.az[k][j] - inst.az[k][j2]) * norm_bound * gn +
                        std::abs(inst.piece_const[n][k][j] -
                                 inst.piece_const[n][k][j2]);
                    m_required = std::max(m_required, spread);
                }
        }
    // the documented default can undershoot the certified spread for
    // strongly scaled costs; the exported instance must stay valid, so
    // take whichever is larger
    inst.big_m = big_m_override.value_or(std::max(m_default, m_required));
    inst.meta = {{"m_default", m_default},
                 {"m_required", m_required},
                 {"m_used", inst.big_m},
                 {"binaries", inst.n_records * d_z * pwl.max_pieces()},
                 {"records", inst.n_records},
                 {"coords", d_z}};
    return inst;
}

namespace detail {

/// Node of the branch-and-bound tree: per (n, k) either a fixed piece
/// index or -1 for free.
struct BnbNode {
    std::vector<int> fixed; // n * K + k -> piece or -1
    double bound = 0.0;
    Vec theta_hint;

    bool operator<(const BnbNode& other) const { return bound > other.bound; }
};

/// Relaxation objective at a node. Fixed coordinates contribute their
/// selected piece, free coordinates the max piece; records with any free
/// coordinate are penalized one-sidedly because their w can float upward
/// once the indicator constraints are dropped. Dominance of a fixed
/// selection over its sibling pieces is enforced by a quadratic penalty
/// with weight rho: feasible points pay nothing, so any rho keeps the
/// minimum a valid lower bound, and ramping rho makes leaf bounds tight.
inline double relaxed_value(const MIQPInstance& inst, const std::vector<int>& fixed,
                            double rho, const Vec& theta, Vec* grad = nullptr) {
    if (grad) grad->assign(theta.size(), 0.0);
    double total = 0.0;
    int sel[64];
    for (int n = 0; n < inst.n_records; ++n) {
        double s = 0.0;
        bool any_free = false;
        for (int k = 0; k < inst.n_coords; ++k) {
            const int f = fixed[n * inst.n_coords + k];
            int j = f;
            if (f < 0) {
                any_free = true;
                j = 0;
                double best = inst.piece_value(n, k, 0, theta);
                for (int jj = 1; jj < inst.pieces(k); ++jj) {
                    const double val = inst.piece_value(n, k, jj, theta);
                    if (val > best) {
                        best = val;
                        j = jj;
                    }
                }
                s += best;
            } else {
                s += inst.piece_value(n, k, j, theta);
                // dominance penalty: selected piece must beat the others
                const double fval = dot(inst.gradient[n][k], theta);
                const double sel_val = inst.az[k][j] * fval + inst.piece_const[n][k][j];
                for (int jj = 0; jj < inst.pieces(k); ++jj) {
                    if (jj == j) continue;
                    const double other =
                        inst.az[k][jj] * fval + inst.piece_const[n][k][jj];
                    const double viol = other - sel_val;
                    if (viol > 0.0) {
                        total += rho * viol * viol;
                        if (grad)
                            axpy(2.0 * rho * viol * (inst.az[k][jj] - inst.az[k][j]),
                                 inst.gradient[n][k], *grad);
                    }
                }
            }
            sel[k] = j;
        }
        const double resid = s - inst.r[n];
        const double active = any_free ? std::max(resid, 0.0) : resid;
        total += active * active;
        if (grad && active != 0.0) {
            for (int k = 0; k < inst.n_coords; ++k)
                axpy(2.0 * active * inst.az[k][sel[k]], inst.gradient[n][k], *grad);
        }
    }
    return total;
}

/// Projected gradient with Armijo backtracking on the convex relaxation.
inline std::pair<Vec, double> solve_relaxation_once(const MIQPInstance& inst,
                                                    const std::vector<int>& fixed,
                                                    double rho, Vec theta) {
    const double radius = inst.norm_bound.value_or(0.0);
    auto project = [&](Vec t) {
        if (radius > 0.0) {
            const double n = norm2(t);
            if (n > radius) scale(t, radius / n);
        }
        return t;
    };
    theta = project(std::move(theta));
    Vec grad;
    double val = relaxed_value(inst, fixed, rho, theta, &grad);
    double step = 1.0;
    int stall = 0;
    for (int it = 0; it < 4000 && stall < 3; ++it) {
        const double g2 = dot(grad, grad);
        if (g2 < 1e-18) break;
        double t = step;
        Vec cand;
        double cand_val = val;
        bool accepted = false;
        for (int bt = 0; bt < 40; ++bt) {
            cand = theta;
            axpy(-t, grad, cand);
            cand = project(std::move(cand));
            cand_val = relaxed_value(inst, fixed, rho, cand);
            if (cand_val <= val - 1e-4 * t * g2) {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) break;
        step = std::min(t * 2.0, 1e6);
        const double improvement = val - cand_val;
        theta = std::move(cand);
        val = relaxed_value(inst, fixed, rho, theta, &grad);
        stall = improvement <= 1e-8 * (1.0 + std::abs(val)) ? stall + 1 : 0;
    }
    return {std::move(theta), val};
}

/// Penalty continuation: the returned value is still a valid lower bound
/// for every rho, so we report the largest (tightest) one found.
inline std::pair<Vec, double> solve_relaxation(const MIQPInstance& inst,
                                               const std::vector<int>& fixed,
                                               Vec theta) {
    bool any_fixed = false;
    for (int f : fixed)
        if (f >= 0) any_fixed = true;
    if (!any_fixed) return solve_relaxation_once(inst, fixed, 0.0, std::move(theta));
    double bound = -std::numeric_limits<double>::infinity();
    for (const double rho : {1e2, 1e4, 1e6}) {
        auto [t, val] = solve_relaxation_once(inst, fixed, rho, std::move(theta));
        theta = std::move(t);
        bound = std::max(bound, val);
    }
    return {std::move(theta), bound};
}

inline std::vector<std::vector<int>> repair_y(const MIQPInstance& inst,
                                              const Vec& theta) {
    std::vector<std::vector<int>> y(inst.n_records,
                                    std::vector<int>(inst.n_coords, 0));
    for (int n = 0; n < inst.n_records; ++n)
        for (int k = 0; k < inst.n_coords; ++k) {
            double best = inst.piece_value(n, k, 0, theta);
            for (int j = 1; j < inst.pieces(k); ++j) {
                const double val = inst.piece_value(n, k, j, theta);
                if (val > best) {
                    best = val;
                    y[n][k] = j;
                }
            }
        }
    return y;
}

} // namespace detail

/// Branch-and-bound over piece selections. Single-threaded and fully
/// deterministic. Terminates with proven absolute gap <= gap_tol, or
/// best-so-far at the time limit.
inline MIQPSolution solve_miqp(const MIQPInstance& inst, double gap_tol = 1e-6,
                               double time_limit_sec = 60.0) {
    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    auto elapsed = [&]() {
        return std::chrono::duration<double>(clock::now() - t0).count();
    };

    const int cells = inst.n_records * inst.n_coords;
    if (inst.n_coords > 64)
        throw std::invalid_argument("solve_miqp: too many coordinates");

    detail::BnbNode root;
    root.fixed.assign(cells, -1);
    root.theta_hint.assign(inst.theta_dim, 0.0);
    auto [theta0, bound0] = detail::solve_relaxation(inst, root.fixed, root.theta_hint);
    root.bound = bound0;
    root.theta_hint = theta0;

    MIQPSolution best;
    best.theta.theta = theta0;
    best.objective = inst.objective(theta0);
    best.lower_bound = bound0;

    std::priority_queue<detail::BnbNode> open;
    open.push(root);
    int explored = 0;
    bool timed_out = false;
    // bounds of fully-fixed leaves that could not be branched further
    double exhaust_lb = std::numeric_limits<double>::infinity();

    while (!open.empty()) {
        if (elapsed() > time_limit_sec) {
            timed_out = true;
            break;
        }
        detail::BnbNode node = open.top();
        open.pop();
        best.lower_bound = std::min(best.objective, node.bound);
        if (node.bound >= best.objective - gap_tol) break; // proven
        ++explored;

        // candidate incumbent at this node's relaxation point
        const double true_val = inst.objective(node.theta_hint);
        if (true_val < best.objective) {
            best.objective = true_val;
            best.theta.theta = node.theta_hint;
        }

        // branch on the most ambiguous free cell at theta_hint
        int branch_cell = -1;
        double best_ambiguity = std::numeric_limits<double>::infinity();
        for (int n = 0; n < inst.n_records; ++n)
            for (int k = 0; k < inst.n_coords; ++k) {
                const int cell = n * inst.n_coords + k;
                if (node.fixed[cell] >= 0 || inst.pieces(k) < 2) continue;
                double top = -std::numeric_limits<double>::infinity();
                double second = top;
                for (int j = 0; j < inst.pieces(k); ++j) {
                    const double val = inst.piece_value(n, k, j, node.theta_hint);
                    if (val > top) {
                        second = top;
                        top = val;
                    } else if (val > second) {
                        second = val;
                    }
                }
                const double ambiguity = top - second;
                if (ambiguity < best_ambiguity - 1e-15) {
                    best_ambiguity = ambiguity;
                    branch_cell = cell;
                }
            }
        if (branch_cell < 0) {
            // fully-fixed leaf: its penalized bound stands as the best
            // certificate for this region
            exhaust_lb = std::min(exhaust_lb, node.bound);
            continue;
        }

        const int k = branch_cell % inst.n_coords;
        for (int j = 0; j < inst.pieces(k); ++j) {
            detail::BnbNode child;
            child.fixed = node.fixed;
            child.fixed[branch_cell] = j;
            auto [theta_c, bound_c] =
                detail::solve_relaxation(inst, child.fixed, node.theta_hint);
            child.bound = std::max(bound_c, node.bound); // bounds are monotone
            child.theta_hint = std::move(theta_c);
            const double val_c = inst.objective(child.theta_hint);
            if (val_c < best.objective) {
                best.objective = val_c;
                best.theta.theta = child.theta_hint;
            }
            if (child.bound < best.objective - gap_tol) open.push(std::move(child));
        }
    }

    // polish the incumbent: fix y to its repaired selection and resolve
    // the two-sided problem from the incumbent point
    {
        const auto y = detail::repair_y(inst, best.theta.theta);
        std::vector<int> fixed(cells);
        for (int n = 0; n < inst.n_records; ++n)
            for (int k = 0; k < inst.n_coords; ++k)
                fixed[n * inst.n_coords + k] = y[n][k];
        auto [theta_p, ignored] =
            detail::solve_relaxation_once(inst, fixed, 1e8, best.theta.theta);
        (void)ignored;
        const double polished = inst.objective(theta_p);
        if (polished < best.objective) {
            best.objective = polished;
            best.theta.theta = std::move(theta_p);
        }
    }

    if (!timed_out && open.empty())
        best.lower_bound = std::min(best.objective, exhaust_lb);
    else if (!open.empty())
        best.lower_bound = std::min(best.lower_bound, open.top().bound);
    best.gap = std::max(0.0, best.objective - best.lower_bound);
    best.nodes_explored = explored;
    best.y = detail::repair_y(inst, best.theta.theta);
    best.status = timed_out ? MIQPSolution::Status::time_limited
                  : best.gap <= gap_tol ? MIQPSolution::Status::optimal
                                        : MIQPSolution::Status::gap_limited;
    return best;
}

/// CPLEX-style LP file of the instance, for cross-checking against
/// external solvers. Quadratic objective in the [ ... ]/2 block, the
/// norm ball as a quadratic constraint, binaries declared at the end.
inline void export_lp(const MIQPInstance& inst, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("export_lp: cannot open " + path);
    auto wname = [&](int n, int k) {
        return "w_" + std::to_string(n) + "_" + std::to_string(k);
    };
    auto yname = [&](int n, int k, int j) {
        return "y_" + std::to_string(n) + "_" + std::to_string(k) + "_" +
               std::to_string(j);
    };
    auto tname = [](int t) { return "t_" + std::to_string(t); };

    out << "\\ task-loss MIQP, big-M = " << inst.big_m << "\n";
    out << "Minimize\n obj: ";
    // linear terms: -2 r_n sum_k w_{n,k}; constant sum r_n^2 goes in a comment
    for (int n = 0; n < inst.n_records; ++n)
        for (int k = 0; k < inst.n_coords; ++k) {
            const double c = -2.0 * inst.r[n];
            out << (c >= 0 ? "+ " : "- ") << std::abs(c) << " " << wname(n, k) << " ";
        }
    out << "+ [ ";
    for (int n = 0; n < inst.n_records; ++n)
        for (int k = 0; k < inst.n_coords; ++k) {
            out << "+ 2 " << wname(n, k) << " ^ 2 ";
            for (int k2 = k + 1; k2 < inst.n_coords; ++k2)
                out << "+ 4 " << wname(n, k) << " * " << wname(n, k2) << " ";
        }
    out << "] / 2\n";
    double r2 = 0.0;
    for (double rn : inst.r) r2 += rn * rn;
    out << "\\ plus constant " << r2 << "\n";

    out << "Subject To\n";
    int row = 0;
    for (int n = 0; n < inst.n_records; ++n)
        for (int k = 0; k < inst.n_coords; ++k) {
            for (int j = 0; j < inst.pieces(k); ++j) {
                // w - az * (g . theta) >= pconst
                out << " lo" << row << ": " << wname(n, k);
                for (int t = 0; t < inst.theta_dim; ++t) {
                    const double c = -inst.az[k][j] * inst.gradient[n][k][t];
                    if (c != 0.0)
                        out << (c >= 0 ? " + " : " - ") << std::abs(c) << " "
                            << tname(t);
                }
                out << " >= " << inst.piece_const[n][k][j] << "\n";
                // w - az * (g . theta) + M y <= pconst + M
                out << " up" << row << ": " << wname(n, k);
                for (int t = 0; t < inst.theta_dim; ++t) {
                    const double c = -inst.az[k][j] * inst.gradient[n][k][t];
                    if (c != 0.0)
                        out << (c >= 0 ? " + " : " - ") << std::abs(c) << " "
                            << tname(t);
                }
                out << " + " << inst.big_m << " " << yname(n, k, j)
                    << " <= " << inst.piece_const[n][k][j] + inst.big_m << "\n";
                ++row;
            }
            out << " pick" << row << ":";
            for (int j = 0; j < inst.pieces(k); ++j)
                out << " + " << yname(n, k, j);
            out << " = 1\n";
        }
    if (inst.norm_bound) {
        out << " ball: [ ";
        for (int t = 0; t < inst.theta_dim; ++t)
            out << "+ " << tname(t) << " ^ 2 ";
        out << "] <= " << (*inst.norm_bound) * (*inst.norm_bound) << "\n";
    }
    out << "Bounds\n";
    for (int t = 0; t < inst.theta_dim; ++t) out << " " << tname(t) << " free\n";
    for (int n = 0; n < inst.n_records; ++n)
        for (int k = 0; k < inst.n_coords; ++k)
            out << " " << wname(n, k) << " free\n";
    out << "Binary\n";
    for (int n = 0; n < inst.n_records; ++n)
        for (int k = 0; k < inst.n_coords; ++k)
            for (int j = 0; j < inst.pieces(k); ++j)
                out << " " << yname(n, k, j) << "\n";
    out << "End\n";
}

} // namespace endo
