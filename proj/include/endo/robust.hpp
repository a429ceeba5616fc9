// Robust decision-making over model uncertainty sets. The set U_eps
// collects every model in the class whose sum-form task loss is within
// eps of the best achievable value beta on the data. Decisions minimize
// the worst case over the set: the inner problem finds the adversarial
// model at a fixed decision by alternating between cost ascent and
// task-loss repair, and the outer problem is solved by cutting planes
// over a growing finite subset of U_eps.
//
// Orientation is canonical throughout: the decision-maker minimizes the
// stored cost, the adversary maximizes it. Pricing revenue is a negated
// cost, so the adversarial maximum of cost is the minimum predicted
// revenue.

#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "endo/core.hpp"
#include "endo/costs.hpp"
#include "endo/exact.hpp"
#include "endo/models.hpp"
#include "endo/train.hpp"
#include "endo/vecmath.hpp"

namespace endo {

// --- uncertainty set ---------------------------------------------------------

struct UncertaintySetSpec {
    ModelSpec model;
    CostSpec cost_spec;
    const Dataset* data = nullptr; // non-owning, must outlive the set
    double beta = 0.0;             // min task loss over the class (sum form)
    ModelParams beta_model;        // the attaining parameters
    std::string beta_provenance;   // "exact" or "heuristic"
    double epsilon = 0.0;          // sum-form slack

    double budget() const { return beta + epsilon; }
    double feasibility_tol() const { return 1e-6 * (1.0 + beta); }

    double loss_of(const ModelParams& p) const {
        return task_loss_sum(model, p, cost_spec, *data);
    }
    bool feasible(const ModelParams& p) const {
        return loss_of(p) <= budget() + feasibility_tol();
    }
};

struct BetaConfig {
    enum class Mode { automatic, exact, heuristic };
    Mode mode = Mode::automatic;
    TrainConfig train;       // heuristic path
    double miqp_gap = 1e-6;  // exact path
    double miqp_time_limit = 30.0;
    int exact_cell_limit = 48; // automatic: exact only when N * d_z is small
};

/// Compute beta and its attaining model, then attach the slack epsilon.
/// Exact (branch-and-bound) when the model is linear, the cost is
/// piecewise-linear, and the instance is small; sampling heuristic
/// otherwise. Provenance is recorded either way.
inline UncertaintySetSpec make_uncertainty_set(const ModelSpec& model,
                                               const CostSpec& cs,
                                               const Dataset& ds, double epsilon,
                                               const BetaConfig& cfg = {}) {
    if (epsilon < 0.0)
        throw std::invalid_argument("make_uncertainty_set: epsilon must be >= 0");
    UncertaintySetSpec u;
    u.model = model;
    u.cost_spec = cs;
    u.data = &ds;
    u.epsilon = epsilon;

    const bool exact_possible =
        model.arch == ModelSpec::Arch::linear && cs.piecewise_linear() &&
        model.norm_bound.has_value();
    bool use_exact = false;
    switch (cfg.mode) {
    case BetaConfig::Mode::exact:
        if (!exact_possible)
            throw std::invalid_argument(
                "make_uncertainty_set: exact beta needs a norm-bounded linear "
                "model and a piecewise-linear cost");
        use_exact = true;
        break;
    case BetaConfig::Mode::heuristic:
        use_exact = false;
        break;
    case BetaConfig::Mode::automatic:
        use_exact = exact_possible &&
                    static_cast<int>(ds.size()) * model.d_z <= cfg.exact_cell_limit;
        break;
    }

    if (use_exact) {
        const auto inst = build_miqp(cs, ds, model, *model.norm_bound);
        const MIQPSolution sol =
            solve_miqp(inst, cfg.miqp_gap, cfg.miqp_time_limit);
        u.beta = sol.objective;
        u.beta_model = sol.theta;
        u.beta_provenance = "exact";
    } else {
        const TrainedModel m = train_e2e_sampled(model, cs, ds, cfg.train);
        u.beta = m.final_task_loss;
        u.beta_model = m.params;
        u.beta_provenance = "heuristic";
    }
    return u;
}

// --- epsilon schedule --------------------------------------------------------

/// Inputs of the high-probability coverage bound. The covering size may
/// be given directly or derived for the norm-bounded linear class as
/// (1 + 1/gamma)^dim; logs are taken analytically so large classes do
/// not overflow.
struct EpsilonScheduleParams {
    long long n = 0;                    // sample count N
    double delta = 0.1;                 // confidence
    std::optional<double> covering_size;// |N_gamma|
    std::optional<int> dim;             // linear class: parameter dimension
    double gamma = 0.1;                 // covering radius
    double lipschitz = 1.0;             // M of the model class in theta
    double misspecification = 0.0;      // Delta

    double log_covering() const {
        if (covering_size) {
            if (*covering_size < 1.0)
                throw std::invalid_argument("epsilon_schedule: covering size < 1");
            return std::log(*covering_size);
        }
        if (dim)
            return static_cast<double>(*dim) * std::log1p(1.0 / gamma);
        throw std::invalid_argument(
            "epsilon_schedule: need covering_size or dim");
    }
};

/// eps_N = (8/N) log(|N_gamma| / delta) + 3 M gamma + Delta, natural log.
/// The value applies to the (1/N)-normalized task loss; multiply by N to
/// budget the sum form (epsilon_sum_budget below does this).
inline double epsilon_schedule(const EpsilonScheduleParams& p) {
    if (p.n < 1) throw std::invalid_argument("epsilon_schedule: N must be >= 1");
    if (!(p.delta > 0.0 && p.delta < 1.0))
        throw std::invalid_argument("epsilon_schedule: delta must be in (0,1)");
    if (p.gamma <= 0.0)
        throw std::invalid_argument("epsilon_schedule: gamma must be > 0");
    if (p.lipschitz <= 0.0)
        throw std::invalid_argument("epsilon_schedule: Lipschitz constant must be > 0");
    if (p.misspecification < 0.0)
        throw std::invalid_argument("epsilon_schedule: Delta must be >= 0");
    return 8.0 / static_cast<double>(p.n) *
               (p.log_covering() - std::log(p.delta)) +
           3.0 * p.lipschitz * p.gamma + p.misspecification;
}

/// Convenience for the linear class: gamma = 1/log N and the covering
/// bound (1 + 1/gamma)^dim.
inline EpsilonScheduleParams linear_class_schedule(long long n, int dim,
                                                   double delta,
                                                   double lipschitz,
                                                   double misspecification = 0.0) {
    if (n < 3) throw std::invalid_argument("linear_class_schedule: N too small");
    EpsilonScheduleParams p;
    p.n = n;
    p.delta = delta;
    p.dim = dim;
    p.gamma = 1.0 / std::log(static_cast<double>(n));
    p.lipschitz = lipschitz;
    p.misspecification = misspecification;
    return p;
}

/// Sum-form budget slack implied by the schedule.
inline double epsilon_sum_budget(const EpsilonScheduleParams& p) {
    return static_cast<double>(p.n) * epsilon_schedule(p);
}

// --- inner problem -----------------------------------------------------------

struct InnerConfig {
    int epochs = 200;      // T alternating epochs
    double lr = 0.05;      // same rate for ascent and repair steps
    int batch_size = 0;
    double grad_clip = 10.0;
    int repair_factor = 10; // repair phase cap = repair_factor * epochs
    std::uint64_t seed = 0;
    const ModelParams* warm_start = nullptr; // optional feasible start
};

struct InnerResult {
    ModelParams model;
    double value = 0.0; // c(v, f(x, v)) at the returned model
    double loss = 0.0;  // its task loss (sum form)
    bool feasible = false;
};

namespace detail {

/// One full-dataset epoch of task-loss descent (repair direction).
inline void repair_epoch(const UncertaintySetSpec& u, ModelParams& p,
                         const InnerConfig& cfg) {
    TrainConfig tc;
    tc.lr = cfg.lr;
    tc.batch_size = cfg.batch_size;
    tc.grad_clip = cfg.grad_clip;
    gd_epoch(u.model, p, *u.data, tc, [&](const Record& rec, const ModelParams& pp) {
        const Vec zhat = forward(u.model, pp, rec.x, rec.v);
        const double resid =
            cost(u.cost_spec, rec.v, zhat) - cost(u.cost_spec, rec.v, rec.z);
        Vec up = subgrad_z(u.cost_spec, rec.v, zhat);
        scale(up, 2.0 * resid);
        return up;
    });
}

/// One ascent step on c(v, f(x, v)) in theta, projected onto the ball.
inline void ascent_step(const UncertaintySetSpec& u, ModelParams& p, const Vec& v,
                        const Vec& x, const InnerConfig& cfg) {
    const Vec zhat = forward(u.model, p, x, v);
    const Vec up = subgrad_z(u.cost_spec, v, zhat);
    Vec g = backward(u.model, p, x, v, up).d_theta;
    if (cfg.grad_clip > 0.0) clip_norm(g, cfg.grad_clip);
    axpy(cfg.lr, g, p.theta);
    project_params(u.model, p);
}

} // namespace detail

/// Alternating adversary: while the task loss exceeds the budget the
/// model is pulled back toward the data, otherwise the predicted cost at
/// (x, v) is pushed up. A final repair phase guarantees the returned
/// model is feasible; among all feasible iterates the highest-cost one
/// is returned, so the result never undercuts the feasible start.
inline InnerResult inner_worst_case(const UncertaintySetSpec& u, const Vec& v,
                                    const Vec& x, const InnerConfig& cfg = {}) {
    if (!u.feasible(u.beta_model))
        throw std::invalid_argument(
            "inner_worst_case: the beta model does not satisfy the budget");
    auto value_at = [&](const ModelParams& p) {
        return cost(u.cost_spec, v, forward(u.model, p, x, v));
    };

    InnerResult best;
    best.model = u.beta_model;
    best.value = value_at(u.beta_model);
    best.loss = u.loss_of(u.beta_model);
    best.feasible = true;

    ModelParams p = u.beta_model;
    if (cfg.warm_start && u.feasible(*cfg.warm_start)) {
        p = *cfg.warm_start;
        const double val = value_at(p);
        if (val > best.value) {
            best.model = p;
            best.value = val;
            best.loss = u.loss_of(p);
        }
    }

    const double budget = u.budget();
    const double tol = u.feasibility_tol();
    for (int t = 0; t < cfg.epochs; ++t) {
        if (u.loss_of(p) > budget) {
            detail::repair_epoch(u, p, cfg);
        } else {
            detail::ascent_step(u, p, v, x, cfg);
        }
        const double loss = u.loss_of(p);
        if (loss <= budget + tol) {
            const double val = value_at(p);
            if (val > best.value) {
                best.model = p;
                best.value = val;
                best.loss = loss;
            }
        }
    }
    // unconditional feasibility: descend the task loss until back inside
    int repair = 0;
    while (u.loss_of(p) > budget + tol && repair < cfg.repair_factor * cfg.epochs) {
        detail::repair_epoch(u, p, cfg);
        ++repair;
    }
    if (u.feasible(p)) {
        const double val = value_at(p);
        if (val > best.value) {
            best.model = p;
            best.value = val;
            best.loss = u.loss_of(p);
        }
    }
    return best;
}

/// Regularized adversary (the tuning-based alternative): plain ascent on
/// c(v, f(x, v)) - lambda * E(f) with the combined gradient, clipped so
/// large lambda degenerates gracefully into task-loss descent.
/// Feasibility of the result is NOT guaranteed; that is the documented
/// contrast with the alternating scheme.
inline InnerResult inner_regularized(const UncertaintySetSpec& u, const Vec& v,
                                     const Vec& x, double lambda,
                                     const InnerConfig& cfg = {}) {
    if (lambda < 0.0)
        throw std::invalid_argument("inner_regularized: lambda must be >= 0");
    ModelParams p = cfg.warm_start ? *cfg.warm_start : u.beta_model;
    for (int t = 0; t < cfg.epochs; ++t) {
        const Vec zhat = forward(u.model, p, x, v);
        Vec g = backward(u.model, p, x, v, subgrad_z(u.cost_spec, v, zhat)).d_theta;
        if (lambda > 0.0) {
            for (const Record& rec : *u.data) {
                const Vec zr = forward(u.model, p, rec.x, rec.v);
                const double resid =
                    cost(u.cost_spec, rec.v, zr) - cost(u.cost_spec, rec.v, rec.z);
                if (resid == 0.0) continue;
                Vec up = subgrad_z(u.cost_spec, rec.v, zr);
                scale(up, 2.0 * resid);
                axpy(-lambda, backward(u.model, p, rec.x, rec.v, up).d_theta, g);
            }
        }
        if (cfg.grad_clip > 0.0) clip_norm(g, cfg.grad_clip);
        axpy(cfg.lr, g, p.theta);
        project_params(u.model, p);
    }
    InnerResult out;
    out.model = p;
    out.value = cost(u.cost_spec, v, forward(u.model, p, x, v));
    out.loss = u.loss_of(p);
    out.feasible = out.loss <= u.budget() + u.feasibility_tol();
    return out;
}

// --- outer problem -----------------------------------------------------------

/// Growing subset of U_eps; every member satisfies the budget.
struct CutSet {
    std::vector<ModelParams> members;
    std::vector<json> log; // per-iteration bounds

    /// max over members of c(v, f_j(x, v)); the cut-set approximation of
    /// the robust objective (exact equality needs a nonempty set).
    double value_at(const ModelSpec& spec, const CostSpec& cs, const Vec& x,
                    const Vec& v) const {
        double best = -std::numeric_limits<double>::infinity();
        for (const ModelParams& m : members)
            best = std::max(best, cost(cs, v, forward(spec, m, x, v)));
        return best;
    }
};

struct RobustConfig {
    int max_cuts = 16;
    double cut_tol_scale = 1e-3;  // cut_tol = scale * (1 + |incumbent|)
    double gap_tol_scale = 1e-3;  // gap threshold, same scaling
    int v0_restarts = 10;         // box spaces: independent cutting planes
    InnerConfig inner;
    DecideConfig outer; // cut-set argmin over box spaces
    std::uint64_t seed = 0;
};

struct RobustDecision {
    Vec decision;
    double upper = 0.0; // inner value at the decision (true robust cost <= this at v)
    double lower = 0.0; // cut-set optimum (<= true robust optimum)
    double gap = 0.0;
    bool converged = false; // gap threshold or no improving cut
    bool hit_cap = false;
    int iterations = 0;
    CutSet cuts;
};

/// argmin over the space of the cut-set max (one outer step of the
/// cutting-plane loop, also usable with a frozen cut set). Finite spaces
/// are enumerated exactly.
inline Decision robust_outer_step(const UncertaintySetSpec& u, const CutSet& cuts,
                                  const DecisionSpace& space, const Vec& x,
                                  const DecideConfig& cfg = {}) {
    auto objective = [&](const Vec& v) {
        return cuts.value_at(u.model, u.cost_spec, x, v);
    };
    if (space.kind == DecisionSpace::Kind::finite) {
        Decision best{space.choices.front(), objective(space.choices.front())};
        for (std::size_t i = 1; i < space.choices.size(); ++i) {
            const double val = objective(space.choices[i]);
            if (val < best.value) best = {space.choices[i], val};
        }
        return best;
    }
    const int d = space.dim();
    double width = 0.0;
    for (int k = 0; k < d; ++k)
        width = std::max(width, space.upper[k] - space.lower[k]);
    const Rng root(cfg.seed);
    Decision best;
    best.value = std::numeric_limits<double>::infinity();
    for (int r = 0; r < cfg.restarts; ++r) {
        Rng rr = root.split(static_cast<std::uint64_t>(r));
        Vec v(d);
        for (int k = 0; k < d; ++k)
            v[k] = rr.uniform(space.lower[k], space.upper[k]);
        v = space.project(std::move(v));
        double lr = cfg.lr * std::max(width, 1e-12);
        Vec best_v = v;
        double best_val = objective(v);
        for (int step = 0; step < cfg.steps; ++step) {
            if (step > 0 && step % cfg.decay_every == 0) lr *= 0.5;
            // subgradient of the max: the active cut's gradient
            std::size_t active = 0;
            double active_val = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < cuts.members.size(); ++j) {
                const double val =
                    cost(u.cost_spec, v, forward(u.model, cuts.members[j], x, v));
                if (val > active_val) {
                    active_val = val;
                    active = j;
                }
            }
            const Vec zhat = forward(u.model, cuts.members[active], x, v);
            Vec g = subgrad_v(u.cost_spec, v, zhat);
            const Vec gz = subgrad_z(u.cost_spec, v, zhat);
            axpy(1.0, backward(u.model, cuts.members[active], x, v, gz).d_v, g);
            axpy(-lr, g, v);
            v = space.project(std::move(v));
            const double val = objective(v);
            if (val < best_val) {
                best_val = val;
                best_v = v;
            }
        }
        if (best_val < best.value) best = {std::move(best_v), best_val};
    }
    return best;
}

namespace detail {

inline RobustDecision cutting_plane_run(const UncertaintySetSpec& u,
                                        const DecisionSpace& space, const Vec& x,
                                        Vec v0, const RobustConfig& cfg) {
    RobustDecision out;
    Vec v = std::move(v0);
    double best_upper = std::numeric_limits<double>::infinity();
    Vec best_v = v;
    double lower = -std::numeric_limits<double>::infinity();
    const ModelParams* warm = nullptr;

    for (int k = 0; k < cfg.max_cuts; ++k) {
        out.iterations = k + 1;
        InnerConfig icfg = cfg.inner;
        icfg.warm_start = warm;
        const InnerResult inner = inner_worst_case(u, v, x, icfg);
        if (inner.value < best_upper) {
            best_upper = inner.value;
            best_v = v;
        }
        const double cut_tol = cfg.cut_tol_scale * (1.0 + std::abs(inner.value));
        const double cutset_at_v = out.cuts.members.empty()
                                       ? -std::numeric_limits<double>::infinity()
                                       : out.cuts.value_at(u.model, u.cost_spec, x, v);
        out.cuts.log.push_back({{"iteration", k},
                                {"inner_value", inner.value},
                                {"cutset_at_v", cutset_at_v},
                                {"lower", lower}});
        if (inner.value > cutset_at_v + cut_tol) {
            out.cuts.members.push_back(inner.model);
            warm = &out.cuts.members.back();
        } else {
            out.converged = true; // no improving cut exists at v
            break;
        }
        const Decision next = robust_outer_step(u, out.cuts, space, x, cfg.outer);
        lower = next.value;
        v = next.v;
        const double gap_tol = cfg.gap_tol_scale * (1.0 + std::abs(best_upper));
        if (best_upper - lower <= gap_tol) {
            out.converged = true;
            break;
        }
    }
    out.hit_cap = !out.converged;
    out.decision = best_v;
    out.upper = best_upper;
    out.lower = std::min(lower == -std::numeric_limits<double>::infinity()
                             ? best_upper
                             : lower,
                         best_upper);
    out.gap = out.upper - out.lower;
    return out;
}

} // namespace detail

/// Cutting-plane solution of min_v max_{f in U_eps} c(v, f(x, v)).
/// Returns the best decision found with certified bounds: the cut-set
/// optimum lower-bounds the true robust value, the inner value at the
/// returned decision upper-bounds it. Box spaces restart the whole
/// procedure from several initial decisions.
inline RobustDecision robust_decide(const UncertaintySetSpec& u,
                                    const DecisionSpace& space, const Vec& x,
                                    const RobustConfig& cfg = {}) {
    if (space.kind == DecisionSpace::Kind::finite) {
        return detail::cutting_plane_run(u, space, x, space.choices.front(), cfg);
    }
    const Rng root(cfg.seed);
    RobustDecision best;
    best.upper = std::numeric_limits<double>::infinity();
    const int runs = std::max(cfg.v0_restarts, 1);
    for (int r = 0; r < runs; ++r) {
        Rng rr = root.split(static_cast<std::uint64_t>(r));
        Vec v0(space.dim());
        for (int k = 0; k < space.dim(); ++k)
            v0[k] = rr.uniform(space.lower[k], space.upper[k]);
        RobustDecision run =
            detail::cutting_plane_run(u, space, x, space.project(std::move(v0)), cfg);
        if (run.upper < best.upper) best = std::move(run);
    }
    return best;
}

// --- lower-bound curves --------------------------------------------------------

struct CurveRow {
    double epsilon = 0.0;
    Vec v;
    double bound = 0.0;    // adversarial value; revenue-oriented for pricing
    double mc_truth = std::numeric_limits<double>::quiet_NaN();
};

/// Adversarial value per (epsilon, v) over a grid, warm-starting each
/// larger epsilon from the previous worst case so the curves are
/// monotone by construction. For pricing the reported numbers are
/// revenues (negated costs): enlarging epsilon can only lower them.
inline std::vector<CurveRow> robust_lower_bound_curve(
    const ModelSpec& model, const CostSpec& cs, const Dataset& ds,
    const std::vector<double>& epsilons, const std::vector<Vec>& v_grid,
    const Vec& x, const BetaConfig& beta_cfg = {}, const InnerConfig& inner_cfg = {},
    const Scenario* scenario = nullptr, int n_mc = 10000,
    std::uint64_t mc_seed = 0) {
    std::vector<double> eps_sorted = epsilons;
    std::sort(eps_sorted.begin(), eps_sorted.end());
    const bool reward = cs.kind == CostSpec::Kind::pricing_revenue;

    UncertaintySetSpec base = make_uncertainty_set(model, cs, ds, 0.0, beta_cfg);
    std::vector<CurveRow> rows;
    for (std::size_t vi = 0; vi < v_grid.size(); ++vi) {
        const Vec& v = v_grid[vi];
        double truth = std::numeric_limits<double>::quiet_NaN();
        if (scenario) {
            Rng rng = Rng(mc_seed).split(vi);
            double sum = 0.0;
            for (int s = 0; s < n_mc; ++s)
                sum += cost(cs, v, scenario->sample_z(x, v, rng));
            truth = sum / n_mc;
            if (reward) truth = -truth;
        }
        ModelParams warm = base.beta_model;
        for (const double eps : eps_sorted) {
            UncertaintySetSpec u = base;
            u.epsilon = eps;
            InnerConfig icfg = inner_cfg;
            icfg.warm_start = &warm;
            const InnerResult inner = inner_worst_case(u, v, x, icfg);
            warm = inner.model;
            CurveRow row;
            row.epsilon = eps;
            row.v = v;
            row.bound = reward ? -inner.value : inner.value;
            row.mc_truth = truth;
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

} // namespace endo
