// Two-stage information gathering: choose which coordinate of the
// uncertainty to observe (or how long a prefix, in the scheduling
// variant), forecast the rest conditioned on the observation, then make
// the second-stage decision against that forecast.
//
// The conditional model p maps (x, masked z) to a full forecast; the
// endogenous forecaster f maps (poll choice, x) to the point forecast
// whose own polled entry stands in for the unobservable measurement at
// decision time. Training follows the sequential order: p first (an
// exogenous decision-loss fit through the second-stage argmin), then f
// against p frozen (a task-loss fit of the composite cost).

#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "endo/core.hpp"
#include "endo/costs.hpp"
#include "endo/models.hpp"
#include "endo/train.hpp"
#include "endo/vecmath.hpp"

namespace endo {

// --- conditional second-stage model -----------------------------------------

/// Forecast of the full z from features plus a masked observation.
/// Inputs to the core model: features as the x-slot, concat(z .* mask,
/// mask) as the v-slot, so unobserved coordinates are exactly invisible.
/// The scheduling variant is residual: prediction = baseline(x) + core.
struct ConditionalModel {
    ModelSpec core;
    ModelParams params;
    bool residual = false;
    TrainedModel baseline; // used when residual (initial-forecast model)
    int d_x = 0;
    int d_z = 0;

    Vec masked_input(const Vec& z_obs, const Vec& mask) const {
        Vec in(2 * d_z);
        for (int k = 0; k < d_z; ++k) {
            in[k] = z_obs[k] * mask[k];
            in[d_z + k] = mask[k];
        }
        return in;
    }

    Vec predict(const Vec& x, const Vec& z_obs, const Vec& mask) const {
        const Vec in = masked_input(z_obs, mask);
        Vec out = residual ? forward(core, params, {}, in)
                           : forward(core, params, x, in);
        if (residual) {
            const Vec base = baseline.predict(x, {});
            axpy(1.0, base, out);
        }
        return out;
    }

    /// Gradient of upstream . p(...) with respect to the core parameters
    /// and the observed z entries (already chained through the mask).
    struct Pullback {
        Vec d_params;
        Vec d_z_obs;
    };
    Pullback pullback(const Vec& x, const Vec& z_obs, const Vec& mask,
                      const Vec& upstream) const {
        const Vec in = masked_input(z_obs, mask);
        const ModelGrads g = residual ? backward(core, params, {}, in, upstream)
                                      : backward(core, params, x, in, upstream);
        Pullback out;
        out.d_params = g.d_theta;
        out.d_z_obs.assign(d_z, 0.0);
        for (int k = 0; k < d_z; ++k) out.d_z_obs[k] = g.d_v[k] * mask[k];
        return out;
    }
};

/// First-stage point forecaster f(w, x). The poll choice enters as a
/// one-hot over the poll space's index positions.
struct EndoForecaster {
    ModelSpec core; // x-slot: features; v-slot: one-hot poll choice
    ModelParams params;
    PollSpace polls;
    int d_x = 0;
    int d_z = 0;

    Vec onehot(int poll_index) const {
        Vec v(polls.size(), 0.0);
        v[static_cast<std::size_t>(poll_index)] = 1.0;
        return v;
    }

    Vec predict(int poll_index, const Vec& x) const {
        return forward(core, params, x, onehot(poll_index));
    }
};

/// Second-stage problem bundle: argmin_v c(v, zhat) over the space.
struct SecondStageSolver {
    CostSpec cost_spec;
    DecisionSpace space;
    DecideConfig cfg;

    Decision solve(const Vec& zhat) const {
        return decide_point(cost_spec, space, zhat, cfg);
    }
};

/// Diagonal sensitivity of v*(zhat) in zhat. Supported analytically:
/// newsvendor / scheduling / partial_scheduling on plain boxes, where
/// v*(zhat) = clip(zhat) so the sensitivity is the inside-the-box
/// indicator; finite spaces, where v* is piecewise constant (zero almost
/// everywhere). Everything else is rejected.
inline Vec argmin_grad(const CostSpec& cs, const DecisionSpace& space,
                       const Vec& zhat) {
    if (space.kind == DecisionSpace::Kind::finite)
        return Vec(zhat.size(), 0.0);
    const bool matching_cost = cs.kind == CostSpec::Kind::newsvendor ||
                               cs.kind == CostSpec::Kind::scheduling ||
                               cs.kind == CostSpec::Kind::partial_scheduling;
    if (space.kind != DecisionSpace::Kind::box || !matching_cost)
        throw std::invalid_argument(
            "argmin_grad: supported pairs are (newsvendor|scheduling|"
            "partial_scheduling) x box and any cost x finite space");
    Vec d(zhat.size(), 0.0);
    for (std::size_t k = 0; k < zhat.size(); ++k)
        d[k] = (zhat[k] > space.lower[k] && zhat[k] < space.upper[k]) ? 1.0 : 0.0;
    return d;
}

// --- configuration ------------------------------------------------------------

struct InfoTrainConfig {
    double lr = 0.02;
    int epochs = 150;
    int batch_size = 32;
    double grad_clip = 10.0;
    std::uint64_t seed = 0;
    int hidden = 30;                       // width of the p / f networks
    Activation activation = Activation::relu;
};

/// Single-poll pipeline: observe one coordinate. Scheduling pipeline:
/// observe the prefix up to hour w; cost is split at w and the p-loss is
/// per-hour normalized.
struct InfoPipeline {
    ConditionalModel p;
    EndoForecaster f;
    CostSpec cost_spec;
    DecisionSpace space;
    PollSpace polls;
    bool scheduling_variant = false;

    Vec mask_for(int poll_index) const {
        Vec m(static_cast<std::size_t>(p.d_z), 0.0);
        const int w = polls.indices[static_cast<std::size_t>(poll_index)];
        if (scheduling_variant) {
            for (int k = 0; k < std::min(w, p.d_z); ++k) m[static_cast<std::size_t>(k)] = 1.0;
        } else {
            m[static_cast<std::size_t>(w)] = 1.0;
        }
        return m;
    }

    /// Realized cost of choosing poll index wi on a point with true z:
    /// the quantity every baseline and the oracle are measured by.
    double realized_cost(int wi, const Vec& x, const Vec& z) const {
        const Vec mask = mask_for(wi);
        const Vec zhat = p.predict(x, z, mask);
        if (!scheduling_variant) {
            const Decision d = decide_point(cost_spec, space, zhat);
            return cost(cost_spec, d.v, z);
        }
        const int w = polls.indices[static_cast<std::size_t>(wi)];
        const int H = p.d_z;
        double total = 0.0;
        if (w > 0) {
            const auto prefix = CostSpec::partial_scheduling_cost(
                cost_spec.gamma_s, cost_spec.gamma_e, 0, w);
            total += cost(prefix, p.baseline.predict(x, {}), z);
        }
        if (w < H) {
            const auto suffix = CostSpec::partial_scheduling_cost(
                cost_spec.gamma_s, cost_spec.gamma_e, w, H);
            const Decision d = decide_point(suffix, space, zhat);
            total += cost(suffix, d.v, z);
        }
        return total;
    }
};

// --- training -----------------------------------------------------------------

namespace detail {

inline ModelSpec conditional_core_spec(int d_x, int d_z, bool residual,
                                       const InfoTrainConfig& cfg) {
    ModelSpec s;
    s.arch = cfg.hidden > 0 ? ModelSpec::Arch::mlp1 : ModelSpec::Arch::linear;
    s.hidden = cfg.hidden;
    s.act = cfg.activation;
    s.d_x = residual ? 0 : d_x;
    s.d_v = 2 * d_z;
    s.d_z = d_z;
    return s;
}

/// Deterministic evaluation of the p objective: cycle w over the poll
/// space by record index.
inline double p_objective(const ConditionalModel& p, const CostSpec& cs,
                          const DecisionSpace& space, const Dataset& ds,
                          const PollSpace& polls, bool scheduling) {
    double total = 0.0;
    const int H = p.d_z;
    for (std::size_t n = 0; n < ds.size(); ++n) {
        const Record& rec = ds[n];
        const int wi = static_cast<int>(n % polls.size());
        const int w = polls.indices[static_cast<std::size_t>(wi)];
        Vec mask(static_cast<std::size_t>(H), 0.0);
        if (scheduling) {
            if (w >= H) continue; // empty suffix
            for (int k = 0; k < w; ++k) mask[static_cast<std::size_t>(k)] = 1.0;
            const Vec zhat = p.predict(rec.x, rec.z, mask);
            const auto suffix =
                CostSpec::partial_scheduling_cost(cs.gamma_s, cs.gamma_e, w, H);
            const Decision d = decide_point(suffix, space, zhat);
            total += cost(suffix, d.v, rec.z) / static_cast<double>(H - w);
        } else {
            mask[static_cast<std::size_t>(w)] = 1.0;
            const Vec zhat = p.predict(rec.x, rec.z, mask);
            const Decision d = decide_point(cs, space, zhat);
            total += cost(cs, d.v, rec.z);
        }
    }
    return total / static_cast<double>(ds.size());
}

} // namespace detail

/// Fit the conditional model by descending the realized decision cost
/// through the second-stage argmin (chain rule via argmin_grad). One
/// shared poll choice per batch, drawn uniformly.
inline ConditionalModel train_p(const CostSpec& cs, const DecisionSpace& space,
                                const Dataset& ds, const PollSpace& polls,
                                const InfoTrainConfig& cfg,
                                bool scheduling_variant = false,
                                const TrainedModel* baseline = nullptr) {
    if (ds.empty()) throw std::invalid_argument("train_p: empty dataset");
    if (polls.indices.empty()) throw std::invalid_argument("train_p: empty poll space");
    if (scheduling_variant && baseline == nullptr)
        throw std::invalid_argument("train_p: scheduling variant needs a baseline model");

    const int d_z = ds.dims().d_z;
    ConditionalModel p;
    p.d_x = ds.dims().d_x;
    p.d_z = d_z;
    p.residual = scheduling_variant;
    if (baseline) p.baseline = *baseline;
    p.core = detail::conditional_core_spec(p.d_x, d_z, p.residual, cfg);
    Rng rng(cfg.seed);
    p.params = init_params(p.core, rng);

    const int n = static_cast<int>(ds.size());
    const int bs = cfg.batch_size > 0 ? std::min(cfg.batch_size, n) : n;
    const int H = d_z;

    double best_obj = detail::p_objective(p, cs, space, ds, polls, scheduling_variant);
    ModelParams best = p.params;

    for (int e = 0; e < cfg.epochs; ++e) {
        Rng re = rng.split(static_cast<std::uint64_t>(e) + 1);
        for (int start = 0; start < n; start += bs) {
            const int stop = std::min(start + bs, n);
            // one shared poll decision per batch
            const int wi = re.uniform_int(0, static_cast<int>(polls.size()) - 1);
            const int w = polls.indices[static_cast<std::size_t>(wi)];
            if (scheduling_variant && w >= H) continue;
            Vec mask(static_cast<std::size_t>(H), 0.0);
            CostSpec batch_cost = cs;
            double norm = 1.0;
            if (scheduling_variant) {
                for (int k = 0; k < w; ++k) mask[static_cast<std::size_t>(k)] = 1.0;
                batch_cost = CostSpec::partial_scheduling_cost(cs.gamma_s,
                                                               cs.gamma_e, w, H);
                norm = 1.0 / static_cast<double>(H - w); // per-hour scaling
            } else {
                mask[static_cast<std::size_t>(w)] = 1.0;
            }

            Vec grad(p.params.theta.size(), 0.0);
            for (int i = start; i < stop; ++i) {
                const Record& rec = ds[static_cast<std::size_t>(i)];
                const Vec zhat = p.predict(rec.x, rec.z, mask);
                const Decision dec = decide_point(batch_cost, space, zhat);
                const Vec sens = argmin_grad(batch_cost, space, zhat);
                Vec up = subgrad_v(batch_cost, dec.v, rec.z);
                for (int k = 0; k < H; ++k) up[static_cast<std::size_t>(k)] *= sens[static_cast<std::size_t>(k)] * norm;
                const auto pb = p.pullback(rec.x, rec.z, mask, up);
                axpy(1.0, pb.d_params, grad);
            }
            scale(grad, 1.0 / static_cast<double>(stop - start));
            if (cfg.grad_clip > 0.0) clip_norm(grad, cfg.grad_clip);
            axpy(-cfg.lr, grad, p.params.theta);
            project_params(p.core, p.params);
        }
        const double obj =
            detail::p_objective(p, cs, space, ds, polls, scheduling_variant);
        if (!std::isfinite(obj))
            throw TrainingDivergence("conditional-model fit diverged at learning rate " +
                                     std::to_string(cfg.lr));
        if (obj < best_obj) {
            best_obj = obj;
            best.theta = p.params.theta;
        }
    }
    p.params = std::move(best);
    return p;
}

namespace detail {

/// Squared gap between the predicted composite cost (forecast in both
/// slots) and the realized composite cost (true observation in both
/// slots), for one record at one poll choice. Optionally accumulates the
/// gradient with respect to the forecaster parameters.
inline double f_endo_record_loss(const InfoPipeline& pipe, const EndoForecaster& f,
                                 int wi, const Record& rec, Vec* grad) {
    const Vec mask = pipe.mask_for(wi);
    const int H = f.d_z;
    const Vec fx = f.predict(wi, rec.x);

    CostSpec eval_cost = pipe.cost_spec;
    if (pipe.scheduling_variant) {
        const int w = pipe.polls.indices[static_cast<std::size_t>(wi)];
        if (w >= H) return 0.0; // empty suffix: nothing to learn
        eval_cost = CostSpec::partial_scheduling_cost(pipe.cost_spec.gamma_s,
                                                      pipe.cost_spec.gamma_e, w, H);
    }

    // predicted side: p sees f's own polled entries
    const Vec zhat_pred = pipe.p.predict(rec.x, fx, mask);
    const Decision dec_pred = decide_point(eval_cost, pipe.space, zhat_pred);
    const double a = cost(eval_cost, dec_pred.v, fx);
    // realized side: p sees the true observation, cost against true z
    const Vec zhat_real = pipe.p.predict(rec.x, rec.z, mask);
    const Decision dec_real = decide_point(eval_cost, pipe.space, zhat_real);
    const double b = cost(eval_cost, dec_real.v, rec.z);

    const double resid = a - b;
    if (grad) {
        // two routes into f: the outer cost's z-slot, and p's masked input
        Vec up_f = subgrad_z(eval_cost, dec_pred.v, fx);
        const Vec sens = argmin_grad(eval_cost, pipe.space, zhat_pred);
        Vec up_p = subgrad_v(eval_cost, dec_pred.v, fx);
        for (int k = 0; k < H; ++k) up_p[static_cast<std::size_t>(k)] *= sens[static_cast<std::size_t>(k)];
        const auto pb = pipe.p.pullback(rec.x, fx, mask, up_p);
        axpy(1.0, pb.d_z_obs, up_f);
        scale(up_f, 2.0 * resid);
        const ModelGrads g =
            backward(f.core, f.params, rec.x, f.onehot(wi), up_f);
        axpy(1.0, g.d_theta, *grad);
    }
    return resid * resid;
}

inline double f_endo_objective(const InfoPipeline& pipe, const EndoForecaster& f,
                               const Dataset& ds) {
    double total = 0.0;
    for (std::size_t n = 0; n < ds.size(); ++n) {
        const int wi = static_cast<int>(n % pipe.polls.size());
        total += f_endo_record_loss(pipe, f, wi, ds[n], nullptr);
    }
    return total / static_cast<double>(ds.size());
}

} // namespace detail

/// Fit the endogenous forecaster against the frozen conditional model:
/// squared difference between the predicted and realized composite cost,
/// with the polled observation replaced by f's own entries on the
/// predicted side. One shared poll choice per batch.
inline EndoForecaster train_f_endo(InfoPipeline& pipe, const Dataset& ds,
                                   const InfoTrainConfig& cfg) {
    if (ds.empty()) throw std::invalid_argument("train_f_endo: empty dataset");
    EndoForecaster f;
    f.polls = pipe.polls;
    f.d_x = ds.dims().d_x;
    f.d_z = ds.dims().d_z;
    f.core.arch = cfg.hidden > 0 ? ModelSpec::Arch::mlp1 : ModelSpec::Arch::linear;
    f.core.hidden = cfg.hidden;
    f.core.act = cfg.activation;
    f.core.d_x = f.d_x;
    f.core.d_v = static_cast<int>(pipe.polls.size());
    f.core.d_z = f.d_z;
    Rng rng(cfg.seed ^ 0xF00DULL);
    f.params = init_params(f.core, rng);

    const int n = static_cast<int>(ds.size());
    const int bs = cfg.batch_size > 0 ? std::min(cfg.batch_size, n) : n;

    double best_obj = detail::f_endo_objective(pipe, f, ds);
    ModelParams best = f.params;
    for (int e = 0; e < cfg.epochs; ++e) {
        Rng re = rng.split(static_cast<std::uint64_t>(e) + 1);
        for (int start = 0; start < n; start += bs) {
            const int stop = std::min(start + bs, n);
            const int wi = re.uniform_int(0, static_cast<int>(pipe.polls.size()) - 1);
            Vec grad(f.params.theta.size(), 0.0);
            for (int i = start; i < stop; ++i)
                detail::f_endo_record_loss(pipe, f, wi, ds[static_cast<std::size_t>(i)], &grad);
            scale(grad, 1.0 / static_cast<double>(stop - start));
            if (cfg.grad_clip > 0.0) clip_norm(grad, cfg.grad_clip);
            axpy(-cfg.lr, grad, f.params.theta);
            project_params(f.core, f.params);
        }
        const double obj = detail::f_endo_objective(pipe, f, ds);
        if (!std::isfinite(obj))
            throw TrainingDivergence("endogenous forecaster fit diverged at learning rate " +
                                     std::to_string(cfg.lr));
        if (obj < best_obj) {
            best_obj = obj;
            best.theta = f.params.theta;
        }
    }
    f.params = std::move(best);
    return f;
}

/// First-stage decision: enumerate the poll space and pick the choice
/// with the lowest predicted composite cost; ties go to the smallest
/// index. Scheduling variant splits the evaluation at w: initial
/// schedule before, p's schedule after, both measured against f's
/// forecast.
inline int decide_poll(const InfoPipeline& pipe, const Vec& x) {
    const EndoForecaster& f = pipe.f;
    int best_wi = 0;
    double best_val = std::numeric_limits<double>::infinity();
    for (std::size_t wi = 0; wi < pipe.polls.size(); ++wi) {
        const Vec fx = f.predict(static_cast<int>(wi), x);
        const Vec mask = pipe.mask_for(static_cast<int>(wi));
        double val = 0.0;
        if (!pipe.scheduling_variant) {
            const Vec zhat = pipe.p.predict(x, fx, mask);
            const Decision dec = decide_point(pipe.cost_spec, pipe.space, zhat);
            val = cost(pipe.cost_spec, dec.v, fx);
        } else {
            const int w = pipe.polls.indices[wi];
            const int H = pipe.p.d_z;
            if (w > 0) {
                const auto prefix = CostSpec::partial_scheduling_cost(
                    pipe.cost_spec.gamma_s, pipe.cost_spec.gamma_e, 0, w);
                val += cost(prefix, pipe.p.baseline.predict(x, {}), fx);
            }
            if (w < H) {
                const auto suffix = CostSpec::partial_scheduling_cost(
                    pipe.cost_spec.gamma_s, pipe.cost_spec.gamma_e, w, H);
                const Vec zhat = pipe.p.predict(x, fx, mask);
                const Decision dec = decide_point(suffix, pipe.space, zhat);
                val += cost(suffix, dec.v, fx);
            }
        }
        if (val < best_val) {
            best_val = val;
            best_wi = static_cast<int>(wi);
        }
    }
    return best_wi;
}

// --- baseline poll policies ----------------------------------------------------

/// A poll policy maps a test point to a poll index. The optimal oracle
/// additionally needs the realized z (synthetic scenarios only) and
/// rejects calls without it.
struct PollPolicy {
    std::string name;
    std::function<int(const Vec& x, const Vec* z_true, Rng& rng)> choose;
};

inline PollPolicy poll_random(const PollSpace& polls) {
    return {"random", [n = static_cast<int>(polls.size())](const Vec&, const Vec*,
                                                           Rng& rng) {
                return rng.uniform_int(0, n - 1);
            }};
}

/// Fixed choice minimizing the average realized cost on training data.
inline PollPolicy poll_single_best(const InfoPipeline& pipe, const Dataset& train) {
    int best_wi = 0;
    double best_mean = std::numeric_limits<double>::infinity();
    for (std::size_t wi = 0; wi < pipe.polls.size(); ++wi) {
        double total = 0.0;
        for (const Record& rec : train)
            total += pipe.realized_cost(static_cast<int>(wi), rec.x, rec.z);
        if (total < best_mean) {
            best_mean = total;
            best_wi = static_cast<int>(wi);
        }
    }
    return {"single_best",
            [best_wi](const Vec&, const Vec*, Rng&) { return best_wi; }};
}

/// Regression (x, one-hot w) -> realized cost; decisions minimize the
/// predicted cost over the poll space.
inline PollPolicy poll_cost_learner(const InfoPipeline& pipe, const Dataset& train,
                                    const InfoTrainConfig& cfg) {
    const int W = static_cast<int>(pipe.polls.size());
    // flatten (record, w) pairs into a reward-learner dataset
    Dataset flat({train.dims().d_x, W, 1});
    for (const Record& rec : train)
        for (int wi = 0; wi < W; ++wi) {
            Record r;
            r.x = rec.x;
            r.v.assign(W, 0.0);
            r.v[static_cast<std::size_t>(wi)] = 1.0;
            r.z = {pipe.realized_cost(wi, rec.x, rec.z)};
            flat.push(std::move(r));
        }
    ModelSpec spec;
    spec.arch = cfg.hidden > 0 ? ModelSpec::Arch::mlp1 : ModelSpec::Arch::linear;
    spec.hidden = cfg.hidden;
    spec.act = cfg.activation;
    spec.d_x = train.dims().d_x;
    spec.d_v = W;
    spec.d_z = 1;
    TrainConfig tc;
    tc.lr = cfg.lr;
    tc.epochs = cfg.epochs;
    tc.batch_size = cfg.batch_size;
    tc.seed = cfg.seed ^ 0xC057ULL;
    const TrainedModel m = train_two_stage(spec, flat, tc);
    return {"cost_learner", [m, W](const Vec& x, const Vec*, Rng&) {
                int best = 0;
                double best_val = std::numeric_limits<double>::infinity();
                for (int wi = 0; wi < W; ++wi) {
                    Vec onehot(static_cast<std::size_t>(W), 0.0);
                    onehot[static_cast<std::size_t>(wi)] = 1.0;
                    const double val = m.predict(x, onehot)[0];
                    if (val < best_val) {
                        best_val = val;
                        best = wi;
                    }
                }
                return best;
            }};
}

/// In-hindsight best choice per point; needs the realized z.
inline PollPolicy poll_optimal_oracle(const InfoPipeline& pipe) {
    return {"optimal_oracle", [&pipe](const Vec& x, const Vec* z_true, Rng&) {
                if (z_true == nullptr)
                    throw std::invalid_argument(
                        "optimal_oracle: requires realized z from a synthetic "
                        "scenario; not available otherwise");
                int best = 0;
                double best_val = std::numeric_limits<double>::infinity();
                for (std::size_t wi = 0; wi < pipe.polls.size(); ++wi) {
                    const double val =
                        pipe.realized_cost(static_cast<int>(wi), x, *z_true);
                    if (val < best_val) {
                        best_val = val;
                        best = static_cast<int>(wi);
                    }
                }
                return best;
            }};
}

/// The trained pipeline as a policy.
inline PollPolicy poll_endo_e2e(const InfoPipeline& pipe) {
    return {"endo_e2e",
            [&pipe](const Vec& x, const Vec*, Rng&) { return decide_poll(pipe, x); }};
}

/// Baseline initial-forecast model for the scheduling variant: directly
/// minimizes the decision cost of using the forecast as the schedule.
inline TrainedModel train_base_forecaster(const CostSpec& cs, const Dataset& ds,
                                          const InfoTrainConfig& cfg) {
    if (ds.empty())
        throw std::invalid_argument("train_base_forecaster: empty dataset");
    ModelSpec spec;
    spec.arch = cfg.hidden > 0 ? ModelSpec::Arch::mlp1 : ModelSpec::Arch::linear;
    spec.hidden = cfg.hidden;
    spec.act = cfg.activation;
    spec.d_x = ds.dims().d_x;
    spec.d_v = 0;
    spec.d_z = ds.dims().d_z;
    Rng rng(cfg.seed ^ 0xBA5EULL);
    ModelParams params = init_params(spec, rng);

    auto objective = [&](const ModelParams& p) {
        double total = 0.0;
        for (const Record& rec : ds)
            total += cost(cs, forward(spec, p, rec.x, {}), rec.z);
        return total / static_cast<double>(ds.size());
    };
    TrainConfig tc;
    tc.lr = cfg.lr;
    tc.batch_size = cfg.batch_size;
    tc.grad_clip = cfg.grad_clip;
    double best_obj = objective(params);
    ModelParams best = params;
    for (int e = 0; e < cfg.epochs; ++e) {
        detail::gd_epoch(spec, params, ds, tc,
                         [&](const Record& rec, const ModelParams& p) {
                             const Vec v = forward(spec, p, rec.x, {});
                             return subgrad_v(cs, v, rec.z);
                         });
        const double obj = objective(params);
        if (!std::isfinite(obj))
            throw TrainingDivergence("base forecaster fit diverged at learning rate " +
                                     std::to_string(cfg.lr));
        if (obj < best_obj) {
            best_obj = obj;
            best = params;
        }
    }
    TrainedModel out{spec, std::move(best), "vanilla_e2e"};
    out.final_task_loss = best_obj;
    return out;
}

} // namespace endo
