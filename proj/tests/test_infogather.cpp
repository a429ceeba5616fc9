#include <catch2/catch_amalgamated.hpp>

#include "endo/infogather.hpp"
#include "endo/scenarios.hpp"
#include "test_helpers.hpp"

using namespace endo;

namespace {

/// Deterministic two-coordinate world: z = (t, 2t) with t = x[0].
/// Observing either coordinate reveals everything.
Dataset twin_world_data(int n, std::uint64_t seed) {
    Dataset ds({1, 1, 2});
    Rng rng(seed);
    for (int i = 0; i < n; ++i) {
        const double t = rng.uniform(0.5, 1.5);
        Record r;
        r.x = {t};
        r.v = {0.0}; // decisions are made downstream, not stored
        r.z = {t, 2.0 * t};
        ds.push(r);
    }
    return ds;
}

/// Correlated pair: z1 = t exactly, z2 = t + noise. Observing z1 is
/// strictly more informative.
Dataset correlated_pair_data(int n, double noise_sd, std::uint64_t seed) {
    Dataset ds({1, 1, 2});
    Rng rng(seed);
    for (int i = 0; i < n; ++i) {
        const double t = rng.uniform(0.5, 1.5);
        Record r;
        r.x = {rng.uniform()}; // uninformative feature
        r.v = {0.0};
        r.z = {t, t + rng.normal(0.0, noise_sd)};
        ds.push(r);
    }
    return ds;
}

InfoPipeline make_twin_pipeline(const Dataset& train, const InfoTrainConfig& cfg) {
    InfoPipeline pipe;
    pipe.cost_spec = CostSpec::newsvendor_cost(0.3);
    pipe.space = DecisionSpace::box(Vec{0.0, 0.0}, Vec{5.0, 5.0});
    pipe.polls = PollSpace::coordinates(2);
    pipe.p = train_p(pipe.cost_spec, pipe.space, train, pipe.polls, cfg);
    return pipe;
}

/// Hand-built truth-revealing conditional model for the twin world:
/// from observation z1 (poll 0) output (z1, 2 z1).
ConditionalModel identity_p_twin() {
    ConditionalModel p;
    p.d_x = 1;
    p.d_z = 2;
    p.core.arch = ModelSpec::Arch::linear;
    p.core.d_x = 1;
    p.core.d_v = 4; // (z masked, mask)
    p.core.d_z = 2;
    // rows over input (x, zm1, zm2, m1, m2): out1 = zm1, out2 = 2 zm1
    p.params.theta.assign(p.core.param_count(), 0.0);
    const int din = 5;
    p.params.theta[0 * din + 1] = 1.0;
    p.params.theta[1 * din + 1] = 2.0;
    return p;
}

} // namespace

TEST_CASE("argmin_grad") {
    SECTION("free-box scheduling is the identity") {
        const auto cs = CostSpec::scheduling_cost(1.0, 0.5);
        const auto space = DecisionSpace::box(Vec(3, -10.0), Vec(3, 10.0));
        const Vec zhat{0.5, -1.0, 2.0};
        const Decision d = decide_point(cs, space, zhat);
        REQUIRE(d.v == zhat);
        REQUIRE(argmin_grad(cs, space, zhat) == Vec{1.0, 1.0, 1.0});
    }
    SECTION("finite spaces have zero sensitivity") {
        const auto space = DecisionSpace::finite({Vec{0.0}, Vec{1.0}});
        REQUIRE(argmin_grad(CostSpec::pricing(), space, Vec{0.3}) == Vec{0.0});
    }
    SECTION("clipped coordinates have zero sensitivity") {
        const auto cs = CostSpec::newsvendor_cost(0.4);
        const auto space = DecisionSpace::box(Vec{0.0, 0.0}, Vec{1.0, 1.0});
        REQUIRE(argmin_grad(cs, space, Vec{0.5, 2.0}) == Vec{1.0, 0.0});
    }
    SECTION("unsupported pairs are rejected") {
        const auto box = DecisionSpace::box(Vec{0.0}, Vec{1.0});
        REQUIRE_THROWS_AS(argmin_grad(CostSpec::pricing(), box, Vec{0.5}),
                          std::invalid_argument);
        const auto cap = DecisionSpace::box_with_capacity(Vec{0.0}, Vec{1.0}, 0.5);
        REQUIRE_THROWS_AS(argmin_grad(CostSpec::newsvendor_cost(0.3), cap, Vec{0.5}),
                          std::invalid_argument);
    }
    SECTION("composed objective gradient matches finite differences") {
        const auto cs = CostSpec::newsvendor_cost(0.3);
        const auto space = DecisionSpace::box(Vec(2, 0.0), Vec(2, 4.0));
        Rng rng(3);
        for (int trial = 0; trial < 30; ++trial) {
            Vec zhat{rng.uniform(0.3, 3.7), rng.uniform(0.3, 3.7)};
            Vec z{rng.uniform(0.0, 4.0), rng.uniform(0.0, 4.0)};
            // keep away from the cost kink z == v*(zhat) == zhat
            for (int k = 0; k < 2; ++k)
                if (std::abs(z[k] - zhat[k]) < 0.05) z[k] += 0.1;
            auto composed = [&](const Vec& zh) {
                const Decision d = decide_point(cs, space, zh);
                return cost(cs, d.v, z);
            };
            const Vec sens = argmin_grad(cs, space, zhat);
            const Decision d = decide_point(cs, space, zhat);
            Vec analytic = subgrad_v(cs, d.v, z);
            for (int k = 0; k < 2; ++k) analytic[k] *= sens[k];
            const Vec fd = testing::fd_gradient(composed, zhat, 1e-6);
            REQUIRE(testing::grad_rel_error(analytic, fd) < 1e-4);
        }
    }
}

TEST_CASE("conditional model mask invariance") {
    InfoTrainConfig cfg;
    cfg.epochs = 5;
    cfg.hidden = 6;
    const Dataset train = twin_world_data(40, 1);
    const auto pipe = make_twin_pipeline(train, cfg);

    const Vec x{1.0};
    Vec z{1.0, 2.0};
    const Vec mask{1.0, 0.0};
    const Vec out1 = pipe.p.predict(x, z, mask);
    z[1] = -99.0; // unobserved coordinate
    const Vec out2 = pipe.p.predict(x, z, mask);
    REQUIRE(out1 == out2);
}

TEST_CASE("train_p reaches the full-information cost in a revealing world") {
    InfoTrainConfig cfg;
    cfg.lr = 0.05;
    cfg.epochs = 250;
    cfg.hidden = 0; // linear suffices: the mapping is linear
    cfg.seed = 5;
    const Dataset train = twin_world_data(150, 2);
    const Dataset test = twin_world_data(60, 3);
    const auto pipe = make_twin_pipeline(train, cfg);

    // full information optimum of the newsvendor: order exactly z
    double pipeline_cost = 0.0, full_info = 0.0;
    for (std::size_t i = 0; i < test.size(); ++i) {
        const Record& rec = test[i];
        pipeline_cost += pipe.realized_cost(static_cast<int>(i % 2), rec.x, rec.z);
        full_info += cost(pipe.cost_spec, rec.z, rec.z);
    }
    REQUIRE(pipeline_cost <= 1.05 * full_info);
    REQUIRE(pipeline_cost >= full_info - 1e-9); // cannot beat full information
}

TEST_CASE("truth-revealing identity p attains the per-record minimum") {
    const Dataset data = twin_world_data(30, 7);
    InfoPipeline pipe;
    pipe.cost_spec = CostSpec::newsvendor_cost(0.3);
    pipe.space = DecisionSpace::box(Vec{0.0, 0.0}, Vec{5.0, 5.0});
    pipe.polls = PollSpace::coordinates(2);
    pipe.p = identity_p_twin();
    double total = 0.0, optimum = 0.0;
    for (const Record& rec : data) {
        total += pipe.realized_cost(0, rec.x, rec.z); // observe z1
        optimum += cost(pipe.cost_spec, rec.z, rec.z); // min_v c(v, z)
    }
    REQUIRE_THAT(total, Catch::Matchers::WithinAbs(optimum, 1e-9));
}

TEST_CASE("train_f_endo: zero loss at a truthful initialization") {
    const Dataset data = twin_world_data(25, 9);
    InfoPipeline pipe;
    pipe.cost_spec = CostSpec::newsvendor_cost(0.3);
    pipe.space = DecisionSpace::box(Vec{0.0, 0.0}, Vec{5.0, 5.0});
    pipe.polls = PollSpace::coordinates(2);
    pipe.p = identity_p_twin();

    // f(w, x) = (x, 2x): the exact truth, independent of w
    EndoForecaster f;
    f.polls = pipe.polls;
    f.d_x = 1;
    f.d_z = 2;
    f.core.arch = ModelSpec::Arch::linear;
    f.core.d_x = 1;
    f.core.d_v = 2;
    f.core.d_z = 2;
    f.params.theta.assign(f.core.param_count(), 0.0);
    const int din = 3;
    f.params.theta[0 * din + 0] = 1.0;
    f.params.theta[1 * din + 0] = 2.0;
    pipe.f = f;

    // identity p reveals the truth only under poll 0; restrict to it
    InfoPipeline poll0 = pipe;
    poll0.polls.indices = {0};
    const double obj0 = [&] {
        double total = 0.0;
        for (std::size_t n = 0; n < data.size(); ++n)
            total += [&](const Record& rec) {
                InfoPipeline& pp = poll0;
                const Vec fx = pp.f.predict(0, rec.x);
                const Vec mask = pp.mask_for(0);
                const Vec zhat_pred = pp.p.predict(rec.x, fx, mask);
                const Decision dp = decide_point(pp.cost_spec, pp.space, zhat_pred);
                const double a = cost(pp.cost_spec, dp.v, fx);
                const Vec zhat_real = pp.p.predict(rec.x, rec.z, mask);
                const Decision dr = decide_point(pp.cost_spec, pp.space, zhat_real);
                const double b = cost(pp.cost_spec, dr.v, rec.z);
                return (a - b) * (a - b);
            }(data[n]);
        return total;
    }();
    REQUIRE_THAT(obj0, Catch::Matchers::WithinAbs(0.0, 1e-18));
}

TEST_CASE("train_f_endo: descent contract and gradient check") {
    InfoTrainConfig pcfg;
    pcfg.lr = 0.05;
    pcfg.epochs = 120;
    pcfg.hidden = 0;
    pcfg.seed = 11;
    const Dataset train = correlated_pair_data(120, 0.3, 4);
    InfoPipeline pipe;
    pipe.cost_spec = CostSpec::newsvendor_cost(0.3);
    pipe.space = DecisionSpace::box(Vec{0.0, 0.0}, Vec{5.0, 5.0});
    pipe.polls = PollSpace::coordinates(2);
    pipe.p = train_p(pipe.cost_spec, pipe.space, train, pipe.polls, pcfg);

    InfoTrainConfig fcfg = pcfg;
    fcfg.epochs = 80;
    fcfg.hidden = 0;
    const EndoForecaster f = train_f_endo(pipe, train, fcfg);
    pipe.f = f;

    // descent contract: the trained objective never exceeds a fresh init
    EndoForecaster fresh = f;
    Rng rng(fcfg.seed ^ 0xF00DULL);
    fresh.params = init_params(fresh.core, rng);
    REQUIRE(detail::f_endo_objective(pipe, f, train) <=
            detail::f_endo_objective(pipe, fresh, train) + 1e-12);

    // finite-difference check of the composite gradient at fixed w
    const Record& rec = train[3];
    Vec analytic(f.params.theta.size(), 0.0);
    EndoForecaster probe = f;
    detail::f_endo_record_loss(pipe, probe, 0, rec, &analytic);
    const Vec fd = testing::fd_gradient(
        [&](const Vec& th) {
            EndoForecaster g = f;
            g.params.theta = th;
            return detail::f_endo_record_loss(pipe, g, 0, rec, nullptr);
        },
        f.params.theta, 1e-6);
    REQUIRE(testing::grad_rel_error(analytic, fd) < 1e-4);
}

TEST_CASE("decide_poll prefers the informative coordinate") {
    InfoTrainConfig cfg;
    cfg.lr = 0.05;
    cfg.epochs = 200;
    cfg.hidden = 0;
    cfg.seed = 13;
    const Dataset train = correlated_pair_data(250, 0.5, 6);
    const Dataset test = correlated_pair_data(120, 0.5, 60);
    InfoPipeline pipe;
    pipe.cost_spec = CostSpec::newsvendor_cost(0.3);
    pipe.space = DecisionSpace::box(Vec{0.0, 0.0}, Vec{5.0, 5.0});
    pipe.polls = PollSpace::coordinates(2);
    pipe.p = train_p(pipe.cost_spec, pipe.space, train, pipe.polls, cfg);

    // Monte-Carlo ground truth: observing z1 must beat observing z2
    double mc0 = 0.0, mc1 = 0.0;
    for (const Record& rec : test) {
        mc0 += pipe.realized_cost(0, rec.x, rec.z);
        mc1 += pipe.realized_cost(1, rec.x, rec.z);
    }
    REQUIRE(mc0 < mc1);

    InfoTrainConfig fcfg = cfg;
    fcfg.epochs = 120;
    pipe.f = train_f_endo(pipe, train, fcfg);
    int chose0 = 0;
    for (const Record& rec : test)
        if (decide_poll(pipe, rec.x) == 0) ++chose0;
    REQUIRE(chose0 >= static_cast<int>(0.7 * test.size()));
}

TEST_CASE("decide_poll breaks ties toward the smallest index") {
    // symmetric world: z = (t, t); a symmetric f and p make both polls equal
    InfoPipeline pipe;
    pipe.cost_spec = CostSpec::newsvendor_cost(0.3);
    pipe.space = DecisionSpace::box(Vec{0.0, 0.0}, Vec{5.0, 5.0});
    pipe.polls = PollSpace::coordinates(2);
    // p: output = (obs, obs) from whichever coordinate is observed
    pipe.p.d_x = 1;
    pipe.p.d_z = 2;
    pipe.p.core.arch = ModelSpec::Arch::linear;
    pipe.p.core.d_x = 1;
    pipe.p.core.d_v = 4;
    pipe.p.core.d_z = 2;
    pipe.p.params.theta.assign(pipe.p.core.param_count(), 0.0);
    const int din = 5;
    for (int out = 0; out < 2; ++out) {
        pipe.p.params.theta[out * din + 1] = 1.0; // + zm1
        pipe.p.params.theta[out * din + 2] = 1.0; // + zm2
    }
    // f(w, x) = (x, x) regardless of w
    pipe.f.polls = pipe.polls;
    pipe.f.d_x = 1;
    pipe.f.d_z = 2;
    pipe.f.core.arch = ModelSpec::Arch::linear;
    pipe.f.core.d_x = 1;
    pipe.f.core.d_v = 2;
    pipe.f.core.d_z = 2;
    pipe.f.params.theta.assign(pipe.f.core.param_count(), 0.0);
    pipe.f.params.theta[0 * 3 + 0] = 1.0;
    pipe.f.params.theta[1 * 3 + 0] = 1.0;

    REQUIRE(decide_poll(pipe, Vec{1.2}) == 0);
}

TEST_CASE("baseline poll policies") {
    InfoTrainConfig cfg;
    cfg.lr = 0.05;
    cfg.epochs = 150;
    cfg.hidden = 0;
    cfg.seed = 17;
    const Dataset train = correlated_pair_data(150, 0.4, 8);
    InfoPipeline pipe;
    pipe.cost_spec = CostSpec::newsvendor_cost(0.3);
    pipe.space = DecisionSpace::box(Vec{0.0, 0.0}, Vec{5.0, 5.0});
    pipe.polls = PollSpace::coordinates(2);
    pipe.p = train_p(pipe.cost_spec, pipe.space, train, pipe.polls, cfg);

    SECTION("single-element poll space: all policies coincide") {
        InfoPipeline solo = pipe;
        solo.polls.indices = {1};
        const auto rnd = poll_random(solo.polls);
        const auto single = poll_single_best(solo, train);
        const auto oracle = poll_optimal_oracle(solo);
        Rng rng(1);
        const Vec x{0.5};
        const Vec z{1.0, 1.1};
        REQUIRE(rnd.choose(x, nullptr, rng) == 0);
        REQUIRE(single.choose(x, nullptr, rng) == 0);
        REQUIRE(oracle.choose(x, &z, rng) == 0);
    }
    SECTION("random averages no better than single best on training data") {
        const auto rnd = poll_random(pipe.polls);
        const auto single = poll_single_best(pipe, train);
        Rng rng(2);
        double rnd_cost = 0.0, single_cost = 0.0;
        for (const Record& rec : train) {
            rnd_cost += pipe.realized_cost(rnd.choose(rec.x, nullptr, rng), rec.x, rec.z);
            single_cost +=
                pipe.realized_cost(single.choose(rec.x, nullptr, rng), rec.x, rec.z);
        }
        REQUIRE(single_cost <= rnd_cost + 1e-9);
    }
    SECTION("oracle requires the realized z") {
        const auto oracle = poll_optimal_oracle(pipe);
        Rng rng(3);
        REQUIRE_THROWS_AS(oracle.choose(Vec{0.5}, nullptr, rng),
                          std::invalid_argument);
    }
    SECTION("cost learner matches the oracle in a deterministic world") {
        const Dataset det = twin_world_data(80, 10);
        InfoTrainConfig dcfg = cfg;
        dcfg.epochs = 300;
        dcfg.hidden = 0;
        InfoPipeline dpipe;
        dpipe.cost_spec = CostSpec::newsvendor_cost(0.3);
        dpipe.space = DecisionSpace::box(Vec{0.0, 0.0}, Vec{5.0, 5.0});
        dpipe.polls = PollSpace::coordinates(2);
        dpipe.p = train_p(dpipe.cost_spec, dpipe.space, det, dpipe.polls, dcfg);
        InfoTrainConfig ccfg = dcfg;
        ccfg.hidden = 8; // cost shapes are mildly nonlinear in x
        ccfg.epochs = 400;
        const auto learner = poll_cost_learner(dpipe, det, ccfg);
        const auto oracle = poll_optimal_oracle(dpipe);
        Rng rng(4);
        int agree = 0;
        for (const Record& rec : det) {
            const int a = learner.choose(rec.x, nullptr, rng);
            const int b = oracle.choose(rec.x, &rec.z, rng);
            // agreement counts equal realized cost, not just equal index
            const double ca = dpipe.realized_cost(a, rec.x, rec.z);
            const double cb = dpipe.realized_cost(b, rec.x, rec.z);
            if (ca <= cb + 1e-6) ++agree;
        }
        REQUIRE(agree >= static_cast<int>(0.9 * det.size()));
    }
}

TEST_CASE("information monotonicity in a deterministic world") {
    InfoTrainConfig cfg;
    cfg.lr = 0.05;
    cfg.epochs = 300;
    cfg.hidden = 0;
    cfg.seed = 19;
    const Dataset train = twin_world_data(120, 11);
    const Dataset test = twin_world_data(40, 12);
    const auto pipe = make_twin_pipeline(train, cfg);

    for (const Record& rec : test) {
        const double with_obs = pipe.realized_cost(0, rec.x, rec.z);
        // "no observation": all-zero mask
        const Vec none(2, 0.0);
        const Vec zhat = pipe.p.predict(rec.x, rec.z, none);
        const Decision d = decide_point(pipe.cost_spec, pipe.space, zhat);
        const double without = cost(pipe.cost_spec, d.v, rec.z);
        REQUIRE(with_obs <= without + 1e-4 * (1.0 + std::abs(without)));
    }
}
