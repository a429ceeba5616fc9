#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "endo/exact.hpp"
#include "exact_oracle.hpp"

using namespace endo;

namespace {

Dataset tiny_newsvendor_data(int n, Rng& rng) {
    Dataset ds({0, 1, 1});
    for (int i = 0; i < n; ++i) {
        Record r;
        r.v = {rng.uniform(0.2, 1.8)};
        r.z = {rng.uniform(0.0, 2.0)};
        ds.push(r);
    }
    return ds;
}

ModelSpec v_only_linear() {
    ModelSpec s;
    s.arch = ModelSpec::Arch::linear;
    s.d_x = 0;
    s.d_v = 1;
    s.d_z = 1;
    return s;
}

} // namespace

TEST_CASE("build_miqp: variable and constraint counts") {
    Rng rng(1);
    SECTION("single item, single record") {
        const Dataset ds = tiny_newsvendor_data(1, rng);
        const auto inst =
            build_miqp(CostSpec::newsvendor_cost(0.3), ds, v_only_linear(), 1.0);
        REQUIRE(inst.meta["binaries"] == 2); // two pieces, one (n,k) cell
        REQUIRE(inst.n_records * inst.n_coords == 1);
        REQUIRE(inst.theta_dim == 2);
    }
    SECTION("two records, two pieces each") {
        const Dataset ds = tiny_newsvendor_data(2, rng);
        const auto inst =
            build_miqp(CostSpec::newsvendor_cost(0.3), ds, v_only_linear(), 1.0);
        REQUIRE(inst.meta["binaries"] == 4);
        // one pick-exactly-one constraint per (n, k) cell
        REQUIRE(inst.n_records * inst.n_coords == 2);
    }
    SECTION("unsupported inputs") {
        const Dataset ds = tiny_newsvendor_data(2, rng);
        REQUIRE_THROWS_AS(build_miqp(CostSpec::pricing(), ds, v_only_linear(), 1.0),
                          std::invalid_argument);
        ModelSpec mlp = v_only_linear();
        mlp.arch = ModelSpec::Arch::mlp1;
        mlp.hidden = 3;
        REQUIRE_THROWS_AS(
            build_miqp(CostSpec::newsvendor_cost(0.3), ds, mlp, 1.0),
            std::invalid_argument);
    }
}

TEST_CASE("instance objective equals the task loss") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const testing::MiqpCase c = testing::make_random_miqp_case(rng);
        const auto inst = build_miqp(c.cost_spec, c.data, c.model, c.norm_bound);
        Vec theta(inst.theta_dim);
        for (auto& t : theta) t = rng.uniform(-c.norm_bound, c.norm_bound);
        const double got = inst.objective(theta);
        const double want = testing::true_objective(c, theta);
        REQUIRE_THAT(got, Catch::Matchers::WithinAbs(want, 1e-12 * (1.0 + want)));
    }
}

TEST_CASE("solver matches the enumeration + grid oracle") {
    Rng rng(7);
    for (int trial = 0; trial < 8; ++trial) {
        const testing::MiqpCase c = testing::make_random_miqp_case(rng);
        const auto inst = build_miqp(c.cost_spec, c.data, c.model, c.norm_bound);
        const MIQPSolution sol = solve_miqp(inst, 1e-6, 30.0);
        const double oracle = testing::miqp_brute_force(c, inst);
        INFO("trial " << trial << " solver " << sol.objective << " oracle "
                      << oracle);
        REQUIRE(std::abs(sol.objective - oracle) <= 1e-3);
        // returned objective is consistent with the task loss of theta*
        REQUIRE_THAT(sol.objective,
                     Catch::Matchers::WithinAbs(
                         testing::true_objective(c, sol.theta.theta), 1e-6));
        REQUIRE(sol.lower_bound <= sol.objective + 1e-12);
    }
}

TEST_CASE("zero-loss datasets solve to zero") {
    // build data exactly reproducible by a linear model inside the ball
    ModelSpec spec = v_only_linear();
    const ModelParams truth{Vec{0.4, 0.3}};
    Dataset ds({0, 1, 1});
    Rng rng(5);
    for (int i = 0; i < 4; ++i) {
        Record r;
        r.v = {rng.uniform(0.0, 1.5)};
        r.z = forward(spec, truth, {}, r.v);
        ds.push(r);
    }
    const auto inst = build_miqp(CostSpec::newsvendor_cost(0.4), ds, spec, 2.0);
    const MIQPSolution sol = solve_miqp(inst, 1e-8, 30.0);
    REQUIRE(sol.objective <= 1e-7); // zero up to solver tolerance
    REQUIRE(sol.lower_bound <= sol.objective);
    REQUIRE(sol.status == MIQPSolution::Status::optimal);
}

TEST_CASE("exact solver never loses to the sampling heuristic") {
    Rng rng(11);
    for (int trial = 0; trial < 3; ++trial) {
        const testing::MiqpCase c = testing::make_random_miqp_case(rng);
        const auto inst = build_miqp(c.cost_spec, c.data, c.model, c.norm_bound);
        const MIQPSolution sol = solve_miqp(inst, 1e-6, 30.0);

        TrainConfig cfg;
        cfg.lr = 0.05;
        cfg.epochs = 200;
        cfg.samples = 4;
        cfg.seed = trial;
        ModelSpec bounded = c.model;
        bounded.norm_bound = c.norm_bound;
        const TrainedModel heur = train_e2e_sampled(bounded, c.cost_spec, c.data, cfg);
        REQUIRE(sol.objective <= heur.final_task_loss + 1e-6);
    }
}

TEST_CASE("optimal objective is monotone in nested datasets") {
    Rng rng(13);
    Dataset full = tiny_newsvendor_data(4, rng);
    const ModelSpec spec = v_only_linear();
    const auto cs = CostSpec::newsvendor_cost(0.35);
    double prev = 0.0;
    for (std::size_t n = 2; n <= full.size(); ++n) {
        const Dataset sub = full.prefix(n);
        const auto inst = build_miqp(cs, sub, spec, 1.5);
        const MIQPSolution sol = solve_miqp(inst, 1e-8, 30.0);
        REQUIRE(sol.objective >= prev - 1e-6);
        prev = sol.objective;
    }
}

TEST_CASE("big-M validity") {
    Rng rng(17);
    for (int trial = 0; trial < 10; ++trial) {
        const testing::MiqpCase c = testing::make_random_miqp_case(rng);
        const auto inst = build_miqp(c.cost_spec, c.data, c.model, c.norm_bound);
        // the default M covers the certified worst-case piece spread
        REQUIRE(inst.big_m >= inst.meta["m_required"].get<double>());
        // doubling M leaves the optimal assignment and objective unchanged
        const auto inst2 = build_miqp(c.cost_spec, c.data, c.model, c.norm_bound,
                                      2.0 * inst.big_m);
        const MIQPSolution a = solve_miqp(inst, 1e-8, 30.0);
        const MIQPSolution b = solve_miqp(inst2, 1e-8, 30.0);
        REQUIRE_THAT(a.objective, Catch::Matchers::WithinAbs(b.objective, 1e-6));
        REQUIRE(a.y == b.y);
    }
}

TEST_CASE("lp export") {
    Rng rng(19);
    const Dataset ds = tiny_newsvendor_data(2, rng);
    const auto inst =
        build_miqp(CostSpec::newsvendor_cost(0.3), ds, v_only_linear(), 1.0);
    const std::string path = "miqp_export_test.lp";
    export_lp(inst, path);
    std::ifstream in(path);
    REQUIRE(in.good());
    std::stringstream buffer;
    buffer << in.rdbuf();
    const std::string text = buffer.str();
    REQUIRE(text.find("Minimize") != std::string::npos);
    REQUIRE(text.find("Binary") != std::string::npos);
    REQUIRE(text.find("y_1_0_1") != std::string::npos);
    REQUIRE(text.find("ball:") != std::string::npos);
    REQUIRE(text.find("End") != std::string::npos);
    // one pick constraint per (n, k)
    std::size_t picks = 0, pos = 0;
    while ((pos = text.find("pick", pos)) != std::string::npos) {
        ++picks;
        pos += 4;
    }
    REQUIRE(picks == 2);
    std::remove(path.c_str());
}
