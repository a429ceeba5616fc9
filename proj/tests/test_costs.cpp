#include <catch2/catch_amalgamated.hpp>

#include "endo/costs.hpp"
#include "endo/rng.hpp"
#include "test_helpers.hpp"

using namespace endo;

TEST_CASE("cost values match the formulas") {
    REQUIRE(cost(CostSpec::newsvendor_cost(0.5), Vec{1.0}, Vec{2.0}) == 1.5);
    REQUIRE(cost(CostSpec::scheduling_cost(1.0, 0.5), Vec{2.0}, Vec{1.0}) == 0.5);
    REQUIRE(cost(CostSpec::pricing(), Vec{2.0, 1.0}, Vec{3.0, 4.0}) == -10.0);
}

TEST_CASE("partial scheduling only counts the tail") {
    const auto full = CostSpec::scheduling_cost(2.0, 1.0);
    const auto tail = CostSpec::partial_scheduling_cost(2.0, 1.0, 2);
    const Vec v{1.0, 1.0, 1.0, 1.0}, z{2.0, 2.0, 2.0, 2.0};
    REQUIRE(cost(full, v, z) == 8.0);
    REQUIRE(cost(tail, v, z) == 4.0);
    const auto window = CostSpec::partial_scheduling_cost(2.0, 1.0, 1, 3);
    REQUIRE(cost(window, v, z) == 4.0);
    // out-of-range from_index simply evaluates to empty sum
    const auto beyond = CostSpec::partial_scheduling_cost(2.0, 1.0, 10);
    REQUIRE(cost(beyond, v, z) == 0.0);
}

TEST_CASE("subgradients: active pieces and kink convention") {
    const auto nv = CostSpec::newsvendor_cost(0.3);
    SECTION("strict shortage") {
        const Vec gz = subgrad_z(nv, Vec{1.0}, Vec{2.0});
        const Vec gv = subgrad_v(nv, Vec{1.0}, Vec{2.0});
        REQUIRE(gz[0] == 1.0);
        REQUIRE(gv[0] == -1.0 + 0.3);
    }
    SECTION("kink takes the no-shortage piece") {
        const Vec gz = subgrad_z(nv, Vec{1.0}, Vec{1.0});
        const Vec gv = subgrad_v(nv, Vec{1.0}, Vec{1.0});
        REQUIRE(gz[0] == 0.0);
        REQUIRE(gv[0] == 0.3);
    }
    SECTION("pricing is exact everywhere") {
        const Vec gz = subgrad_z(CostSpec::pricing(), Vec{2.0, 1.0}, Vec{9.0, 9.0});
        REQUIRE(gz == Vec{-2.0, -1.0});
    }
}

TEST_CASE("finite-difference agreement away from kinks") {
    Rng rng(3);
    const std::vector<CostSpec> specs{CostSpec::pricing(),
                                      CostSpec::newsvendor_cost(0.4),
                                      CostSpec::scheduling_cost(1.5, 0.7)};
    for (const auto& spec : specs) {
        for (int trial = 0; trial < 40; ++trial) {
            Vec v(3), z(3);
            for (int k = 0; k < 3; ++k) {
                v[k] = rng.uniform(0.0, 2.0);
                // keep z away from the kink at v
                double d = rng.uniform(0.05, 1.0);
                z[k] = rng.uniform() < 0.5 ? v[k] + d : v[k] - d;
            }
            const Vec gz = subgrad_z(spec, v, z);
            const Vec fdz = testing::fd_gradient(
                [&](const Vec& zz) { return cost(spec, v, zz); }, z, 1e-6);
            REQUIRE(testing::grad_rel_error(gz, fdz) < 1e-6);
            const Vec gv = subgrad_v(spec, v, z);
            const Vec fdv = testing::fd_gradient(
                [&](const Vec& vv) { return cost(spec, vv, z); }, v, 1e-6);
            REQUIRE(testing::grad_rel_error(gv, fdv) < 1e-6);
        }
    }
}

TEST_CASE("pwl decomposition reproduces the cost bit-exactly") {
    Rng rng(11);
    const std::vector<CostSpec> specs{CostSpec::newsvendor_cost(0.25),
                                      CostSpec::scheduling_cost(2.0, 0.5),
                                      CostSpec::partial_scheduling_cost(1.0, 1.0, 1)};
    for (const auto& spec : specs) {
        const PWLDecomposition pwl = pwl_decompose(spec, 4);
        for (int trial = 0; trial < 1000; ++trial) {
            Vec v(4), z(4);
            for (int k = 0; k < 4; ++k) {
                v[k] = rng.uniform(-3.0, 3.0);
                z[k] = rng.uniform(-3.0, 3.0);
            }
            REQUIRE(pwl.eval(v, z) == cost(spec, v, z));
        }
    }
}

TEST_CASE("pwl decomposition shapes") {
    const PWLDecomposition nv = pwl_decompose(CostSpec::newsvendor_cost(0.2), 1);
    REQUIRE(nv.coords.size() == 1);
    REQUIRE(nv.coords[0].size() == 2);
    // pieces are {z - v + b v, b v}
    REQUIRE(nv.coords[0][0].az == 1.0);
    REQUIRE(nv.coords[0][0].bv == 0.2 - 1.0);
    REQUIRE(nv.coords[0][1].az == 0.0);
    REQUIRE(nv.coords[0][1].bv == 0.2);

    const PWLDecomposition sch = pwl_decompose(CostSpec::scheduling_cost(1.0, 0.5), 1);
    REQUIRE(sch.coords[0][0].az == 1.0);
    REQUIRE(sch.coords[0][0].bv == -1.0);
    REQUIRE(sch.coords[0][1].az == -0.5);
    REQUIRE(sch.coords[0][1].bv == 0.5);

    REQUIRE_THROWS_AS(pwl_decompose(CostSpec::pricing(), 2), std::invalid_argument);
}

TEST_CASE("convexity in z for fixed v") {
    Rng rng(13);
    const std::vector<CostSpec> specs{CostSpec::newsvendor_cost(0.35),
                                      CostSpec::scheduling_cost(1.2, 0.9)};
    for (const auto& spec : specs) {
        for (int trial = 0; trial < 200; ++trial) {
            Vec v(2), z1(2), z2(2);
            for (int k = 0; k < 2; ++k) {
                v[k] = rng.uniform(-1.0, 2.0);
                z1[k] = rng.uniform(-2.0, 3.0);
                z2[k] = rng.uniform(-2.0, 3.0);
            }
            const double a = rng.uniform();
            Vec mix(2);
            for (int k = 0; k < 2; ++k) mix[k] = a * z1[k] + (1 - a) * z2[k];
            REQUIRE(cost(spec, v, mix) <=
                    a * cost(spec, v, z1) + (1 - a) * cost(spec, v, z2) + 1e-12);
        }
    }
}

TEST_CASE("subgradient validity for convex kinds") {
    Rng rng(17);
    const std::vector<CostSpec> specs{CostSpec::newsvendor_cost(0.5),
                                      CostSpec::scheduling_cost(1.0, 1.0)};
    for (const auto& spec : specs) {
        for (int trial = 0; trial < 200; ++trial) {
            Vec v(2), z(2), z2(2);
            for (int k = 0; k < 2; ++k) {
                v[k] = rng.uniform(-1.0, 2.0);
                z[k] = rng.uniform(-2.0, 3.0);
                z2[k] = rng.uniform(-2.0, 3.0);
            }
            const Vec g = subgrad_z(spec, v, z);
            Vec diff = z2;
            axpy(-1.0, z, diff);
            REQUIRE(cost(spec, v, z2) >= cost(spec, v, z) + dot(g, diff) - 1e-12);
        }
    }
}

TEST_CASE("cost spec json round-trip") {
    for (const auto& spec :
         {CostSpec::pricing(), CostSpec::newsvendor_cost(0.3),
          CostSpec::scheduling_cost(2.0, 1.0),
          CostSpec::partial_scheduling_cost(2.0, 1.0, 5)}) {
        json j;
        to_json(j, spec);
        CostSpec back;
        from_json(j, back);
        REQUIRE(back.kind == spec.kind);
        const Vec v{1.0, 2.0, 0.5, 3.0, 1.5, 0.7}, z{0.5, 2.5, 0.5, 2.0, 2.0, 0.1};
        REQUIRE(cost(back, v, z) == cost(spec, v, z));
    }
    REQUIRE_THROWS_AS(CostSpec::newsvendor_cost(1.5), std::invalid_argument);
    REQUIRE_THROWS_AS(CostSpec::scheduling_cost(0.0, 1.0), std::invalid_argument);
}
