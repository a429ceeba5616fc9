// Command-line surface. Subcommands are filled in as modules land.

#include <CLI11.hpp>

#include <iostream>

#include "endo/core.hpp"
#include "endo/scenarios.hpp"

int main(int argc, char** argv) {
    CLI::App app{"end-to-end learning and robust decision-making toolkit"};
    app.require_subcommand(1);
    int exit_code = 0;

    std::uint64_t seed = 0;
    app.add_option("--seed", seed, "global seed");

    auto* gen = app.add_subcommand("generate", "sample a synthetic dataset");
    std::string gen_scenario = "pricing", gen_params = "{}", gen_out = "data.csv";
    int gen_n = 100;
    gen->add_option("--scenario", gen_scenario, "scenario kind");
    gen->add_option("--params", gen_params, "scenario params JSON");
    gen->add_option("--n", gen_n, "number of records");
    gen->add_option("--out", gen_out, "output CSV path");
    gen->callback([&]() {
        const auto sc = endo::make_scenario(gen_scenario,
                                            endo::json::parse(gen_params), seed);
        const auto ds = endo::generate_dataset(sc, gen_n, seed);
        endo::write_dataset_csv(ds, gen_out, sc.params, seed);
        std::cout << "wrote " << ds.size() << " records to " << gen_out << "\n";
    });

    CLI11_PARSE(app, argc, argv);
    return exit_code;
}
