#include "sdelab/experiment.hpp"
#include "sdelab/kernels.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <exception>
#include <string>

int main(int argc, char** argv) {
    CLI::App app{"simulation laboratory for stochastic-gradient dynamics and their diffusion surrogates"};
    app.require_subcommand(1);

    std::string config_path, out_dir, kernels_name;
    std::uint64_t seed = 0;
    unsigned threads = 1;
    bool overwrite = false;

    CLI::App* run = app.add_subcommand("run", "run one experiment from a JSON config");
    run->add_option("--config", config_path, "experiment config file (JSON)")
        ->required()
        ->check(CLI::ExistingFile);
    run->add_option("--out", out_dir, "output directory for artifacts")->required();
    CLI::Option* seed_opt =
        run->add_option("--seed", seed, "override the seed recorded in the config");
    run->add_option("--threads", threads, "worker threads (results are thread-count invariant)")
        ->check(CLI::Range(1u, 1024u));
    run->add_flag("--overwrite", overwrite, "allow writing into a nonempty output directory");
    run->add_option("--kernels", kernels_name, "force a compute backend (scalar or avx2)");

    CLI::App* validate = app.add_subcommand("validate", "check a config file and report problems");
    validate->add_option("--config", config_path, "experiment config file (JSON)")->required();

    app.add_subcommand("list-experiments", "list the supported experiment kinds");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            if (!kernels_name.empty() && !sdelab::kernels::set_backend(kernels_name)) {
                std::fprintf(stderr, "error: kernels backend '%s' is not available on this machine\n",
                             kernels_name.c_str());
                return 1;
            }
            sdelab::RunOptions opt;
            opt.config_path = config_path;
            opt.out_dir = out_dir;
            if (seed_opt->count() > 0) opt.seed_override = seed;
            opt.threads = threads;
            opt.overwrite = overwrite;
            const sdelab::RunResult result = sdelab::run_experiment(opt);
            for (const auto& f : result.files) std::printf("wrote %s\n", f.c_str());
            std::printf("%s\n", result.summary.c_str());
            if (result.exit_code == 2)
                std::printf("requested certified failure observed; exiting with status 2\n");
            return result.exit_code;
        }
        if (validate->parsed()) {
            const auto problems = sdelab::validate_config_file(config_path);
            if (problems.empty()) {
                std::printf("ok: %s\n", config_path.c_str());
                return 0;
            }
            for (const auto& line : problems) std::printf("%s\n", line.c_str());
            return 1;
        }
        for (const auto& [kind, description] : sdelab::list_experiments())
            std::printf("%-16s %s\n", kind.c_str(), description.c_str());
        return 0;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
