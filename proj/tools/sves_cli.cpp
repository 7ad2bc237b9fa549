// Command-line front end: single runs, multi-seed benches, hyperparameter
// grids, ground-truth cache generation, and the invariant self-check.
//
// Exit codes: 0 success, 2 configuration error, 3 runtime failure.

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "sves/check.hpp"
#include "sves/harness.hpp"

namespace {

struct CommonFlags {
    std::string config_path;
    std::string preset;
    std::map<std::string, std::string> overrides;
};

void add_override_flags(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config_path, "JSON config file");
    cmd->add_option("--preset", flags.preset, "named preset task/method, e.g. gmm/svcmaes");
    auto opt = [&flags, cmd](const std::string& flag, const std::string& key) {
        cmd->add_option_function<std::string>(
            flag, [&flags, key](const std::string& v) { flags.overrides[key] = v; });
    };
    opt("--task", "task");
    opt("--method", "method");
    opt("--n-particles", "n_particles");
    opt("--subpop-size", "subpop_size");
    opt("--iterations", "iterations");
    opt("--seed", "seed");
    opt("--out", "out_csv");
    opt("--dump-samples", "dump_samples");
    opt("--h", "h");
    opt("--lr", "lr");
    opt("--elite", "elite");
    opt("--sigma-init", "sigma_init");
    opt("--prior-var", "prior_var");
    opt("--zeta", "zeta");
    opt("--schedule", "schedule");
    opt("--gamma-const", "gamma_const");
    opt("--init-scale", "init_scale");
    opt("--dim", "dim");
    opt("--batch-size", "batch_size");
    opt("--n-rollouts", "n_rollouts");
    opt("--dataset", "dataset_path");
    opt("--gt-seed", "gt_seed");
    opt("--gt-burnin", "gt_burnin");
    opt("--gt-cache-dir", "gt_cache_dir");
    opt("--metric-every", "metric_every");
    opt("--threads", "threads");
}

nlohmann::json coerce(const std::string& key, const std::string& value) {
    static const std::set<std::string> strings = {"task",     "method",       "schedule",
                                                  "out_csv",  "dump_samples", "dataset_path",
                                                  "gt_cache_dir"};
    if (strings.count(key)) return value;
    try {
        if (value.find_first_of(".eE") != std::string::npos) return std::stod(value);
        return static_cast<std::int64_t>(std::stoll(value));
    } catch (...) {
        throw sves::ConfigError("cannot parse value for --" + key + ": " + value);
    }
}

sves::RunConfig resolve_config(const CommonFlags& flags) {
    nlohmann::json j = nlohmann::json::object();
    if (!flags.config_path.empty()) {
        std::ifstream in(flags.config_path);
        if (!in) throw sves::ConfigError("cannot open config file: " + flags.config_path);
        in >> j;
    }
    if (!flags.preset.empty()) j["preset"] = flags.preset;
    for (const auto& [key, value] : flags.overrides) j[key] = coerce(key, value);
    sves::RunConfig cfg = sves::config_from_json(j);
    sves::validate_config(cfg);
    return cfg;
}

int run_sample(const CommonFlags& flags) {
    sves::RunConfig cfg = resolve_config(flags);
    const auto records = sves::run_experiment(cfg);
    if (cfg.out_csv.empty()) {
        for (const auto& r : records)
            std::printf("%s,%s,%llu,%ld,%s,%s\n", r.method.c_str(), r.task.c_str(),
                        static_cast<unsigned long long>(r.seed), r.iteration, r.metric.c_str(),
                        sves::format_value(r.value).c_str());
    } else {
        std::fprintf(stderr, "wrote %zu records to %s\n", records.size(), cfg.out_csv.c_str());
    }
    return 0;
}

int run_bench(const CommonFlags& flags, const std::vector<std::string>& methods, int seeds) {
    sves::RunConfig base = resolve_config(flags);
    std::vector<sves::RunRecord> all;
    std::uint64_t budget = 0;
    bool have_budget = false;
    for (const auto& method : methods) {
        sves::RunConfig cfg = sves::make_preset(base.task + "/" + method);
        // Carry the shared experiment shape from the base config.
        cfg.task = base.task;
        cfg.iterations = base.iterations;
        cfg.metric_every = base.metric_every;
        cfg.threads = base.threads;
        cfg.gt_cache_dir = base.gt_cache_dir;
        cfg.gt_seed = base.gt_seed;
        cfg.gt_burnin = base.gt_burnin;
        cfg.dataset_path = base.dataset_path;
        sves::validate_config(cfg);
        const std::uint64_t b = sves::evals_per_generation(cfg);
        if (have_budget && b != budget)
            throw sves::ConfigError("bench: method " + method +
                                    " breaks the equal-budget rule (" + std::to_string(b) +
                                    " vs " + std::to_string(budget) + " evals/gen)");
        budget = b;
        have_budget = true;
        for (int s = 0; s < seeds; ++s) {
            sves::RunConfig run = cfg;
            run.seed = base.seed + static_cast<std::uint64_t>(s);
            run.out_csv.clear();
            auto records = sves::run_experiment(run);
            all.insert(all.end(), records.begin(), records.end());
        }
    }
    if (base.out_csv.empty()) throw sves::ConfigError("bench requires --out");
    sves::emit_csv(all, base.out_csv);
    std::fprintf(stderr, "wrote %zu records to %s\n", all.size(), base.out_csv.c_str());
    return 0;
}

int run_grid(const CommonFlags& flags, const std::vector<std::string>& params,
             const std::string& metric, int seeds, const std::string& report_path) {
    sves::RunConfig base = resolve_config(flags);
    std::map<std::string, std::vector<double>> grid;
    for (const auto& spec : params) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos)
            throw sves::ConfigError("grid param must be name=v1,v2,...: " + spec);
        std::vector<double> values;
        std::stringstream ss(spec.substr(eq + 1));
        std::string item;
        while (std::getline(ss, item, ',')) values.push_back(std::stod(item));
        grid[spec.substr(0, eq)] = values;
    }
    const auto result = sves::grid_search(base, grid, metric, seeds);

    std::printf("best config:\n");
    std::printf("  task=%s method=%s h=%g lr=%g elite=%d sigma_init=%g prior_var=%g zeta=%g\n",
                result.best.task.c_str(), result.best.method.c_str(), result.best.h,
                result.best.lr, result.best.elite, result.best.sigma_init,
                result.best.prior_var, result.best.zeta);
    if (!report_path.empty()) {
        std::ofstream out(report_path, std::ios::binary);
        out << "cell,seed,";
        for (const auto& [name, values] : grid) {
            (void)values;
            out << name << ',';
        }
        out << metric << "\n";
        int cell_idx = 0;
        for (const auto& cell : result.cells) {
            for (std::size_t s = 0; s < cell.per_seed.size(); ++s) {
                out << cell_idx << ',' << (base.seed + s) << ',';
                for (const auto& [name, value] : cell.assignment) {
                    (void)name;
                    out << sves::format_value(value) << ',';
                }
                out << sves::format_value(cell.per_seed[s]) << "\n";
            }
            ++cell_idx;
        }
        std::fprintf(stderr, "wrote grid report to %s\n", report_path.c_str());
    }
    return 0;
}

int run_gt(const CommonFlags& flags) {
    sves::RunConfig cfg = resolve_config(flags);
    if (!sves::is_sampling_task(cfg.task))
        throw sves::ConfigError("gt: task must be a sampling task");
    const auto set = sves::ensure_ground_truth(cfg);
    std::printf("cached %ld ground-truth samples for %s at %s\n",
                static_cast<long>(set.samples.rows()), cfg.task.c_str(),
                sves::gt_cache_path(cfg).string().c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Stein Variational Evolution Strategies experiment harness"};
    app.require_subcommand(1);

    CommonFlags sample_flags, bench_flags, grid_flags, gt_flags;

    auto* sample = app.add_subcommand("sample", "run one configured experiment");
    add_override_flags(sample, sample_flags);

    auto* bench = app.add_subcommand("bench", "run a method suite over seeds at equal budget");
    add_override_flags(bench, bench_flags);
    std::vector<std::string> bench_methods = {"svcmaes", "svopenes", "gfsvgd"};
    int bench_seeds = 10;
    bench->add_option("--methods", bench_methods, "methods to compare");
    bench->add_option("--seeds", bench_seeds, "number of seeds per method");

    auto* grid = app.add_subcommand("grid", "hyperparameter grid search");
    add_override_flags(grid, grid_flags);
    std::vector<std::string> grid_params;
    std::string grid_metric = "mmd2";
    std::string grid_report;
    int grid_seeds = 1;
    grid->add_option("--param", grid_params, "grid values, e.g. h=0.1,0.5,1.0")->required();
    grid->add_option("--metric", grid_metric, "selection metric");
    grid->add_option("--seeds", grid_seeds, "seeds per cell");
    grid->add_option("--report", grid_report, "per-cell report CSV");

    auto* gt = app.add_subcommand("gt", "generate and cache ground-truth samples");
    add_override_flags(gt, gt_flags);

    auto* chk = app.add_subcommand("check", "run the invariant self-check suite");
    (void)chk;

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (sample->parsed()) return run_sample(sample_flags);
        if (bench->parsed()) return run_bench(bench_flags, bench_methods, bench_seeds);
        if (grid->parsed())
            return run_grid(grid_flags, grid_params, grid_metric, grid_seeds, grid_report);
        if (gt->parsed()) return run_gt(gt_flags);
        if (chk->parsed()) return sves::print_check_report(sves::run_invariant_checks()) ? 0 : 3;
    } catch (const sves::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "runtime failure: %s\n", e.what());
        return 3;
    }
    return 0;
}
