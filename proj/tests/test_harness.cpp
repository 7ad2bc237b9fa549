#include <catch2/catch_amalgamated.hpp>
#include <filesystem>
#include <fstream>

#include "sves/harness.hpp"

using namespace sves;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    const fs::path dir = fs::temp_directory_path() / "sves_harness_tests";
    fs::create_directories(dir);
    return dir;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

RunConfig small_gmm_run() {
    RunConfig cfg = make_preset("gmm/svcmaes");
    cfg.n_particles = 8;
    cfg.subpop_size = 4;
    cfg.iterations = 20;
    cfg.seed = 3;
    cfg.gt_cache_dir = (temp_dir() / "gt").string();
    return cfg;
}

}  // namespace

TEST_CASE("presets carry the published hyperparameter rows") {
    const RunConfig gmm = make_preset("gmm/svcmaes");
    REQUIRE(gmm.elite == 2);
    REQUIRE(gmm.h == 0.889);
    REQUIRE(gmm.sigma_init == 0.50);
    REQUIRE(gmm.n_particles == 100);
    REQUIRE(gmm.subpop_size == 4);
    REQUIRE(gmm.iterations == 1000);

    const RunConfig gf = make_preset("glass/gfsvgd");
    REQUIRE(gf.task == "logreg");
    REQUIRE(gf.prior_var == 4.45);
    REQUIRE(gf.lr == 0.1);
    REQUIRE(gf.h == 1.0);
    REQUIRE(gf.n_particles == 256);

    const RunConfig mc = make_preset("mountaincar/svcmaes");
    REQUIRE(mc.elite == 2);
    REQUIRE(mc.h == 30.0);
    REQUIRE(mc.sigma_init == 0.68);
    REQUIRE(mc.n_particles == 4);
    REQUIRE(mc.subpop_size == 16);
    REQUIRE(mc.schedule == "log_fade");

    const RunConfig oes = make_preset("pendulum/svopenes");
    REQUIRE(oes.zeta == 0.05);
    REQUIRE(oes.lr == 0.10);

    REQUIRE_THROWS_AS(make_preset("nonsense"), ConfigError);
}

TEST_CASE("json config round trip and rejection of unknown keys") {
    nlohmann::json j = {{"preset", "gmm/svcmaes"}, {"iterations", 7}, {"seed", 9}};
    const RunConfig cfg = config_from_json(j);
    REQUIRE(cfg.iterations == 7);
    REQUIRE(cfg.seed == 9);
    REQUIRE(cfg.h == 0.889);

    REQUIRE_THROWS_AS(config_from_json({{"mystery_knob", 1}}), ConfigError);
}

TEST_CASE("config validation rejects bad settings before compute") {
    RunConfig cfg;
    cfg.method = "warp_drive";
    REQUIRE_THROWS_AS(validate_config(cfg), ConfigError);
    cfg = RunConfig{};
    cfg.task = "unobtainium";
    REQUIRE_THROWS_AS(validate_config(cfg), ConfigError);
    cfg = RunConfig{};
    cfg.method = "svcmaes";
    cfg.elite = 99;
    cfg.subpop_size = 4;
    REQUIRE_THROWS_AS(validate_config(cfg), ConfigError);
    cfg = RunConfig{};
    cfg.task = "logreg";  // requires a dataset path
    REQUIRE_THROWS_AS(validate_config(cfg), ConfigError);
    cfg = RunConfig{};
    cfg.task = "pendulum";
    cfg.method = "svgd";  // no closed-form gradient on RL posteriors
    REQUIRE_THROWS_AS(validate_config(cfg), ConfigError);
}

TEST_CASE("every known method dispatches and budgets are computed") {
    REQUIRE(evals_per_generation(make_preset("gmm/svcmaes")) == 400);
    REQUIRE(evals_per_generation(make_preset("gmm/svgd")) == 400);
    REQUIRE(evals_per_generation(make_preset("gmm/gfsvgd")) == 400);
    RunConfig oes = make_preset("gmm/svopenes");
    REQUIRE(evals_per_generation(oes) == 400);
}

TEST_CASE("csv emission: header, ordering, digits, parse-back") {
    const fs::path path = temp_dir() / "records.csv";

    emit_csv({}, path.string());
    REQUIRE(read_file(path) == "method,task,seed,iteration,metric,value\n");

    std::vector<RunRecord> records = {
        {"svgd", "gmm", 2, 10, "mmd2", 1.0 / 3.0},
        {"svgd", "gmm", 1, 10, "mmd2", 0.25},
        {"svgd", "gmm", 1, 0, "mse_var", 2e-17},
        {"svgd", "gmm", 1, 0, "mmd2", 0.5},
    };
    emit_csv(records, path.string());
    const auto parsed = parse_csv(path.string());
    REQUIRE(parsed.size() == 4);
    REQUIRE(parsed[0].seed == 1);
    REQUIRE(parsed[0].iteration == 0);
    REQUIRE(parsed[0].metric == "mmd2");
    REQUIRE(parsed[1].metric == "mse_var");
    REQUIRE(parsed[2].seed == 1);
    REQUIRE(parsed[2].iteration == 10);
    REQUIRE(parsed[3].seed == 2);
    // 17 significant digits round-trip doubles exactly
    REQUIRE(parsed[3].value == 1.0 / 3.0);
    REQUIRE(parsed[1].value == 2e-17);
}

TEST_CASE("ground truth is generated once and reloaded from cache") {
    RunConfig cfg = small_gmm_run();
    fs::remove_all(cfg.gt_cache_dir);
    const SampleSet fresh = ensure_ground_truth(cfg);
    REQUIRE(fresh.samples.rows() == 256);
    REQUIRE(fs::exists(gt_cache_path(cfg)));
    const SampleSet cached = ensure_ground_truth(cfg);
    REQUIRE(cached.samples == fresh.samples);

    // JSONL schema: one record per sample with task, seed, x.
    std::ifstream in(gt_cache_path(cfg));
    std::string line;
    REQUIRE(std::getline(in, line));
    const auto j = nlohmann::json::parse(line);
    REQUIRE(j.at("task") == "gmm");
    REQUIRE(j.at("seed") == cfg.gt_seed);
    REQUIRE(j.at("x").size() == 2);
}

TEST_CASE("run_experiment emits the pinned metric cadence") {
    RunConfig cfg = small_gmm_run();
    cfg.iterations = 0;
    auto records = run_experiment(cfg);
    REQUIRE(!records.empty());
    for (const auto& r : records) REQUIRE(r.iteration == 0);

    cfg.iterations = 35;
    cfg.metric_every = 10;
    records = run_experiment(cfg);
    int mmd_count = 0;
    for (const auto& r : records)
        if (r.metric == "mmd2") ++mmd_count;
    REQUIRE(mmd_count == 4);  // iterations 0, 10, 20, 30
}

TEST_CASE("identical configs give byte-identical csv across thread counts") {
    RunConfig cfg = small_gmm_run();
    cfg.out_csv = (temp_dir() / "run_a.csv").string();
    run_experiment(cfg);
    RunConfig again = cfg;
    again.out_csv = (temp_dir() / "run_b.csv").string();
    again.threads = 2;
    run_experiment(again);
    REQUIRE(read_file(cfg.out_csv) == read_file(again.out_csv));
}

TEST_CASE("sample dumps are jsonl particle snapshots") {
    RunConfig cfg = small_gmm_run();
    cfg.iterations = 10;
    cfg.dump_samples = (temp_dir() / "dump.jsonl").string();
    run_experiment(cfg);
    std::ifstream in(cfg.dump_samples);
    std::string line;
    int lines = 0;
    while (std::getline(in, line)) {
        const auto j = nlohmann::json::parse(line);
        REQUIRE(j.contains("iteration"));
        REQUIRE(j.at("particles").size() == 8);
        ++lines;
    }
    REQUIRE(lines == 1);  // iteration 0 only for T=10 with cadence 10
}

TEST_CASE("all methods run end to end on the gmm task at a shared budget") {
    for (const std::string method : {"svgd", "asvgd", "gfsvgd", "svopenes", "svcmaes",
                                     "parallel_cmaes", "cmaes"}) {
        RunConfig cfg = make_preset("gmm/" + method);
        cfg.iterations = 5;
        cfg.metric_every = 5;
        cfg.seed = 4;
        cfg.gt_cache_dir = small_gmm_run().gt_cache_dir;
        if (is_es_method(method)) {
            cfg.n_particles = method == "cmaes" ? 4 : 4;
            cfg.subpop_size = 4;
        } else {
            cfg.n_particles = 16;
        }
        const auto records = run_experiment(cfg);
        REQUIRE(!records.empty());
        for (const auto& r : records) REQUIRE(std::isfinite(r.value));
    }
}

TEST_CASE("logreg and rl tasks produce their metrics") {
    RunConfig lr = make_preset("glass/svcmaes");
    lr.task = "logreg_synth";
    lr.n_particles = 4;
    lr.subpop_size = 8;
    lr.iterations = 10;
    lr.metric_every = 5;
    const auto lr_records = run_experiment(lr);
    bool saw_acc = false;
    for (const auto& r : lr_records)
        if (r.metric == "test_acc") {
            saw_acc = true;
            REQUIRE(r.value >= 0.0);
            REQUIRE(r.value <= 1.0);
        }
    REQUIRE(saw_acc);

    RunConfig rl = make_preset("mountaincar/svcmaes");
    rl.n_particles = 2;
    rl.subpop_size = 4;
    rl.iterations = 3;
    rl.metric_every = 1;
    rl.n_rollouts = 2;
    const auto rl_records = run_experiment(rl);
    bool saw_return = false;
    for (const auto& r : rl_records)
        if (r.metric == "best_return") saw_return = true;
    REQUIRE(saw_return);
}

TEST_CASE("grid search baseline behaviors") {
    RunConfig base = small_gmm_run();
    base.iterations = 10;

    // 1x1 grid returns the base assignment.
    const GridResult trivial = grid_search(base, {{"h", {base.h}}}, "mmd2", 1);
    REQUIRE(trivial.best.h == base.h);
    REQUIRE(trivial.cells.size() == 1);

    // Report bookkeeping: |grid| x seeds rows.
    const GridResult r2 = grid_search(base, {{"h", {0.5, 1.0}}, {"sigma_init", {0.3, 0.6}}},
                                      "mmd2", 2);
    REQUIRE(r2.cells.size() == 4);
    std::size_t rows = 0;
    for (const auto& c : r2.cells) rows += c.per_seed.size();
    REQUIRE(rows == 8);

    REQUIRE_THROWS_AS(grid_search(base, {}, "mmd2", 1), ConfigError);
}

TEST_CASE("grid search rejects the degenerate flat kernel") {
    RunConfig base = make_preset("gmm/asvgd");
    base.n_particles = 24;
    base.iterations = 120;
    base.metric_every = 40;
    base.seed = 11;
    base.gt_cache_dir = small_gmm_run().gt_cache_dir;
    const GridResult r = grid_search(base, {{"h", {0.1, 1000.0}}}, "mmd2", 1);
    REQUIRE(r.best.h != 1000.0);
}
