#pragma once

// Experiment orchestration: run configuration with named presets, equal
// evaluation budgets across methods, deterministic seeding, ground-truth
// caching, metric collection, grid search, and CSV/JSONL emission.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sves/dataset.hpp"
#include "sves/es.hpp"
#include "sves/eval.hpp"
#include "sves/rl.hpp"
#include "sves/sves.hpp"
#include "sves/svgd.hpp"
#include "sves/targets.hpp"

namespace sves {

struct RunConfig {
    std::string task = "gmm";
    std::string method = "svcmaes";
    int n_particles = 100;
    int subpop_size = 4;
    int iterations = 1000;
    std::uint64_t seed = 1;

    // Method hyperparameters.
    double h = 1.0;
    double lr = 0.1;
    int elite = 2;
    double sigma_init = 0.5;
    double prior_var = 1.0;
    double zeta = 0.1;
    std::string schedule = "default";  // constant | log_clamped | log_fade | default
    double gamma_const = 1.0;
    double init_scale = 1.0;

    // Task parameters.
    int dim = 10;                // sphere / rosenbrock
    int batch_size = 128;        // logreg
    int n_rollouts = 16;         // rl
    int gmm_modes = 4;
    std::uint64_t gmm_seed = 2024;
    std::string dataset_path;    // logreg CSV
    double mp_alpha = 1.0;
    bool mp_negate = false;      // motion-planning exponent sign flag

    // Ground truth / metrics.
    std::uint64_t gt_seed = 1234;
    int gt_burnin = 10000;
    int gt_samples = 256;
    std::string gt_cache_dir = "gt_cache";
    int metric_every = 10;

    // Execution.
    unsigned threads = 1;
    std::string out_csv;
    std::string dump_samples;

    // Algorithm switches.
    bool alg1_literal = false;
    bool full_driving_sum = false;
    bool gf_anneal_drive = false;
    bool plain_sgd = false;
    bool rank_shaping = true;
};

struct RunRecord {
    std::string method;
    std::string task;
    std::uint64_t seed = 0;
    long iteration = 0;
    std::string metric;
    double value = 0.0;
};

inline const std::vector<std::string>& known_methods() {
    static const std::vector<std::string> m = {"svgd",    "asvgd", "gfsvgd",       "svopenes",
                                               "svcmaes", "cmaes", "parallel_cmaes"};
    return m;
}

inline const std::vector<std::string>& known_tasks() {
    static const std::vector<std::string> t = {"gmm",     "banana",   "motionplan",
                                               "logreg",  "logreg_synth", "pendulum",
                                               "mountaincar", "sphere", "rosenbrock"};
    return t;
}

inline bool is_es_method(const std::string& m) {
    return m == "svcmaes" || m == "svopenes" || m == "cmaes" || m == "parallel_cmaes";
}

inline bool is_sampling_task(const std::string& t) {
    return t == "gmm" || t == "banana" || t == "motionplan";
}

inline bool is_rl_task(const std::string& t) { return t == "pendulum" || t == "mountaincar"; }

inline bool is_logreg_task(const std::string& t) { return t == "logreg" || t == "logreg_synth"; }

// Energy evaluations consumed per generation; the quantity the equal-budget
// rule equates across methods.
inline std::uint64_t evals_per_generation(const RunConfig& cfg) {
    const std::uint64_t n = static_cast<std::uint64_t>(cfg.n_particles);
    return is_es_method(cfg.method) ? n * static_cast<std::uint64_t>(cfg.subpop_size) : n;
}

// ---------------------------------------------------------------------------
// Presets: one row per (task, method) from the published hyperparameter
// table, plus per-task population/schedule defaults.

struct Preset {
    double lr = 0.0;
    double h = 0.0;
    double extra = 0.0;  // prior variance / initial sigma / zeta, per method
    int elite = 0;
};

inline std::optional<Preset> preset_row(const std::string& task, const std::string& method) {
    // {lr, h, extra, elite}
    static const std::map<std::pair<std::string, std::string>, Preset> table = {
        {{"gmm", "svgd"}, {0.05, 0.223, 0, 0}},
        {{"gmm", "asvgd"}, {0.05, 0.223, 0, 0}},
        {{"gmm", "gfsvgd"}, {1.0, 0.889, 2.72, 0}},
        {{"gmm", "svcmaes"}, {0, 0.889, 0.50, 2}},
        {{"gmm", "svopenes"}, {0.50, 0.001, 0.10, 0}},
        {{"banana", "svgd"}, {1.0, 1e-4, 0, 0}},
        {{"banana", "asvgd"}, {1.0, 1e-4, 0, 0}},
        {{"banana", "gfsvgd"}, {0.001, 0.011, 1.116, 0}},
        {{"banana", "svcmaes"}, {0, 0.011, 0.5, 2}},
        {{"banana", "svopenes"}, {0.001, 1e-4, 0.15, 0}},
        {{"motionplan", "svgd"}, {0.01, 0.01, 0, 0}},
        {{"motionplan", "asvgd"}, {0.01, 0.01, 0, 0}},
        {{"motionplan", "gfsvgd"}, {0.001, 0.67, 2.67, 0}},
        {{"motionplan", "svcmaes"}, {0, 0.01, 0.10, 2}},
        {{"motionplan", "svopenes"}, {0.05, 0.01, 0.10, 0}},
        // Covtype / Glass rows ship as presets for externally supplied CSVs;
        // the bundled synthetic set reuses the Glass row.
        {{"covtype", "svgd"}, {0.005, 0.334, 0, 0}},
        {{"covtype", "gfsvgd"}, {0.05, 1.0, 4.45, 0}},
        {{"covtype", "svcmaes"}, {0, 0.667, 0.45, 9}},
        {{"covtype", "svopenes"}, {0.01, 0.334, 0.5, 0}},
        {{"glass", "svgd"}, {0.01, 1.0, 0, 0}},
        {{"glass", "gfsvgd"}, {0.1, 1.0, 4.45, 0}},
        {{"glass", "svcmaes"}, {0, 1.0, 0.40, 6}},
        {{"glass", "svopenes"}, {0.01, 1.0, 0.05, 0}},
        {{"pendulum", "gfsvgd"}, {0.05, 16.67, 0.34, 0}},
        {{"pendulum", "svcmaes"}, {0, 3.334, 0.47, 2}},
        {{"pendulum", "svopenes"}, {0.10, 30.0, 0.05, 0}},
        {{"mountaincar", "gfsvgd"}, {0.05, 23.33, 0.56, 0}},
        {{"mountaincar", "svcmaes"}, {0, 30.0, 0.68, 2}},
        {{"mountaincar", "svopenes"}, {1.0, 30.0, 0.68, 0}},
    };
    std::string row_task = task;
    if (task == "logreg" || task == "logreg_synth") row_task = "glass";
    const auto it = table.find({row_task, method});
    if (it == table.end()) return std::nullopt;
    return it->second;
}

// Fill population sizes, schedules and hyperparameters for a named
// `task/method` preset; explicit config values can be overridden afterwards.
inline RunConfig make_preset(const std::string& task, const std::string& method) {
    RunConfig cfg;
    cfg.task = task == "covtype" || task == "glass" ? "logreg" : task;
    cfg.method = method;

    if (is_sampling_task(cfg.task)) {
        cfg.iterations = 1000;
        cfg.n_particles = is_es_method(method) ? 100 : 400;
        cfg.subpop_size = 4;
        cfg.metric_every = 10;
        cfg.init_scale = 1.0;
    } else if (is_logreg_task(cfg.task)) {
        cfg.iterations = 1000;
        cfg.n_particles = is_es_method(method) ? 8 : 256;
        cfg.subpop_size = 32;
        cfg.batch_size = 128;
        cfg.init_scale = 0.5;
    } else if (is_rl_task(cfg.task)) {
        cfg.iterations = 200;
        cfg.n_particles = is_es_method(method) ? 4 : 64;
        cfg.subpop_size = 16;
        cfg.n_rollouts = 16;
        cfg.init_scale = 0.1;
        cfg.schedule = "log_fade";
    } else {
        cfg.iterations = 300;
        cfg.n_particles = is_es_method(method) ? 1 : 16;
        cfg.subpop_size = 16;
        cfg.elite = 8;
        cfg.sigma_init = 0.5;
        cfg.init_scale = 1.0;
    }

    if (const auto row = preset_row(task, method)) {
        cfg.h = row->h > 0 ? row->h : cfg.h;
        cfg.lr = row->lr > 0 ? row->lr : cfg.lr;
        if (method == "gfsvgd") cfg.prior_var = row->extra;
        if (method == "svcmaes" || method == "cmaes" || method == "parallel_cmaes") {
            cfg.sigma_init = row->extra > 0 ? row->extra : cfg.sigma_init;
            cfg.elite = row->elite > 0 ? row->elite : cfg.elite;
        }
        if (method == "svopenes") cfg.zeta = row->extra > 0 ? row->extra : cfg.zeta;
    }
    return cfg;
}

inline RunConfig make_preset(const std::string& spec_string) {
    const auto slash = spec_string.find('/');
    if (slash == std::string::npos)
        throw ConfigError("preset must be task/method, got: " + spec_string);
    return make_preset(spec_string.substr(0, slash), spec_string.substr(slash + 1));
}

// ---------------------------------------------------------------------------
// JSON config parsing. Unknown keys are rejected.

inline RunConfig config_from_json(const nlohmann::json& j) {
    RunConfig cfg;
    if (j.contains("preset")) cfg = make_preset(j.at("preset").get<std::string>());
    static const std::set<std::string> keys = {
        "preset",        "task",        "method",       "n_particles", "subpop_size",
        "iterations",    "seed",        "h",            "lr",          "elite",
        "sigma_init",    "prior_var",   "zeta",         "schedule",    "gamma_const",
        "init_scale",    "dim",         "batch_size",   "n_rollouts",  "gmm_modes",
        "gmm_seed",      "dataset_path", "mp_alpha",    "mp_negate",   "gt_seed",
        "gt_burnin",     "gt_samples",  "gt_cache_dir", "metric_every", "threads",
        "out_csv",       "dump_samples", "alg1_literal", "full_driving_sum",
        "gf_anneal_drive", "plain_sgd", "rank_shaping"};
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (!keys.count(key)) throw ConfigError("unknown config key: " + key);
    }
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("task", cfg.task);
    get("method", cfg.method);
    get("n_particles", cfg.n_particles);
    get("subpop_size", cfg.subpop_size);
    get("iterations", cfg.iterations);
    get("seed", cfg.seed);
    get("h", cfg.h);
    get("lr", cfg.lr);
    get("elite", cfg.elite);
    get("sigma_init", cfg.sigma_init);
    get("prior_var", cfg.prior_var);
    get("zeta", cfg.zeta);
    get("schedule", cfg.schedule);
    get("gamma_const", cfg.gamma_const);
    get("init_scale", cfg.init_scale);
    get("dim", cfg.dim);
    get("batch_size", cfg.batch_size);
    get("n_rollouts", cfg.n_rollouts);
    get("gmm_modes", cfg.gmm_modes);
    get("gmm_seed", cfg.gmm_seed);
    get("dataset_path", cfg.dataset_path);
    get("mp_alpha", cfg.mp_alpha);
    get("mp_negate", cfg.mp_negate);
    get("gt_seed", cfg.gt_seed);
    get("gt_burnin", cfg.gt_burnin);
    get("gt_samples", cfg.gt_samples);
    get("gt_cache_dir", cfg.gt_cache_dir);
    get("metric_every", cfg.metric_every);
    get("threads", cfg.threads);
    get("out_csv", cfg.out_csv);
    get("dump_samples", cfg.dump_samples);
    get("alg1_literal", cfg.alg1_literal);
    get("full_driving_sum", cfg.full_driving_sum);
    get("gf_anneal_drive", cfg.gf_anneal_drive);
    get("plain_sgd", cfg.plain_sgd);
    get("rank_shaping", cfg.rank_shaping);
    return cfg;
}

inline void validate_config(const RunConfig& cfg) {
    auto known = [](const std::vector<std::string>& xs, const std::string& v) {
        return std::find(xs.begin(), xs.end(), v) != xs.end();
    };
    if (!known(known_methods(), cfg.method)) throw ConfigError("unknown method: " + cfg.method);
    if (!known(known_tasks(), cfg.task)) throw ConfigError("unknown task: " + cfg.task);
    if (cfg.n_particles < 1) throw ConfigError("n_particles must be >= 1");
    if (cfg.iterations < 0) throw ConfigError("iterations must be >= 0");
    if (is_es_method(cfg.method) && cfg.subpop_size < 1)
        throw ConfigError("subpop_size must be >= 1");
    if (cfg.method == "svcmaes" || cfg.method == "cmaes" || cfg.method == "parallel_cmaes") {
        if (cfg.elite < 1 || cfg.elite > cfg.subpop_size)
            throw ConfigError("elite must satisfy 1 <= elite <= subpop_size");
    }
    if (cfg.method == "svopenes" && cfg.subpop_size % 2 != 0)
        throw ConfigError("svopenes requires an even subpop_size");
    if (!(cfg.h > 0.0)) throw ConfigError("kernel bandwidth must be positive");
    if (cfg.schedule != "default" && cfg.schedule != "constant" &&
        cfg.schedule != "log_clamped" && cfg.schedule != "log_fade")
        throw ConfigError("unknown schedule: " + cfg.schedule);
    if (cfg.task == "logreg" && cfg.dataset_path.empty())
        throw ConfigError("task logreg requires dataset_path");
    if (is_rl_task(cfg.task) && !is_es_method(cfg.method) && cfg.method != "gfsvgd")
        throw ConfigError("gradient-based SVGD is unavailable on RL tasks");
    if (cfg.metric_every < 1) throw ConfigError("metric_every must be >= 1");
}

// ---------------------------------------------------------------------------
// CSV / JSONL emission.

inline std::string format_value(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void sort_records(std::vector<RunRecord>& records) {
    std::stable_sort(records.begin(), records.end(), [](const RunRecord& a, const RunRecord& b) {
        if (a.seed != b.seed) return a.seed < b.seed;
        if (a.iteration != b.iteration) return a.iteration < b.iteration;
        if (a.metric != b.metric) return a.metric < b.metric;
        if (a.method != b.method) return a.method < b.method;
        return a.task < b.task;
    });
}

inline void emit_csv(std::vector<RunRecord> records, const std::string& path) {
    sort_records(records);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw RunFailed("cannot open output CSV: " + path);
    out << "method,task,seed,iteration,metric,value\n";
    for (const auto& r : records)
        out << r.method << ',' << r.task << ',' << r.seed << ',' << r.iteration << ','
            << r.metric << ',' << format_value(r.value) << '\n';
    if (!out) throw RunFailed("failed writing CSV: " + path);
}

inline std::vector<RunRecord> parse_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw RunFailed("cannot open CSV: " + path);
    std::string line;
    if (!std::getline(in, line) || line != "method,task,seed,iteration,metric,value")
        throw RunFailed("bad CSV header in " + path);
    std::vector<RunRecord> records;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        RunRecord r;
        std::string field;
        std::getline(ss, r.method, ',');
        std::getline(ss, r.task, ',');
        std::getline(ss, field, ',');
        r.seed = std::stoull(field);
        std::getline(ss, field, ',');
        r.iteration = std::stol(field);
        std::getline(ss, r.metric, ',');
        std::getline(ss, field, ',');
        r.value = std::stod(field);
        records.push_back(std::move(r));
    }
    return records;
}

// ---------------------------------------------------------------------------
// Targets and ground truth.

struct TaskContext {
    std::shared_ptr<TargetDensity> target;
    LogRegTarget* logreg = nullptr;  // non-owning views for task-specific hooks
    RlTarget* rl = nullptr;
    std::optional<SampleSet> ground_truth;
    double mmd_bandwidth = 0.0;
    Eigen::VectorXd gt_mean, gt_var;
};

inline std::shared_ptr<TargetDensity> build_target(const RunConfig& cfg) {
    if (cfg.task == "gmm") {
        return std::make_shared<GaussianMixtureTarget>(
            GaussianMixtureTarget::sample_construction(cfg.gmm_modes, RngStream(cfg.gmm_seed)));
    }
    if (cfg.task == "banana") return std::make_shared<DoubleBananaTarget>();
    if (cfg.task == "motionplan")
        return std::make_shared<MotionPlanningTarget>(5, 0.25, cfg.mp_alpha,
                                                      Eigen::Vector2d(-0.9, -0.9),
                                                      Eigen::Vector2d(0.9, 0.9), cfg.mp_negate);
    if (cfg.task == "logreg")
        return std::make_shared<LogRegTarget>(read_csv_dataset(cfg.dataset_path), cfg.seed,
                                              cfg.batch_size);
    if (cfg.task == "logreg_synth")
        return std::make_shared<LogRegTarget>(make_synthetic_logreg(), cfg.seed, cfg.batch_size);
    if (cfg.task == "pendulum")
        return std::make_shared<RlTarget>(EnvSpec::pendulum(), cfg.n_rollouts, cfg.seed);
    if (cfg.task == "mountaincar")
        return std::make_shared<RlTarget>(EnvSpec::mountaincar(), cfg.n_rollouts, cfg.seed);
    if (cfg.task == "sphere") return std::make_shared<SphereTarget>(cfg.dim);
    if (cfg.task == "rosenbrock") return std::make_shared<RosenbrockTarget>(cfg.dim);
    throw ConfigError("unknown task: " + cfg.task);
}

inline std::filesystem::path gt_cache_path(const RunConfig& cfg) {
    return std::filesystem::path(cfg.gt_cache_dir) /
           (cfg.task + "_" + std::to_string(cfg.gt_seed) + ".jsonl");
}

// Generate or load the 256-sample ground-truth cache for a sampling task.
// GMM uses ancestral sampling; the other densities use random-walk Metropolis
// with a pilot-tuned proposal scale, one independent chain per sample.
inline SampleSet ensure_ground_truth(const RunConfig& cfg) {
    const auto path = gt_cache_path(cfg);
    if (std::filesystem::exists(path)) {
        std::ifstream in(path);
        std::vector<Eigen::VectorXd> rows;
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const auto j = nlohmann::json::parse(line);
            const auto xs = j.at("x").get<std::vector<double>>();
            rows.push_back(Eigen::Map<const Eigen::VectorXd>(xs.data(),
                                                             static_cast<Eigen::Index>(xs.size())));
        }
        if (rows.empty()) throw RunFailed("empty ground-truth cache: " + path.string());
        SampleSet set;
        set.source = "gt:" + cfg.task;
        set.samples.resize(static_cast<Eigen::Index>(rows.size()), rows[0].size());
        for (std::size_t i = 0; i < rows.size(); ++i)
            set.samples.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
        return set;
    }

    const auto target = build_target(cfg);
    RngStream rng(cfg.gt_seed);
    SampleSet set;
    set.source = "gt:" + cfg.task;
    if (cfg.task == "gmm") {
        const auto* gmm = dynamic_cast<const GaussianMixtureTarget*>(target.get());
        set.samples.resize(cfg.gt_samples, target->dim());
        for (int i = 0; i < cfg.gt_samples; ++i) set.samples.row(i) = gmm->sample(rng).transpose();
    } else {
        const double scale = tune_proposal_scale(*target, rng.derive(0x7075));
        set = mh_sample(*target, cfg.gt_samples, cfg.gt_burnin, scale, rng.derive(0x6368),
                        1.0, cfg.threads)
                  .samples;
        set.source = "gt:" + cfg.task;
    }

    std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw RunFailed("cannot write ground-truth cache: " + path.string());
    for (Eigen::Index i = 0; i < set.samples.rows(); ++i) {
        nlohmann::json j;
        j["task"] = cfg.task;
        j["seed"] = cfg.gt_seed;
        std::vector<double> xs(set.samples.row(i).begin(), set.samples.row(i).end());
        j["x"] = xs;
        out << j.dump() << '\n';
    }
    return set;
}

inline TaskContext build_task_context(const RunConfig& cfg) {
    TaskContext ctx;
    ctx.target = build_target(cfg);
    ctx.logreg = dynamic_cast<LogRegTarget*>(ctx.target.get());
    ctx.rl = dynamic_cast<RlTarget*>(ctx.target.get());
    if (is_sampling_task(cfg.task)) {
        ctx.ground_truth = ensure_ground_truth(cfg);
        ctx.mmd_bandwidth = median_bandwidth(ctx.ground_truth->samples);
        ctx.gt_mean = ctx.ground_truth->samples.colwise().mean();
        ctx.gt_var = (ctx.ground_truth->samples.rowwise() - ctx.gt_mean.transpose())
                         .array()
                         .square()
                         .colwise()
                         .sum()
                         .transpose() /
                     static_cast<double>(ctx.ground_truth->samples.rows() - 1);
    }
    return ctx;
}

// ---------------------------------------------------------------------------
// Method drivers.

namespace detail {

inline AnnealSchedule schedule_for(const RunConfig& cfg) {
    std::string kind = cfg.schedule;
    if (kind == "default") {
        if (cfg.method == "svgd") kind = "constant";
        else if (is_rl_task(cfg.task)) kind = "log_fade";
        else kind = "log_clamped";
    }
    const int horizon = std::max(1, cfg.iterations);
    if (kind == "constant") return AnnealSchedule::constant_gamma(cfg.gamma_const);
    if (kind == "log_clamped") return AnnealSchedule::log_clamped(horizon);
    return AnnealSchedule::log_fade(horizon);
}

inline Eigen::MatrixXd init_particles(const RunConfig& cfg, int n, int dim) {
    RngStream root = RngStream(cfg.seed).derive(0x1217);
    Eigen::MatrixXd x(n, dim);
    for (int i = 0; i < n; ++i) {
        RngStream row = root.derive(static_cast<std::uint64_t>(i));
        for (int j = 0; j < dim; ++j) x(i, j) = cfg.init_scale * row.normal();
    }
    return x;
}

// Uniform stepping interface over all seven methods.
class MethodDriver {
public:
    MethodDriver(const RunConfig& cfg, const TargetDensity& target)
        : cfg_(cfg), target_(target), schedule_(schedule_for(cfg)) {
        const int d = target.dim();
        const KernelSpec kernel = KernelSpec::fixed(cfg.h);
        RngStream root(cfg.seed);

        if (cfg.method == "svcmaes") {
            SvCmaConfig sc;
            sc.alg1_literal = cfg.alg1_literal;
            sc.full_driving_sum = cfg.full_driving_sum;
            ens_ = std::make_unique<SvesEnsemble>(SvesEnsemble::init(
                init_particles(cfg, cfg.n_particles, d), cfg.sigma_init, cfg.subpop_size,
                cfg.elite, kernel, schedule_, root.derive(0xe5), sc));
        } else if (cfg.method == "cmaes") {
            // Single search distribution with the whole evaluation budget.
            const int pop = cfg.n_particles * cfg.subpop_size;
            const int elite = std::max(1, std::min(pop, cfg.elite * cfg.n_particles));
            weights_ = cma_weights(pop, elite, d);
            params_ = CmaParams::defaults(d, weights_.lambda_eff);
            pop_ = pop;
            states_.push_back(CmaState::init(
                init_particles(cfg, 1, d).row(0).transpose(), cfg.sigma_init));
            streams_.push_back(root.derive(0xc1, 0));
        } else if (cfg.method == "parallel_cmaes") {
            weights_ = cma_weights(cfg.subpop_size, cfg.elite, d);
            params_ = CmaParams::defaults(d, weights_.lambda_eff);
            pop_ = cfg.subpop_size;
            const Eigen::MatrixXd means = init_particles(cfg, cfg.n_particles, d);
            for (int i = 0; i < cfg.n_particles; ++i) {
                states_.push_back(CmaState::init(means.row(i).transpose(), cfg.sigma_init));
                streams_.push_back(root.derive(0xc1, static_cast<std::uint64_t>(i)));
            }
        } else {
            particles_.x = init_particles(cfg, cfg.n_particles, d);
            opt_ = cfg.plain_sgd ? OptimizerState::sgd(cfg.lr, cfg.n_particles, d)
                                 : OptimizerState::adam(cfg.lr, cfg.n_particles, d);
            kernel_ = kernel;
            if (cfg.method == "svopenes") {
                oes_.zeta = cfg.zeta;
                oes_.lr = cfg.lr;
                oes_.m = cfg.subpop_size;
                oes_.rank_shaping = cfg.rank_shaping;
                for (int i = 0; i < cfg.n_particles; ++i)
                    streams_.push_back(root.derive(0x0e5, static_cast<std::uint64_t>(i)));
            }
            gf_.prior_var = cfg.prior_var;
            gf_.anneal_drive = cfg.gf_anneal_drive;
        }
    }

    // Advance one generation; returns the best energy seen this generation
    // when the method evaluates energies (ES methods), NaN otherwise.
    double step(long g) {
        const double gamma = gamma_for(g);
        if (cfg_.method == "svcmaes") return svcma_step(*ens_, target_, cfg_.threads);
        if (cfg_.method == "cmaes")
            return cma_step(states_[0], target_, pop_, weights_, params_, streams_[0],
                            cfg_.threads);
        if (cfg_.method == "parallel_cmaes") {
            const auto best = independent_parallel_step(states_, target_, pop_, weights_,
                                                        params_, streams_, cfg_.threads);
            return *std::min_element(best.begin(), best.end());
        }
        if (cfg_.method == "svopenes") {
            svopenes_step(particles_, oes_, target_, kernel_, gamma, streams_, opt_,
                          cfg_.threads);
            return std::numeric_limits<double>::quiet_NaN();
        }
        if (cfg_.method == "gfsvgd") {
            gfsvgd_step(particles_, target_, gf_, kernel_, gamma, opt_);
            return std::numeric_limits<double>::quiet_NaN();
        }
        svgd_step(particles_, svgd_direction(particles_, target_, kernel_, gamma), opt_);
        return std::numeric_limits<double>::quiet_NaN();
    }

    Eigen::MatrixXd particles() const {
        if (cfg_.method == "svcmaes") return ens_->particles();
        if (cfg_.method == "cmaes" || cfg_.method == "parallel_cmaes") {
            Eigen::MatrixXd x(states_.size(), states_[0].dim());
            for (std::size_t i = 0; i < states_.size(); ++i)
                x.row(static_cast<Eigen::Index>(i)) = states_[i].mean.transpose();
            return x;
        }
        return particles_.x;
    }

    bool state_finite() const {
        if (cfg_.method == "svcmaes") {
            for (const auto& s : ens_->states)
                if (!cma_state_finite(s)) return false;
            return true;
        }
        if (cfg_.method == "cmaes" || cfg_.method == "parallel_cmaes") {
            for (const auto& s : states_)
                if (!cma_state_finite(s)) return false;
            return true;
        }
        return particles_.x.allFinite();
    }

private:
    static bool cma_state_finite(const CmaState& s) {
        return s.mean.allFinite() && std::isfinite(s.sigma) && s.cov.m.allFinite() &&
               s.path_sigma.allFinite() && s.path_c.allFinite();
    }

    double gamma_for(long g) const {
        const int t = static_cast<int>(
            std::clamp<long>(g + 1, 1, std::max(1, schedule_.horizon)));
        return gamma_at(schedule_, t);
    }

    const RunConfig& cfg_;
    const TargetDensity& target_;
    AnnealSchedule schedule_;

    std::unique_ptr<SvesEnsemble> ens_;
    std::vector<CmaState> states_;
    std::vector<RngStream> streams_;
    EsWeights weights_;
    CmaParams params_;
    int pop_ = 0;

    ParticleSet particles_;
    OptimizerState opt_;
    KernelSpec kernel_ = KernelSpec::fixed(1.0);
    OpenEsConfig oes_;
    GfSvgdConfig gf_;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// run_experiment: T generations of the configured method with metric records
// at iterations {0, metric_every, 2*metric_every, ...} below max(T, 1); each
// record reflects the state after `iteration` updates.

inline std::vector<RunRecord> run_experiment(const RunConfig& cfg) {
    validate_config(cfg);
    TaskContext ctx = build_task_context(cfg);
    ctx.target->reset_eval_count();
    detail::MethodDriver driver(cfg, *ctx.target);

    std::vector<RunRecord> records;
    std::ofstream dump;
    if (!cfg.dump_samples.empty()) {
        dump.open(cfg.dump_samples, std::ios::binary);
        if (!dump) throw RunFailed("cannot open sample dump: " + cfg.dump_samples);
    }

    double best_energy = std::numeric_limits<double>::infinity();
    auto add = [&](long iter, const std::string& metric, double value) {
        records.push_back({cfg.method, cfg.task, cfg.seed, iter, metric, value});
    };

    auto record_metrics = [&](long iter) {
        const Eigen::MatrixXd x = driver.particles();
        if (is_sampling_task(cfg.task)) {
            SampleSet set{x, cfg.method};
            add(iter, "mmd2", mmd2_biased(set, *ctx.ground_truth, ctx.mmd_bandwidth).mmd2);
            if (x.rows() >= 2) {
                const auto [mm, mv] = moment_mse(set, ctx.gt_mean, ctx.gt_var);
                add(iter, "mse_mean", mm);
                add(iter, "mse_var", mv);
            }
        } else if (is_logreg_task(cfg.task)) {
            add(iter, "test_acc", ctx.logreg->test_accuracy(x));
        } else if (is_rl_task(cfg.task)) {
            double best = -std::numeric_limits<double>::infinity();
            std::vector<double> returns(static_cast<std::size_t>(x.rows()));
            parallel_for(static_cast<std::size_t>(x.rows()), cfg.threads, [&](std::size_t i) {
                returns[i] =
                    ctx.rl->expected_return_of(x.row(static_cast<Eigen::Index>(i)).transpose());
            });
            for (double r : returns) best = std::max(best, r);
            add(iter, "best_return", best);
        } else {
            double best = best_energy;
            for (Eigen::Index i = 0; i < x.rows(); ++i)
                best = std::min(best, ctx.target->energy_nocount(x.row(i).transpose()));
            add(iter, "best_f", best);
        }
        if (dump.is_open()) {
            nlohmann::json j;
            j["iteration"] = iter;
            std::vector<std::vector<double>> rows;
            for (Eigen::Index i = 0; i < x.rows(); ++i)
                rows.emplace_back(x.row(i).begin(), x.row(i).end());
            j["particles"] = rows;
            dump << j.dump() << '\n';
        }
    };

    RngStream batch_rng = RngStream(cfg.seed).derive(0xba7c);
    const long total = std::max(cfg.iterations, 0);
    try {
        if (total == 0) {
            if (ctx.logreg) ctx.logreg->draw_batch(batch_rng);
            record_metrics(0);
        }
        for (long g = 0; g < total; ++g) {
            if (ctx.logreg) {
                RngStream gen_rng = batch_rng.derive(static_cast<std::uint64_t>(g));
                ctx.logreg->draw_batch(gen_rng);
            }
            if (ctx.rl) ctx.rl->set_generation(g);
            if (g % cfg.metric_every == 0) record_metrics(g);
            const double best = driver.step(g);
            if (std::isfinite(best)) best_energy = std::min(best_energy, best);
            if (!driver.state_finite())
                throw RunFailed("non-finite sampler state at iteration " + std::to_string(g));
        }
    } catch (const RunFailed&) {
        if (!cfg.out_csv.empty()) emit_csv(records, cfg.out_csv);
        throw;
    }

    // Budget reconciliation: the run must have consumed exactly the declared
    // number of energy evaluations.
    const std::uint64_t expected = evals_per_generation(cfg) * static_cast<std::uint64_t>(total);
    if (ctx.target->eval_count() != expected)
        throw RunFailed("budget mismatch: counted " + std::to_string(ctx.target->eval_count()) +
                        ", expected " + std::to_string(expected));

    if (!cfg.out_csv.empty()) emit_csv(records, cfg.out_csv);
    return records;
}

// ---------------------------------------------------------------------------
// Grid search over the full Cartesian product, each cell averaged over
// consecutive seeds; selection by the final recorded value of `metric`
// (minimized unless the metric is a return/accuracy). Ties keep the earlier
// cell in lexicographic parameter order.

struct GridCell {
    std::map<std::string, double> assignment;
    std::vector<double> per_seed;
    double mean = 0.0;
};

struct GridResult {
    RunConfig best;
    std::vector<GridCell> cells;
};

inline void apply_grid_param(RunConfig& cfg, const std::string& name, double value) {
    if (name == "h") cfg.h = value;
    else if (name == "lr") cfg.lr = value;
    else if (name == "elite") cfg.elite = static_cast<int>(value);
    else if (name == "sigma_init") cfg.sigma_init = value;
    else if (name == "prior_var") cfg.prior_var = value;
    else if (name == "zeta") cfg.zeta = value;
    else if (name == "init_scale") cfg.init_scale = value;
    else if (name == "gamma_const") cfg.gamma_const = value;
    else throw ConfigError("unknown grid parameter: " + name);
}

inline bool metric_is_maximized(const std::string& metric) {
    return metric == "best_return" || metric == "test_acc";
}

inline double final_metric_value(const std::vector<RunRecord>& records,
                                 const std::string& metric) {
    double value = std::numeric_limits<double>::quiet_NaN();
    long iter = -1;
    for (const auto& r : records) {
        if (r.metric == metric && r.iteration >= iter) {
            iter = r.iteration;
            value = r.value;
        }
    }
    if (iter < 0) throw RunFailed("metric not recorded: " + metric);
    return value;
}

inline GridResult grid_search(const RunConfig& base,
                              const std::map<std::string, std::vector<double>>& grid,
                              const std::string& metric, int seeds = 1) {
    if (grid.empty()) throw ConfigError("grid_search: empty grid");
    for (const auto& [name, values] : grid)
        if (values.empty()) throw ConfigError("grid_search: empty value list for " + name);

    std::vector<std::string> names;
    for (const auto& [name, values] : grid) names.push_back(name);

    GridResult result;
    result.best = base;
    const bool maximize = metric_is_maximized(metric);
    double best_score = maximize ? -std::numeric_limits<double>::infinity()
                                 : std::numeric_limits<double>::infinity();

    std::vector<std::size_t> idx(names.size(), 0);
    bool carry = false;
    while (!carry) {
        GridCell cell;
        RunConfig cfg = base;
        cfg.out_csv.clear();
        cfg.dump_samples.clear();
        for (std::size_t k = 0; k < names.size(); ++k) {
            const double v = grid.at(names[k])[idx[k]];
            cell.assignment[names[k]] = v;
            apply_grid_param(cfg, names[k], v);
        }
        for (int s = 0; s < seeds; ++s) {
            RunConfig run = cfg;
            run.seed = base.seed + static_cast<std::uint64_t>(s);
            cell.per_seed.push_back(final_metric_value(run_experiment(run), metric));
        }
        cell.mean = 0.0;
        for (double v : cell.per_seed) cell.mean += v;
        cell.mean /= static_cast<double>(cell.per_seed.size());
        if ((maximize && cell.mean > best_score) || (!maximize && cell.mean < best_score)) {
            best_score = cell.mean;
            RunConfig chosen = base;
            for (const auto& [name, v] : cell.assignment) apply_grid_param(chosen, name, v);
            result.best = chosen;
        }
        result.cells.push_back(std::move(cell));

        // Advance the mixed-radix counter (last name fastest).
        carry = true;
        for (std::size_t k = names.size(); k-- > 0;) {
            if (++idx[k] < grid.at(names[k]).size()) {
                carry = false;
                break;
            }
            idx[k] = 0;
        }
    }
    return result;
}

}  // namespace sves
