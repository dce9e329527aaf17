#include "camnet/cli.hpp"

#include "camnet/eval.hpp"
#include "camnet/ingest.hpp"
#include "camnet/io.hpp"
#include "camnet/online.hpp"
#include "camnet/sim.hpp"
#include "camnet/topology.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <filesystem>
#include <optional>
#include <ostream>
#include <sstream>

namespace camnet {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Exclusive ownership of a run directory for the life of the object.
class RunLock
{
public:
    explicit RunLock(const fs::path& dir) : path_(dir / ".lock")
    {
        fs::create_directories(dir);
        fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd_ < 0) {
            if (errno == EEXIST) throw std::runtime_error("run directory " + dir.string() + " is locked by another process");
            throw std::runtime_error("cannot lock " + dir.string() + ": " + std::strerror(errno));
        }
        const auto pid = std::to_string(::getpid()) + "\n";
        [[maybe_unused]] auto n = ::write(fd_, pid.data(), pid.size());
    }
    ~RunLock()
    {
        ::close(fd_);
        std::error_code ec;
        fs::remove(path_, ec);
    }
    RunLock(const RunLock&) = delete;
    RunLock& operator=(const RunLock&) = delete;

private:
    fs::path path_;
    int fd_ = -1;
};

struct Common
{
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::string out;
};

void add_common(CLI::App* cmd, Common& c)
{
    cmd->add_option("--config", c.config, "key/value config file")->check(CLI::ExistingFile);
    cmd->add_option("--seed", c.seed, "root seed");
    cmd->add_option("--threads", c.threads, "worker threads");
    cmd->add_option("--out", c.out, "output directory")->required();
}

/// CLI flag > config file > built-in defaults.
PipelineConfig resolve_config(const Common& c)
{
    PipelineConfig cfg;
    if (!c.config.empty()) cfg = read_config(c.config);
    if (c.seed) cfg.seed = *c.seed;
    if (c.threads) cfg.threads = *c.threads;
    cfg.validate();
    return cfg;
}

void write_snapshot(const fs::path& dir, const PipelineConfig& cfg, const std::string& command, const json& inputs)
{
    write_config(cfg, dir / "config.ini");
    json run{{"command", command}, {"seed", cfg.seed}, {"inputs", inputs}};
    write_text(dir / "run.json", run.dump(2) + "\n");
}

struct SimulateArgs
{
    std::string spec;
    std::string scenario = "default";
    std::optional<std::uint64_t> seed;
    std::optional<double> split;
    std::string out;
};

int cmd_simulate(const SimulateArgs& a, std::ostream& out)
{
    ScenarioSpec spec;
    if (!a.spec.empty()) {
        spec = read_scenario(a.spec);
        if (a.seed) spec.seed = *a.seed;
    } else {
        const auto seed = a.seed.value_or(1);
        if (a.scenario == "default") spec = default_scenario(seed);
        else if (a.scenario == "drift") spec = drift_scenario(seed);
        else if (a.scenario == "separable") spec = separable_scenario(seed);
        else throw Error(ErrorCode::InvalidScenario, "scenario must be default, drift or separable");
    }
    spec.validate();
    const fs::path dir = a.out;
    RunLock lock(dir);
    const auto sim = generate(spec);
    write_scenario(spec, dir / "scenario.json");
    write_truth(sim.truth, dir / "truth.json");
    write_dataset(sim.dataset, dir / "dataset");
    if (a.split) {
        auto [before, after] = split_dataset(sim.dataset, *a.split);
        write_dataset(before, dir / "init");
        write_dataset(after, dir / "stream");
    }
    out << "simulated " << sim.dataset.tracklet_count() << " tracklets, " << sim.truth.pairs.size()
        << " true pairs into " << dir.string() << "\n";
    return exit_ok;
}

struct InitArgs
{
    Common common;
    std::string dataset;
    std::string truth;
};

int cmd_init(const InitArgs& a, std::ostream& out)
{
    const auto cfg = resolve_config(a.common);
    const auto ds = load_dataset(fs::path(a.dataset), cfg.normalize_features);
    std::optional<GroundTruth> truth;
    if (!a.truth.empty()) truth = read_truth(a.truth);
    const fs::path dir = a.common.out;
    RunLock lock(dir);
    write_snapshot(dir, cfg, "init", {{"dataset", fs::absolute(a.dataset).string()}, {"truth", a.truth}});

    const auto r = initialize_topology(ds, cfg);
    write_topology(r.zones, dir / "topology.json", &r.cameras);
    for (std::size_t i = 0; i < r.iterations.size(); ++i) {
        write_topology(r.iterations[i], dir / "iterations" / ("iter" + std::to_string(i + 1) + ".json"));
    }
    std::ostringstream trace;
    trace << "stage,matches,reliable" << (truth ? ",rank1" : "") << "\n";
    std::optional<TruePairSet> pairs;
    if (truth && !truth->pairs.empty()) pairs = true_pair_set(*truth);
    for (const auto& s : r.stages) {
        write_match_log(s.matches, dir / "stages" / (s.name + ".csv"));
        const auto reliable = std::count_if(s.matches.begin(), s.matches.end(),
                                            [&](const Correspondence& c) { return c.similarity > cfg.theta_sim; });
        trace << s.name << ',' << s.matches.size() << ',' << reliable;
        if (truth) trace << ',' << (pairs ? rank1(s.matches, *pairs) : 0.0);
        trace << "\n";
    }
    write_text(dir / "trace.csv", trace.str());
    write_match_log(r.stages.back().matches, dir / "matches.csv");
    out << "init: " << r.zones.valid_count() << " valid zone links after " << r.iterations.size()
        << " iterations; results in " << dir.string() << "\n";
    return exit_ok;
}

struct OnlineArgs
{
    Common common;
    std::string topology;
    std::string stream;
    bool no_update = false;
    bool one_to_one = false;
};

int cmd_online(const OnlineArgs& a, std::ostream& out)
{
    auto cfg = resolve_config(a.common);
    if (a.no_update) cfg.online_refit = false;
    if (a.one_to_one) cfg.one_to_one = true;
    fs::path topo_file = a.topology;
    if (fs::is_directory(topo_file)) topo_file /= "topology.json";
    const auto init = read_topology(topo_file);
    const auto ds = load_dataset(fs::path(a.stream), cfg.normalize_features);
    const fs::path dir = a.common.out;
    RunLock lock(dir);
    write_snapshot(dir, cfg, "online",
                   {{"topology", fs::absolute(topo_file).string()}, {"stream", fs::absolute(a.stream).string()}});
    const auto r = run_online(init, ds, cfg);
    write_topology(r.topology, dir / "topology.json");
    write_match_log(r.log, dir / "matches.csv");
    write_text(dir / "refits.csv", refits_to_csv(r.refits));
    out << "online: " << r.log.size() << " matches, " << r.refits.size() << " refits; results in " << dir.string()
        << "\n";
    return exit_ok;
}

struct EvalArgs
{
    std::string run;
    std::string truth;
    std::string out;
    double at_time = 0;
    double pairs_from = -std::numeric_limits<double>::infinity();
    std::size_t max_rank = 10;
};

int cmd_eval(const EvalArgs& a, std::ostream& out)
{
    const fs::path run = a.run;
    const auto topo = read_topology(run / "topology.json");
    const auto log = read_match_log(run / "matches.csv");
    const auto truth = read_truth(a.truth);
    const auto report = evaluate(topo, log, truth, a.at_time, a.max_rank, a.pairs_from);
    const fs::path dir = a.out.empty() ? run : fs::path(a.out);
    write_text(dir / "report.json", report_to_json(report) + "\n");
    write_text(dir / "links.csv", report_links_csv(report));
    out << "rank1 " << report.rank1 << ", transition error " << report.transition_time_error << " s, distance "
        << report.topology_distance << ", links " << report.recovered << "/" << report.true_links << " (+"
        << report.spurious << " spurious)\n";
    return exit_ok;
}

struct BenchArgs
{
    Common common;
    std::vector<std::size_t> sizes{100, 200, 400};
    int k = 30;
    int repetitions = 5;
    int dim = 64;
};

int cmd_bench(const BenchArgs& a, std::ostream& out)
{
    const auto cfg = resolve_config(a.common);
    auto sizes = a.sizes;
    std::sort(sizes.begin(), sizes.end());
    const fs::path dir = a.common.out;
    RunLock lock(dir);
    write_snapshot(dir, cfg, "bench", {{"sizes", sizes}, {"k", a.k}, {"repetitions", a.repetitions}});
    const auto t = benchmark_matching(sizes, a.k, cfg, a.repetitions, a.dim, cfg.seed);
    write_text(dir / "timing.csv", benchmark_to_csv(t));
    json ratios{{"forest", t.forest_ratios}, {"exhaustive", t.exhaustive_ratios}};
    write_text(dir / "ratios.json", ratios.dump(2) + "\n");
    for (const auto& row : t.rows) out << row.n << ' ' << row.path << ' ' << row.median_seconds << " s\n";
    return exit_ok;
}

bool is_validation(ErrorCode c)
{
    switch (c) {
    case ErrorCode::InvalidConfig:
    case ErrorCode::InvalidScenario:
    case ErrorCode::ParseError:
    case ErrorCode::InvalidFeature:
    case ErrorCode::EmptyTracklet:
    case ErrorCode::UnsortedTimestamps:
    case ErrorCode::InvalidBox:
    case ErrorCode::InvalidTimestamp:
    case ErrorCode::FeatureDimMismatch:
    case ErrorCode::MissingLabel:
        return true;
    default:
        return false;
    }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"camera network topology inference and re-identification", "camnet"};
    app.require_subcommand(1);

    SimulateArgs sim;
    auto* simulate = app.add_subcommand("simulate", "generate a synthetic dataset with ground truth");
    simulate->add_option("--spec", sim.spec, "scenario JSON")->check(CLI::ExistingFile);
    simulate->add_option("--scenario", sim.scenario, "built-in scenario: default, drift, separable");
    simulate->add_option("--seed", sim.seed, "scenario seed");
    simulate->add_option("--split", sim.split, "also write init/ and stream/ datasets split at this time");
    simulate->add_option("--out", sim.out, "output directory")->required();

    InitArgs init;
    auto* init_cmd = app.add_subcommand("init", "offline topology initialization");
    add_common(init_cmd, init.common);
    init_cmd->add_option("--dataset", init.dataset, "dataset manifest")->required()->check(CLI::ExistingFile);
    init_cmd->add_option("--truth", init.truth, "ground truth for the per-stage rank-1 trace")->check(CLI::ExistingFile);

    OnlineArgs online;
    auto* online_cmd = app.add_subcommand("online", "streaming re-identification and topology update");
    add_common(online_cmd, online.common);
    online_cmd->add_option("--topology", online.topology, "topology file or init run directory")->required()->check(CLI::ExistingPath);
    online_cmd->add_option("--stream", online.stream, "stream dataset manifest")->required()->check(CLI::ExistingFile);
    online_cmd->add_flag("--no-update", online.no_update, "never refit link models");
    online_cmd->add_flag("--one-to-one", online.one_to_one, "an entry can be matched once");

    EvalArgs ev;
    auto* eval_cmd = app.add_subcommand("eval", "score a run against ground truth");
    eval_cmd->add_option("--run", ev.run, "run directory")->required()->check(CLI::ExistingDirectory);
    eval_cmd->add_option("--truth", ev.truth, "ground truth file")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--out", ev.out, "report directory (default: the run directory)");
    eval_cmd->add_option("--at", ev.at_time, "time whose link parameters count as truth");
    eval_cmd->add_option("--pairs-from", ev.pairs_from, "only score true pairs exiting at or after this time");
    eval_cmd->add_option("--max-rank", ev.max_rank, "CMC length");

    BenchArgs bench;
    auto* bench_cmd = app.add_subcommand("bench", "forest versus exhaustive matching cost");
    add_common(bench_cmd, bench.common);
    bench_cmd->add_option("--sizes", bench.sizes, "gallery sizes")->delimiter(',');
    bench_cmd->add_option("--k", bench.k, "appearances per identity");
    bench_cmd->add_option("--reps", bench.repetitions, "repetitions per size");
    bench_cmd->add_option("--dim", bench.dim, "feature dimension");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return exit_ok;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return exit_ok;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return exit_validation;
    }

    try {
        if (*simulate) return cmd_simulate(sim, out);
        if (*init_cmd) return cmd_init(init, out);
        if (*online_cmd) return cmd_online(online, out);
        if (*eval_cmd) return cmd_eval(ev, out);
        if (*bench_cmd) return cmd_bench(bench, out);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return is_validation(e.code()) ? exit_validation : exit_runtime;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_runtime;
    }
    return exit_validation;
}

}  // namespace camnet
