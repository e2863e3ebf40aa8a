#include "rca/config.hpp"
#include "rca/cycles.hpp"
#include "rca/evalreport.hpp"
#include "rca/log_io.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitInternal = 3;

std::string read_all(std::istream& in) {
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

std::string read_input(const std::string& path) {
    if (path == "-") return read_all(std::cin);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw rca::DataError("cannot open input '" + path + "'");
    return read_all(in);
}

fs::path prepare_run_dir(const std::string& explicit_out, const std::string& subcommand,
                         const rca::RunConfig& config, std::string_view input_bytes) {
    fs::path dir = explicit_out.empty()
                       ? fs::path("runs") / (subcommand + "-" +
                                             rca::content_hash_hex(config, input_bytes))
                       : fs::path(explicit_out);
    fs::create_directories(dir);
    std::ofstream echo(dir / "effective_config.json");
    echo << config.to_json().dump(2) << '\n';
    return dir;
}

struct CommonOpts {
    std::string config_path;
    std::string out_dir;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "JSON config file");
    cmd->add_option("--out", opts.out_dir,
                    "output directory (default: runs/<cmd>-<content hash>)");
}

// defaults < config file < RCA_* env < CLI flags
rca::RunConfig layered_config(const CommonOpts& opts,
                              const std::function<void(rca::RunConfig&)>& apply_flags) {
    rca::RunConfig config;
    if (!opts.config_path.empty()) config.apply_file(opts.config_path);
    config.apply_env();
    apply_flags(config);
    config.validate();
    return config;
}

int cmd_simulate(const CommonOpts& opts, const std::function<void(rca::RunConfig&)>& flags) {
    rca::RunConfig config = layered_config(opts, flags);
    fs::path dir = prepare_run_dir(opts.out_dir, "simulate", config, "");

    rca::Plant plant = rca::build_plant(config.plant_config());
    rca::SimResult sim = rca::generate(plant, config.seed);
    rca::write_log_file(sim.log, (dir / "log.csv").string());
    rca::write_ground_truth_file(sim.truth, (dir / "ground_truth.json").string());

    long flagged = 0;
    for (const auto& ct : sim.truth.cycles) flagged += ct.flag;
    std::cout << "simulate: " << sim.truth.cycles.size() << " cycles (" << flagged
              << " flagged), " << sim.log.rows.size() << " rows -> " << dir.string() << "\n";
    return kExitOk;
}

int cmd_analyze(const CommonOpts& opts, const std::string& input, const std::string& model_name,
                const std::string& labels_path,
                const std::function<void(rca::RunConfig&)>& flags) {
    rca::RunConfig config = layered_config(opts, flags);
    const rca::ModelKind kind = rca::model_kind_from_string(model_name);

    const std::string input_bytes = read_input(input);
    fs::path dir = prepare_run_dir(opts.out_dir, "analyze", config,
                                   model_name + "\n" + labels_path + "\n" + input_bytes);

    std::istringstream stream(input_bytes);
    rca::SignalLog log = rca::parse_log(stream);
    auto cycles = rca::segment_cycles(log);

    std::vector<rca::ProductivityFlag> cycle_flags;
    if (!labels_path.empty()) {
        cycle_flags = rca::flag_productivity(cycles, rca::parse_labels_file(labels_path));
    } else {
        rca::DurationFlagPolicy policy{config.ideal_cycle_seconds, config.flag_factor};
        cycle_flags = rca::flag_productivity(cycles, policy);
    }

    rca::Iae final_state(1, rca::IaeConfig{});
    const bool keeps_state = kind == rca::ModelKind::Ensemble || kind == rca::ModelKind::IaeOnly;
    auto reports = rca::run_model(kind, cycles, cycle_flags, config.ensemble_config(),
                                  keeps_state ? &final_state : nullptr);

    {
        std::ofstream out(dir / "reports.jsonl");
        rca::write_reports_jsonl(reports, log.feature_names, kind, out);
    }
    if (keeps_state) final_state.save_file((dir / "checkpoint.json").string());

    long flagged = 0;
    for (const auto& f : cycle_flags) flagged += f.flag;
    std::cout << "analyze[" << model_name << "]: " << cycles.size() << " cycles, " << flagged
              << " flagged, " << reports.size() << " reports -> " << dir.string() << "\n";
    return kExitOk;
}

int cmd_evaluate(const CommonOpts& opts, const std::string& reports_path,
                 const std::string& truth_path,
                 const std::function<void(rca::RunConfig&)>& flags) {
    rca::RunConfig config = layered_config(opts, flags);
    const std::string reports_bytes = read_input(reports_path);
    const std::string truth_bytes = read_input(truth_path);
    fs::path dir = prepare_run_dir(opts.out_dir, "evaluate", config,
                                   reports_bytes + "\n---\n" + truth_bytes);

    std::istringstream reports_stream(reports_bytes);
    auto predictions = rca::read_reports_jsonl(reports_stream);
    std::istringstream truth_stream(truth_bytes);
    rca::GroundTruth truth = rca::read_ground_truth(truth_stream);

    rca::ConfusionCounts counts = rca::confusion(predictions, truth);
    rca::MetricSet m = rca::metrics(counts);
    const std::string model = predictions.empty() ? "unknown" : predictions.front().model;
    if (predictions.empty())
        std::cerr << "rca: warning: empty report stream, metrics default to 0\n";

    std::ofstream out(dir / "metrics.json");
    rca::write_metrics_json(model, m, counts, out);
    std::cout << "evaluate[" << model << "]: precision " << rca::round3(m.precision)
              << " recall " << rca::round3(m.recall) << " f1 " << rca::round3(m.f1) << " (tp "
              << counts.tp << " fp " << counts.fp << " fn " << counts.fn << ") -> "
              << dir.string() << "\n";
    return kExitOk;
}

int cmd_report(const CommonOpts& opts, const std::string& reports_path, bool svg,
               const std::function<void(rca::RunConfig&)>& flags) {
    rca::RunConfig config = layered_config(opts, flags);
    const std::string reports_bytes = read_input(reports_path);
    fs::path dir = prepare_run_dir(opts.out_dir, "report", config, reports_bytes);

    std::istringstream stream(reports_bytes);
    auto predictions = rca::read_reports_jsonl(stream);
    std::vector<rca::ScatterPoint> points;
    for (const auto& p : predictions)
        for (const auto& [name, score] : p.scores_by_name)
            if (score >= 2) points.push_back({p.cycle_id, name, score});

    {
        std::ofstream out(dir / "scatter.csv");
        rca::emit_score_scatter_csv(points, out);
    }
    if (svg) {
        std::ofstream out(dir / "scatter.svg");
        rca::emit_score_scatter_svg(points, out);
    }
    std::cout << "report: " << points.size() << " scored points -> " << dir.string() << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Root-cause analysis of productivity losses in cyclic PLC logs"};
    app.require_subcommand(1);

    // Flag holders; only flags the user actually passed are applied, so the
    // config file and environment keep their precedence.
    CommonOpts sim_opts, ana_opts, eval_opts, rep_opts;
    std::string preset, input, model = "ensemble", labels, reports_path, truth_path;
    std::uint64_t seed = 0;
    int threads = 0, cycles_n = 0, signals_n = 0, states_n = 0, batch_cycles = 0;
    double ideal = 0.0, anomaly_rate = -1.0, jitter = -1.0, flag_factor = 0.0;
    bool svg = false;

    auto* sim = app.add_subcommand("simulate", "generate a synthetic PLC log + ground truth");
    add_common(sim, sim_opts);
    auto* sim_preset = sim->add_option("--preset", preset,
                                       "synthetic-plc | welding | injection-molding");
    auto* sim_seed = sim->add_option("--seed", seed, "master seed");
    auto* sim_cycles = sim->add_option("--cycles", cycles_n, "number of cycles");
    auto* sim_signals = sim->add_option("--signals", signals_n, "number of binary signals");
    auto* sim_states = sim->add_option("--states", states_n, "states per cycle");
    auto* sim_ideal = sim->add_option("--ideal-seconds", ideal, "ideal cycle time");
    auto* sim_rate = sim->add_option("--anomaly-rate", anomaly_rate, "anomaly probability");
    auto* sim_jitter = sim->add_option("--jitter", jitter, "duration jitter fraction");

    auto* ana = app.add_subcommand("analyze", "run a model over a log and emit reports.jsonl");
    add_common(ana, ana_opts);
    ana->add_option("--input", input, "log CSV path, or - for stdin")->required();
    ana->add_option("--model", model, "ensemble|iae|pca|mi|iforest|knn");
    auto* ana_seed = ana->add_option("--seed", seed, "master seed");
    auto* ana_threads = ana->add_option("--threads", threads, "lane parallelism cap");
    auto* ana_ideal = ana->add_option("--ideal-seconds", ideal,
                                      "ideal cycle time for duration flagging");
    auto* ana_factor = ana->add_option("--flag-factor", flag_factor,
                                       "duration threshold factor");
    auto* ana_batch = ana->add_option("--batch-cycles", batch_cycles, "cycles per batch (a)");
    ana->add_option("--labels", labels, "external labels JSON (overrides duration flagging)");

    auto* eval = app.add_subcommand("evaluate", "score reports against ground truth");
    add_common(eval, eval_opts);
    eval->add_option("--reports", reports_path, "reports.jsonl path")->required();
    eval->add_option("--truth", truth_path, "ground_truth.json path")->required();

    auto* rep = app.add_subcommand("report", "emit the score scatter CSV (and SVG)");
    add_common(rep, rep_opts);
    rep->add_option("--reports", reports_path, "reports.jsonl path")->required();
    rep->add_flag("--svg", svg, "also emit scatter.svg");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (sim->parsed()) {
            return cmd_simulate(sim_opts, [&](rca::RunConfig& c) {
                if (*sim_preset) c.plant = rca::preset_config(preset);
                if (*sim_seed) c.seed = seed;
                if (*sim_cycles) c.plant.num_cycles = cycles_n;
                if (*sim_signals) c.plant.d = signals_n;
                if (*sim_states) c.plant.num_states = states_n;
                if (*sim_ideal) c.plant.ideal_cycle_seconds = ideal;
                if (*sim_rate) c.plant.anomaly_rate = anomaly_rate;
                if (*sim_jitter) c.plant.duration_jitter_frac = jitter;
            });
        }
        if (ana->parsed()) {
            return cmd_analyze(ana_opts, input, model, labels, [&](rca::RunConfig& c) {
                if (*ana_seed) c.seed = seed;
                if (*ana_threads) c.threads = threads;
                if (*ana_ideal) c.ideal_cycle_seconds = ideal;
                if (*ana_factor) c.flag_factor = flag_factor;
                if (*ana_batch) c.batch_size_cycles = batch_cycles;
            });
        }
        if (eval->parsed())
            return cmd_evaluate(eval_opts, reports_path, truth_path, [](rca::RunConfig&) {});
        if (rep->parsed())
            return cmd_report(rep_opts, reports_path, svg, [](rca::RunConfig&) {});
        return kExitUsage;
    } catch (const rca::ConfigError& e) {
        std::cerr << "rca: " << e.what() << "\n";
        return kExitUsage;
    } catch (const rca::DataError& e) {
        std::cerr << "rca: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "rca: internal error: " << e.what() << "\n";
        return kExitInternal;
    }
}
