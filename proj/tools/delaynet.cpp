// delaynet: experiment runner.
//
// Exit codes: 0 success, 1 invalid configuration or arguments, 2 numerical
// divergence, 3 I/O failure.

#include "experiment.hpp"
#include "plot.hpp"

#include "delaynet/analysis.hpp"
#include "delaynet/errors.hpp"
#include "delaynet/neuron.hpp"
#include "delaynet/rng.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace delaynet;
using namespace delaynet::cli;
using nlohmann::ordered_json;

namespace {

enum ExitCode { ok = 0, invalid = 1, diverged = 2, io_failure = 3 };

struct Provenance {
    std::string config_hash;
    std::uint64_t seed = 0;
};

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError(dir.string(), "cannot create directory: " + ec.message());
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(path.string(), "cannot open for writing");
    return out;
}

std::ifstream open_in(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path.string(), "cannot open");
    return in;
}

void csv_preamble(std::ostream& out, const Provenance& p) {
    out << "# config_hash=" << p.config_hash << " seed=" << p.seed << '\n';
}

void write_json(const fs::path& path, const ordered_json& j) {
    auto out = open_out(path);
    out << j.dump(2) << '\n';
    if (!out) throw IoError(path.string(), "write failed");
}

void write_manifest(const fs::path& dir, const std::string& command, const Provenance& p,
                    const std::vector<std::string>& files) {
    write_json(dir / "manifest.json", ordered_json{{"command", command},
                                                   {"config_hash", p.config_hash},
                                                   {"seed", p.seed},
                                                   {"files", files}});
}

std::string hash_text(const std::string& text) {
    ExperimentConfig tmp;
    tmp.name = text;
    return tmp.hash();
}

Checkpoint load_checkpoint(const fs::path& path) {
    auto in = open_in(path);
    return read_checkpoint(in);
}

void save_checkpoint(const fs::path& path, const Checkpoint& ck) {
    auto out = open_out(path);
    write_checkpoint(out, ck);
    if (!out) throw IoError(path.string(), "write failed");
}

ordered_json radius_json(const Matrix& w) {
    try {
        return spectral_radius(w);
    } catch (const SpectralRadiusNotConverged& e) {
        return ordered_json{{"converged", false}, {"last_estimate", e.last_estimate()}};
    }
}

// ---- train ----

struct RunOutcome {
    NetworkParams params;
    std::vector<EpochMetrics> history;
    bool diverged = false;
    std::string divergence;
};

RunOutcome run_training(const ExperimentConfig& cfg, const fs::path& dir, std::vector<std::string>& files,
                        bool verbose) {
    const Provenance prov{cfg.hash(), cfg.seed};
    ensure_dir(dir);
    const auto delays = build_delays(cfg);
    const auto source = build_source(cfg);
    {
        auto out = open_out(dir / "delays.json");
        write_delay_schedule_json(out, delays);
        files.push_back("delays.json");
    }

    auto metrics = open_out(dir / "metrics.csv");
    files.push_back("metrics.csv");
    csv_preamble(metrics, prov);
    write_metrics_header(metrics);

    NetworkParams latest;
    TrainHooks hooks;
    hooks.after_batch = [&](std::size_t, const NetworkParams& p) { latest = p; };
    hooks.after_epoch = [&](const EpochMetrics& m) {
        write_metrics_row(metrics, m);
        metrics.flush();
        if (verbose) {
            std::cerr << "epoch " << m.epoch << " loss " << m.train_loss << " train_acc " << m.train_acc
                      << " test_acc " << m.test_acc << " rate " << m.mean_spike_rate << '\n';
        }
        if (cfg.checkpoint_every > 0 && (m.epoch + 1) % cfg.checkpoint_every == 0) {
            const std::string name = "checkpoint_epoch" + std::to_string(m.epoch) + ".dnck";
            save_checkpoint(dir / name, Checkpoint{latest, delays, cfg.train.sim, std::nullopt});
            files.push_back(name);
        }
    };

    RunOutcome outcome;
    try {
        auto result = train(cfg.train, build_network(cfg), delays, *source, hooks);
        save_checkpoint(dir / "checkpoint.dnck", Checkpoint{result.params, delays, cfg.train.sim, result.optimizer});
        files.push_back("checkpoint.dnck");
        outcome.params = std::move(result.params);
        outcome.history = std::move(result.history);
    } catch (const TrainingDiverged& e) {
        save_checkpoint(dir / "checkpoint_diverged.dnck",
                        Checkpoint{e.last_good(), delays, cfg.train.sim, e.optimizer()});
        files.push_back("checkpoint_diverged.dnck");
        outcome.params = e.last_good();
        outcome.diverged = true;
        outcome.divergence = e.what();
    }
    return outcome;
}

ordered_json report_of(const ExperimentConfig& cfg, const RunOutcome& r, double elapsed_s) {
    ordered_json j{{"name", cfg.name},
                   {"config_hash", cfg.hash()},
                   {"seed", cfg.seed},
                   {"status", r.diverged ? "diverged" : "ok"}};
    if (r.diverged) j["error"] = r.divergence;
    j["epochs_completed"] = r.history.size();
    if (!r.history.empty()) {
        j["test_accuracy"] = r.history.back().test_acc;
        j["train_accuracy"] = r.history.back().train_acc;
        j["mean_spike_rate"] = r.history.back().mean_spike_rate;
    }
    j["tau_rec_ms"] = r.params.tau_rec_ms;
    j["tau_out_ms"] = r.params.tau_out_ms;
    j["u_th"] = r.params.u_th;
    j["spectral_radius"] = radius_json(r.params.w_rec);
    j["elapsed_s"] = elapsed_s;
    return j;
}

int cmd_train(const fs::path& config_path, std::optional<fs::path> out_override, std::optional<std::size_t> threads,
              bool quiet) {
    auto cfg = load_config(config_path);
    if (threads) cfg.train.threads = *threads;
    cfg.train.validate();
    const fs::path dir = out_override.value_or(cfg.output_dir);
    std::vector<std::string> files;
    const auto t0 = std::chrono::steady_clock::now();
    const auto outcome = run_training(cfg, dir, files, !quiet);
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_json(dir / "report.json", report_of(cfg, outcome, elapsed));
    files.push_back("report.json");
    write_manifest(dir, "train", {cfg.hash(), cfg.seed}, files);
    if (outcome.diverged) {
        std::cerr << "training diverged: " << outcome.divergence << '\n';
        return diverged;
    }
    std::cout << dir.string();
    if (!outcome.history.empty()) std::cout << ": test_accuracy " << outcome.history.back().test_acc;
    std::cout << '\n';
    return ok;
}

// ---- ablate ----

struct AblationFlags {
    bool no_delays = false;
    bool no_bf = false;
    bool no_recurrence = false;
    bool long_tau = false;
    double long_tau_ms = 2000.0;
    bool skip_baseline = false;
};

std::string ablation_name(const AblationFlags& f) {
    std::string s;
    auto add = [&](bool on, const char* n) {
        if (on) s += s.empty() ? n : std::string("+") + n;
    };
    add(f.no_delays, "no-delays");
    add(f.no_bf, "no-bf");
    add(f.no_recurrence, "no-recurrence");
    add(f.long_tau, "long-tau");
    return s;
}

ExperimentConfig ablate_config(ExperimentConfig cfg, const AblationFlags& f) {
    if (f.no_delays) cfg.delays.mode = DelayMode::none;
    if (f.no_bf) cfg.train.loss.beta = 0.0;
    if (f.no_recurrence) {
        cfg.network.recurrent = false;
        cfg.train.constraints.no_recurrence = true;
        cfg.train.mask.w_rec = false;
    }
    if (f.long_tau) {
        // The clamp would pull the constant straight back, so it is widened.
        cfg.network.tau_rec_ms = f.long_tau_ms;
        cfg.train.constraints.tau_rec.hi = std::max(cfg.train.constraints.tau_rec.hi, f.long_tau_ms);
    }
    cfg.name += "/" + ablation_name(f);
    return cfg;
}

int cmd_ablate(const fs::path& config_path, const AblationFlags& f, std::optional<fs::path> out_override,
               bool quiet) {
    if (!f.no_delays && !f.no_bf && !f.no_recurrence && !f.long_tau) {
        throw ConfigError("ablate", 0, "nothing to ablate: pass at least one of --no-delays, --no-bf, "
                                       "--no-recurrence, --long-tau");
    }
    if (f.no_delays && f.no_recurrence) {
        throw ConfigError("ablate", 0, "--no-delays contradicts --no-recurrence: delays act only through "
                                       "recurrent synapses");
    }
    if (!(f.long_tau_ms > 0.0)) throw ConfigError("ablate", 0, "--long-tau-ms must be positive");
    const auto base = load_config(config_path);
    const auto variant = ablate_config(base, f);
    variant.train.validate();
    const fs::path dir = out_override.value_or(base.output_dir / "ablation");
    ensure_dir(dir);

    std::vector<std::string> files;
    std::vector<std::string> sub_files;
    const auto t0 = std::chrono::steady_clock::now();
    const auto modified = run_training(variant, dir / "variant", sub_files, !quiet);
    double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_json(dir / "variant" / "report.json", report_of(variant, modified, elapsed));
    for (auto& s : sub_files) files.push_back("variant/" + s);

    std::optional<RunOutcome> baseline;
    if (!f.skip_baseline) {
        sub_files.clear();
        const auto t1 = std::chrono::steady_clock::now();
        baseline = run_training(base, dir / "baseline", sub_files, !quiet);
        elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count();
        write_json(dir / "baseline" / "report.json", report_of(base, *baseline, elapsed));
        for (auto& s : sub_files) files.push_back("baseline/" + s);
    }

    auto acc = [](const RunOutcome& r) -> ordered_json {
        if (r.history.empty()) return nullptr;
        return r.history.back().test_acc;
    };
    const Provenance prov{variant.hash(), variant.seed};
    {
        auto out = open_out(dir / "comparison.csv");
        csv_preamble(out, prov);
        out << "variant,test_accuracy,baseline_accuracy\n";
        out.precision(17);
        out << ablation_name(f) << ',' << acc(modified).dump() << ','
            << (baseline ? acc(*baseline).dump() : std::string()) << '\n';
        files.push_back("comparison.csv");
    }
    ordered_json report{{"variant", ablation_name(f)},
                        {"config_hash", prov.config_hash},
                        {"baseline_config_hash", base.hash()},
                        {"seed", prov.seed},
                        {"variant_accuracy", acc(modified)},
                        {"variant_status", modified.diverged ? "diverged" : "ok"}};
    if (baseline) {
        report["baseline_accuracy"] = acc(*baseline);
        report["baseline_status"] = baseline->diverged ? "diverged" : "ok";
    }
    write_json(dir / "report.json", report);
    files.push_back("report.json");
    write_manifest(dir, "ablate", prov, files);
    std::cout << report.dump(2) << '\n';
    return modified.diverged || (baseline && baseline->diverged) ? diverged : ok;
}

// ---- eval ----

int cmd_eval(const fs::path& checkpoint_path, std::optional<fs::path> config_path, std::optional<std::uint64_t> seed,
             const std::vector<double>& waits, const std::vector<std::size_t>& cues, std::size_t samples,
             std::size_t threads, std::optional<fs::path> out_path) {
    ExperimentConfig cfg;
    if (config_path) cfg = load_config(*config_path);
    if (seed) cfg.seed = *seed;
    if (cfg.task != TaskKind::cue) throw ConfigError("eval", 0, "eval sweeps are defined for the cue task only");
    const auto ck = load_checkpoint(checkpoint_path);
    if (ck.params.n_in() != cfg.cue.channels()) {
        throw ConfigError("eval", 0, "checkpoint expects " + std::to_string(ck.params.n_in()) +
                                         " input channels, task provides " + std::to_string(cfg.cue.channels()));
    }
    if (samples == 0) throw ConfigError("eval", 0, "--samples must be positive");
    for (double w : waits)
        if (!(w >= 0.0)) throw ConfigError("eval", 0, "--wait-ms values must be non-negative");

    CueTaskSource source(cfg.cue, derive_seed(cfg.seed, "eval-command"));
    std::ostringstream csv;
    csv.precision(17);
    csv_preamble(csv, {cfg.hash(), cfg.seed});
    csv << "variant,value,accuracy,n_samples,baseline\n";
    auto row = [&](const char* variant, double value, std::optional<double> baseline) {
        const double acc = evaluate_accuracy(ck.params, ck.delays, source, samples, ck.sim, threads);
        csv << variant << ',' << value << ',' << acc << ',' << samples << ',';
        if (baseline) csv << *baseline;
        csv << '\n';
    };
    if (waits.empty() && cues.empty()) {
        row("standard", 0.0, std::nullopt);
    }
    for (double w : waits) {
        source.set_eval_wait(w);
        row("wait_ms", w, std::nullopt);
    }
    source.set_eval_wait(std::nullopt);
    for (std::size_t n : cues) {
        if (n % 2 == 0) throw ConfigError("eval", 0, "--n-cues values must be odd");
        source.set_eval_cues(n);
        row("n_cues", static_cast<double>(n), probabilistic_baseline_accuracy(n, 7));
    }
    if (out_path) {
        if (out_path->has_parent_path()) ensure_dir(out_path->parent_path());
        auto out = open_out(*out_path);
        out << csv.str();
    } else {
        std::cout << csv.str();
    }
    return ok;
}

// ---- generate ----

int cmd_generate(const fs::path& config_path, std::size_t count, const fs::path& dir, std::optional<double> wait,
                 std::optional<std::size_t> n_cues, bool raster_csv) {
    auto cfg = load_config(config_path);
    if (cfg.task != TaskKind::cue) throw ConfigError(config_path.string(), 0, "generate supports the cue task only");
    if (n_cues) cfg.cue.n_cues = *n_cues;
    cfg.cue.validate();
    ensure_dir(dir);
    const Provenance prov{cfg.hash(), cfg.seed};
    std::vector<std::string> files;
    auto index = open_out(dir / "episodes.csv");
    csv_preamble(index, prov);
    index << "file,label,n_cues,wait_ms,steps,recall_begin,recall_end\n";
    for (std::size_t i = 0; i < count; ++i) {
        const auto seed = derive_seed(cfg.seed, "generate", i);
        const auto sample = wait ? generate_wait_variant(cfg.cue, *wait, seed) : generate_cue_sample(cfg.cue, seed);
        std::ostringstream name;
        name << "episode_" << i << ".dnep";
        {
            auto out = open_out(dir / name.str());
            write_episode(out, sample);
        }
        files.push_back(name.str());
        if (raster_csv) {
            const std::string csv_name = "episode_" + std::to_string(i) + "_raster.csv";
            auto out = open_out(dir / csv_name);
            csv_preamble(out, prov);
            write_raster_csv(out, sample.spikes);
            files.push_back(csv_name);
        }
        index << name.str() << ',' << sample.label << ',' << sample.cues.size() << ',' << sample.wait_ms << ','
              << sample.spikes.steps << ',' << sample.recall.begin << ',' << sample.recall.end << '\n';
    }
    files.push_back("episodes.csv");
    write_manifest(dir, "generate", prov, files);
    return ok;
}

// ---- memory-bound ----

int cmd_memory_bound(const std::vector<unsigned>& bits, const std::vector<double>& taus, double dt,
                     std::optional<fs::path> out_path) {
    if (bits.empty() || taus.empty()) throw ConfigError("memory-bound", 0, "--bits and --tau must be non-empty");
    const auto rows = memory_bound_surface(bits, taus, dt);
    std::ostringstream csv;
    const ordered_json args{{"bits", bits}, {"tau_ms", taus}, {"dt_ms", dt}};
    csv_preamble(csv, {hash_text(args.dump()), 0});
    write_memory_bound_csv(csv, rows);
    if (out_path) {
        if (out_path->has_parent_path()) ensure_dir(out_path->parent_path());
        auto out = open_out(*out_path);
        out << csv.str();
    } else {
        std::cout << csv.str();
    }
    return ok;
}

// ---- analyze / plot ----

int cmd_analyze(const fs::path& checkpoint_path, const fs::path& config_path, std::size_t sample,
                std::optional<double> wait, bool hann, const fs::path& dir) {
    const auto cfg = load_config(config_path);
    const auto ck = load_checkpoint(checkpoint_path);
    auto source = build_source(cfg);
    if (auto* cue = dynamic_cast<CueTaskSource*>(source.get()); cue && wait) cue->set_eval_wait(*wait);
    const Episode ep = source->eval_episode(sample);
    const auto trace = run_episode(ck.params, ck.delays, ep, ck.sim);
    const auto hidden = trace.hidden_spikes();
    SpectrumOptions opts;
    opts.window = hann ? SpectrumWindow::hann : SpectrumWindow::rectangular;
    const auto spectrum = spike_rate_spectrum(hidden, ck.sim.dt_ms, opts);

    ensure_dir(dir);
    const Provenance prov{cfg.hash(), cfg.seed};
    {
        auto out = open_out(dir / "raster.csv");
        csv_preamble(out, prov);
        write_raster_csv(out, hidden);
    }
    {
        auto out = open_out(dir / "spectrum.csv");
        csv_preamble(out, prov);
        write_spectrum_csv(out, spectrum);
    }
    const ordered_json j{{"config_hash", prov.config_hash},
                         {"seed", prov.seed},
                         {"sample", sample},
                         {"label", ep.label},
                         {"decision", readout_decision(trace, ep.readout)},
                         {"steps", trace.steps},
                         {"n_hidden", trace.n_hidden},
                         {"dt_ms", trace.dt_ms},
                         {"spike_count", trace.spike_count()},
                         {"tau_rec_ms", ck.params.tau_rec_ms},
                         {"tau_out_ms", ck.params.tau_out_ms},
                         {"u_th", ck.params.u_th},
                         {"spectral_radius", radius_json(ck.params.w_rec)}};
    write_json(dir / "analysis.json", j);
    write_manifest(dir, "analyze", prov, {"raster.csv", "spectrum.csv", "analysis.json"});
    std::cout << j.dump(2) << '\n';
    return ok;
}

// Reads CSV rows, skipping '#' comments and the header line.
std::vector<std::vector<double>> read_numeric_csv(const fs::path& path) {
    auto in = open_in(path);
    std::vector<std::vector<double>> rows;
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (header) {
            header = false;
            continue;
        }
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                row.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw IoError(path.string(), "malformed number '" + cell + "'");
            }
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

int cmd_plot(const fs::path& dir) {
    nlohmann::json info;
    {
        auto in = open_in(dir / "analysis.json");
        try {
            in >> info;
        } catch (const nlohmann::json::exception& e) {
            throw IoError((dir / "analysis.json").string(), e.what());
        }
    }
    SpikeTrain raster(info.at("steps").get<std::size_t>(), info.at("n_hidden").get<std::size_t>(),
                      info.at("dt_ms").get<double>());
    for (const auto& r : read_numeric_csv(dir / "raster.csv")) {
        if (r.size() != 3) throw IoError((dir / "raster.csv").string(), "expected t,neuron,spike");
        const auto t = static_cast<std::size_t>(r[0]);
        const auto j = static_cast<std::size_t>(r[1]);
        if (t >= raster.steps || j >= raster.channels) throw IoError((dir / "raster.csv").string(), "index out of range");
        raster.at(t, j) = 1;
    }
    Spectrum spectrum;
    for (const auto& r : read_numeric_csv(dir / "spectrum.csv")) {
        if (r.size() != 2) throw IoError((dir / "spectrum.csv").string(), "expected frequency_hz,magnitude");
        spectrum.frequencies_hz.push_back(r[0]);
        spectrum.magnitudes.push_back(r[1]);
    }
    render_raster(raster).write_png(dir / "raster.png");
    render_spectrum(spectrum).write_png(dir / "spectrum.png");
    std::cout << (dir / "raster.png").string() << '\n' << (dir / "spectrum.png").string() << '\n';
    return ok;
}

template <typename F>
int guarded(F&& f) {
    try {
        return f();
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return invalid;
    } catch (const InvalidArgument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return invalid;
    } catch (const TrainingDiverged& e) {
        std::cerr << "diverged: " << e.what() << '\n';
        return diverged;
    } catch (const NumericalDivergence& e) {
        std::cerr << "diverged: " << e.what() << '\n';
        return diverged;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << '\n';
        return io_failure;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "i/o error: " << e.what() << '\n';
        return io_failure;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Recurrent spiking network with synaptic delays: training and analysis"};
    app.require_subcommand(1);
    int code = ok;

    bool quiet = false;
    app.add_flag("-q,--quiet", quiet, "Suppress per-epoch progress on stderr");

    // train
    auto* train_cmd = app.add_subcommand("train", "Train a network from a YAML config");
    fs::path train_config;
    std::optional<fs::path> train_out;
    std::optional<std::size_t> train_threads;
    train_cmd->add_option("config", train_config, "Experiment config (YAML)")->required();
    train_cmd->add_option("-o,--output", train_out, "Output directory (overrides output_dir)");
    train_cmd->add_option("-j,--threads", train_threads, "Worker threads")->check(CLI::PositiveNumber);
    train_cmd->callback([&] { code = guarded([&] { return cmd_train(train_config, train_out, train_threads, quiet); }); });

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on task variants");
    fs::path eval_ckpt;
    std::optional<fs::path> eval_config;
    std::optional<std::uint64_t> eval_seed;
    std::vector<double> eval_waits;
    std::vector<std::size_t> eval_cues;
    std::size_t eval_samples = 512;
    std::size_t eval_threads = 1;
    std::optional<fs::path> eval_out;
    eval_cmd->add_option("checkpoint", eval_ckpt, "Checkpoint file")->required();
    eval_cmd->add_option("-c,--config", eval_config, "Config supplying the task (defaults otherwise)");
    eval_cmd->add_option("--seed", eval_seed, "Root seed override");
    eval_cmd->add_option("--wait-ms", eval_waits, "Fixed wait times to sweep")->delimiter(',');
    eval_cmd->add_option("--n-cues", eval_cues, "Cue counts to sweep (odd)")->delimiter(',');
    eval_cmd->add_option("-n,--samples", eval_samples, "Episodes per sweep value");
    eval_cmd->add_option("-j,--threads", eval_threads, "Worker threads")->check(CLI::PositiveNumber);
    eval_cmd->add_option("-o,--output", eval_out, "CSV output path (stdout otherwise)");
    eval_cmd->callback([&] {
        code = guarded([&] {
            return cmd_eval(eval_ckpt, eval_config, eval_seed, eval_waits, eval_cues, eval_samples, eval_threads,
                            eval_out);
        });
    });

    // generate
    auto* gen_cmd = app.add_subcommand("generate", "Write cue-task episodes to disk");
    fs::path gen_config;
    std::size_t gen_count = 1;
    fs::path gen_out = "episodes";
    std::optional<double> gen_wait;
    std::optional<std::size_t> gen_cues;
    bool gen_csv = false;
    gen_cmd->add_option("config", gen_config, "Experiment config (YAML)")->required();
    gen_cmd->add_option("-n,--count", gen_count, "Number of episodes");
    gen_cmd->add_option("-o,--output", gen_out, "Output directory");
    gen_cmd->add_option("--wait-ms", gen_wait, "Fixed wait instead of the configured range");
    gen_cmd->add_option("--n-cues", gen_cues, "Override the number of cues");
    gen_cmd->add_flag("--raster-csv", gen_csv, "Also write each input raster as CSV");
    gen_cmd->callback([&] {
        code = guarded([&] { return cmd_generate(gen_config, gen_count, gen_out, gen_wait, gen_cues, gen_csv); });
    });

    // ablate
    auto* abl_cmd = app.add_subcommand("ablate", "Train a modified network next to the baseline");
    fs::path abl_config;
    AblationFlags abl;
    std::optional<fs::path> abl_out;
    abl_cmd->add_option("config", abl_config, "Experiment config (YAML)")->required();
    abl_cmd->add_flag("--no-delays", abl.no_delays, "Set every transmission delay to zero");
    abl_cmd->add_flag("--no-bf", abl.no_bf, "Drop the branching-factor term (beta = 0)");
    abl_cmd->add_flag("--no-recurrence", abl.no_recurrence, "Remove recurrent connections");
    abl_cmd->add_flag("--long-tau", abl.long_tau, "Use a long recurrent time constant, widening its clamp");
    abl_cmd->add_option("--long-tau-ms", abl.long_tau_ms, "Time constant for --long-tau");
    abl_cmd->add_flag("--skip-baseline", abl.skip_baseline, "Do not retrain the unmodified network");
    abl_cmd->add_option("-o,--output", abl_out, "Output directory");
    abl_cmd->callback([&] { code = guarded([&] { return cmd_ablate(abl_config, abl, abl_out, quiet); }); });

    // memory-bound
    auto* mb_cmd = app.add_subcommand("memory-bound", "Analytical and empirical memory bound of a leaking membrane");
    std::vector<unsigned> mb_bits;
    std::vector<double> mb_taus;
    double mb_dt = 1.0;
    std::optional<fs::path> mb_out;
    mb_cmd->add_option("--bits", mb_bits, "Bit widths")->delimiter(',')->required();
    mb_cmd->add_option("--tau", mb_taus, "Time constants in ms")->delimiter(',')->required();
    mb_cmd->add_option("--dt", mb_dt, "Tick in ms");
    mb_cmd->add_option("-o,--output", mb_out, "CSV output path (stdout otherwise)");
    mb_cmd->callback([&] { code = guarded([&] { return cmd_memory_bound(mb_bits, mb_taus, mb_dt, mb_out); }); });

    // analyze
    auto* an_cmd = app.add_subcommand("analyze", "Raster, rate spectrum and spectral radius of a trained network");
    fs::path an_ckpt, an_config;
    std::size_t an_sample = 0;
    std::optional<double> an_wait;
    bool an_hann = false;
    fs::path an_out = "analysis";
    an_cmd->add_option("checkpoint", an_ckpt, "Checkpoint file")->required();
    an_cmd->add_option("-c,--config", an_config, "Config supplying the task")->required();
    an_cmd->add_option("--sample", an_sample, "Evaluation episode index");
    an_cmd->add_option("--wait-ms", an_wait, "Fixed wait for the episode");
    an_cmd->add_flag("--hann", an_hann, "Hann window for the spectrum");
    an_cmd->add_option("-o,--output", an_out, "Output directory");
    an_cmd->callback([&] {
        code = guarded([&] { return cmd_analyze(an_ckpt, an_config, an_sample, an_wait, an_hann, an_out); });
    });

    // plot
    auto* plot_cmd = app.add_subcommand("plot", "Render raster.png and spectrum.png from an analyze directory");
    fs::path plot_dir;
    plot_cmd->add_option("dir", plot_dir, "Directory written by analyze")->required();
    plot_cmd->callback([&] { code = guarded([&] { return cmd_plot(plot_dir); }); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return invalid;
    }
    return code;
}
