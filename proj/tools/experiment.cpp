#include "experiment.hpp"

#include "delaynet/errors.hpp"
#include "delaynet/rng.hpp"

#include "json.hpp"

#include <yaml-cpp/yaml.h>

#include <fstream>
#include <set>
#include <sstream>

namespace delaynet::cli {

namespace {

std::string located(const std::string& source, int line, const std::string& what) {
    return line > 0 ? source + ":" + std::to_string(line) + ": " + what : source + ": " + what;
}

int line_of(const YAML::Node& n) {
    const auto m = n.Mark();
    return m.is_null() ? 0 : m.line + 1;
}

// A mapping whose keys are checked off as they are read; leftovers are errors.
class Section {
public:
    Section(YAML::Node node, std::string path, const std::string& source)
        : node_(std::move(node)), path_(std::move(path)), source_(source) {
        if (node_ && !node_.IsNull() && !node_.IsMap()) fail(node_, "'" + path_ + "' must be a mapping");
    }

    bool has(const std::string& key) const { return node_ && node_.IsMap() && node_[key]; }

    template <typename T>
    void read(const std::string& key, T& out) {
        if (!has(key)) return;
        seen_.insert(key);
        const YAML::Node v = node_[key];
        try {
            out = v.as<T>();
        } catch (const YAML::Exception&) {
            fail(v, "'" + qualified(key) + "' has the wrong type");
        }
    }

    template <typename T>
    void read_list(const std::string& key, std::vector<T>& out) {
        if (!has(key)) return;
        seen_.insert(key);
        const YAML::Node v = node_[key];
        if (!v.IsSequence()) fail(v, "'" + qualified(key) + "' must be a list");
        std::vector<T> xs;
        for (const auto& item : v) {
            try {
                xs.push_back(item.as<T>());
            } catch (const YAML::Exception&) {
                fail(item, "'" + qualified(key) + "' has an entry of the wrong type");
            }
        }
        out = std::move(xs);
    }

    // Reads a string and maps it through `choices`.
    template <typename E>
    void read_enum(const std::string& key, E& out, std::initializer_list<std::pair<const char*, E>> choices) {
        if (!has(key)) return;
        std::string s;
        read(key, s);
        std::string allowed;
        for (const auto& [name, value] : choices) {
            if (s == name) {
                out = value;
                return;
            }
            allowed += allowed.empty() ? name : std::string(", ") + name;
        }
        fail(node_[key], "'" + qualified(key) + "' must be one of: " + allowed);
    }

    Section child(const std::string& key) {
        seen_.insert(key);
        return Section(has(key) ? node_[key] : YAML::Node(), qualified(key), source_);
    }

    int line(const std::string& key) const { return has(key) ? line_of(node_[key]) : line_of(node_); }

    void finish() const {
        if (!node_ || !node_.IsMap()) return;
        for (const auto& kv : node_) {
            const auto key = kv.first.as<std::string>();
            if (!seen_.count(key)) fail(kv.first, "unknown key '" + qualified(key) + "'");
        }
    }

    [[noreturn]] void fail(const YAML::Node& at, const std::string& what) const {
        throw ConfigError(source_, line_of(at), what);
    }

private:
    std::string qualified(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    YAML::Node node_;
    std::string path_;
    const std::string& source_;
    std::set<std::string> seen_;
};

const char* reset_name(ResetMode m) { return m == ResetMode::soft_subtract ? "soft" : "hard"; }
const char* bound_name(InitBound b) { return b == InitBound::sqrt6_over_n ? "sqrt6_over_n" : "sqrt_6_over_n"; }

} // namespace

ConfigError::ConfigError(const std::string& source, int line, const std::string& what)
    : std::runtime_error(located(source, line, what)), line_(line) {}

ExperimentConfig parse_config(const std::string& text, const std::string& source) {
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        throw ConfigError(source, e.mark.is_null() ? 0 : e.mark.line + 1, e.msg);
    }
    if (!root.IsMap()) throw ConfigError(source, line_of(root), "config must be a mapping");

    ExperimentConfig cfg;
    Section top(root, "", source);
    if (!top.has("version")) throw ConfigError(source, 1, "missing 'version' (expected " +
                                                               std::to_string(config_version) + ")");
    int version = 0;
    top.read("version", version);
    if (version != config_version) {
        throw ConfigError(source, top.line("version"),
                          "unsupported config version " + std::to_string(version) + " (expected " +
                              std::to_string(config_version) + ")");
    }
    top.read("name", cfg.name);
    top.read("seed", cfg.seed);
    std::string out_dir = cfg.output_dir.string();
    top.read("output_dir", out_dir);
    cfg.output_dir = out_dir;

    auto task = top.child("task");
    task.read_enum("kind", cfg.task, {{"cue", TaskKind::cue}, {"psmnist", TaskKind::psmnist}});
    task.read("n_cues", cfg.cue.n_cues);
    task.read("cue_ms", cfg.cue.cue_ms);
    task.read("pause_ms", cfg.cue.pause_ms);
    if (task.has("wait_ms")) {
        std::vector<double> wait;
        task.read_list("wait_ms", wait);
        if (wait.size() == 1) wait.push_back(wait[0]);
        if (wait.size() != 2) throw ConfigError(source, task.line("wait_ms"), "'task.wait_ms' must be [min, max]");
        cfg.cue.wait_min_ms = wait[0];
        cfg.cue.wait_max_ms = wait[1];
    }
    task.read("recall_ms", cfg.cue.recall_ms);
    task.read("group_size", cfg.cue.group_size);
    task.read("cue_hz", cfg.cue.cue_hz);
    task.read("noise_hz", cfg.cue.noise_hz);
    task.read("recall_hz", cfg.cue.recall_hz);
    std::string data_dir;
    task.read("data_dir", data_dir);
    cfg.psmnist.data_dir = data_dir;
    task.read("train_limit", cfg.psmnist.train_limit);
    task.read("test_limit", cfg.psmnist.test_limit);
    task.read("readout_ticks", cfg.psmnist.readout_ticks);
    task.finish();

    auto net = top.child("network");
    net.read("n_hidden", cfg.network.n_hidden);
    net.read("tau_rec_ms", cfg.network.tau_rec_ms);
    net.read("tau_out_ms", cfg.network.tau_out_ms);
    net.read("u_th", cfg.network.u_th);
    net.read("recurrent", cfg.network.recurrent);
    net.read("dt_ms", cfg.dt_ms);
    net.read_enum("reset", cfg.reset, {{"soft", ResetMode::soft_subtract}, {"hard", ResetMode::hard_zero}});
    net.read_enum("rec_init", cfg.network.rec_bound,
                  {{"sqrt6_over_n", InitBound::sqrt6_over_n}, {"sqrt_6_over_n", InitBound::sqrt_6_over_n}});
    net.read_enum("io_init", cfg.network.io_bound,
                  {{"sqrt6_over_n", InitBound::sqrt6_over_n}, {"sqrt_6_over_n", InitBound::sqrt_6_over_n}});
    net.finish();

    auto delays = top.child("delays");
    delays.read_enum("mode", cfg.delays.mode,
                     {{"none", DelayMode::none}, {"fraction", DelayMode::fraction}, {"radius", DelayMode::radius}});
    delays.read_list("delays_ms", cfg.delays.delays_ms);
    delays.read_list("fractions", cfg.delays.fractions);
    delays.read_list("radius_fracs", cfg.delays.radius_fracs);
    const int delays_line = delays.line("mode");
    delays.finish();

    auto opt = top.child("optimizer");
    opt.read_enum("kind", cfg.train.optimizer, {{"madgrad", OptimizerKind::madgrad}, {"sgd", OptimizerKind::sgd}});
    opt.read("lr", cfg.train.madgrad.lr);
    cfg.train.sgd_lr = cfg.train.madgrad.lr;
    opt.read("momentum", cfg.train.madgrad.momentum);
    opt.read("eps", cfg.train.madgrad.eps);
    opt.finish();

    auto loss = top.child("loss");
    loss.read("beta", cfg.train.loss.beta);
    loss.read("clip_max_norm", cfg.train.loss.clip_max_norm);
    loss.read("bf_per_neuron", cfg.train.loss.bf_per_neuron);
    loss.read_enum("bf_reduction", cfg.train.loss.bf_reduction,
                   {{"sum", BfReduction::sum}, {"mean_over_time", BfReduction::mean_over_time}});
    loss.finish();

    auto cons = top.child("constraints");
    std::vector<double> tau_clamp;
    cons.read_list("tau_clamp_ms", tau_clamp);
    if (!tau_clamp.empty()) {
        if (tau_clamp.size() != 2) {
            throw ConfigError(source, cons.line("tau_clamp_ms"), "'constraints.tau_clamp_ms' must be [lo, hi]");
        }
        cfg.train.constraints.tau_rec = {tau_clamp[0], tau_clamp[1]};
        cfg.train.constraints.tau_out = {tau_clamp[0], tau_clamp[1]};
    }
    if (cons.has("tau_rec_clamp_ms")) {
        cons.read_list("tau_rec_clamp_ms", tau_clamp);
        if (tau_clamp.size() != 2) {
            throw ConfigError(source, cons.line("tau_rec_clamp_ms"),
                              "'constraints.tau_rec_clamp_ms' must be [lo, hi]");
        }
        cfg.train.constraints.tau_rec = {tau_clamp[0], tau_clamp[1]};
    }
    cons.read("assert", cfg.train.assert_constraints);
    const int cons_line = cons.line("tau_clamp_ms");
    cons.finish();

    auto tr = top.child("training");
    tr.read("epochs", cfg.train.epochs);
    tr.read("samples_per_epoch", cfg.train.samples_per_epoch);
    tr.read("batch_size", cfg.train.batch_size);
    tr.read("eval_samples", cfg.train.eval_samples);
    tr.read("threads", cfg.train.threads);
    tr.read("checkpoint_every", cfg.checkpoint_every);
    const int train_line = line_of(root["training"] ? root["training"] : root);
    tr.finish();
    top.finish();

    cfg.network.n_in = cfg.task == TaskKind::cue ? cfg.cue.channels() : 1;
    cfg.network.n_out = cfg.task == TaskKind::cue ? 2 : 10;
    cfg.train.sim = {cfg.dt_ms, cfg.reset};
    if (!cfg.network.recurrent) {
        cfg.train.constraints.no_recurrence = true;
        cfg.train.mask.w_rec = false;
    }

    // Semantic checks reuse the library's validators; their messages are
    // attached to the section they came from.
    auto check = [&](int line, auto&& fn) {
        try {
            fn();
        } catch (const InvalidArgument& e) {
            throw ConfigError(source, line, e.what());
        }
    };
    check(line_of(root["task"] ? root["task"] : root), [&] {
        if (cfg.task == TaskKind::cue) cfg.cue.validate();
        if (cfg.task == TaskKind::psmnist && cfg.psmnist.data_dir.empty()) {
            throw InvalidArgument("psmnist task needs 'task.data_dir'");
        }
    });
    check(cons_line, [&] { cfg.train.constraints.validate(); });
    check(line_of(root["loss"] ? root["loss"] : root), [&] { cfg.train.loss.validate(); });
    check(train_line, [&] { cfg.train.validate(); });
    check(line_of(root["network"] ? root["network"] : root), [&] {
        if (cfg.network.n_hidden == 0) throw InvalidArgument("'network.n_hidden' must be positive");
        if (!(cfg.network.tau_rec_ms > 0.0) || !(cfg.network.tau_out_ms > 0.0)) {
            throw InvalidArgument("network time constants must be positive");
        }
    });
    check(delays_line, [&] {
        const auto& d = cfg.delays;
        if (d.mode == DelayMode::fraction && d.fractions.size() != d.delays_ms.size()) {
            throw InvalidArgument("'delays.fractions' and 'delays.delays_ms' must have the same length");
        }
        if (d.mode == DelayMode::radius && d.radius_fracs.size() + 1 != d.delays_ms.size()) {
            throw InvalidArgument("'delays.radius_fracs' must have one entry fewer than 'delays.delays_ms'");
        }
        for (double v : d.delays_ms)
            if (!(v >= 0.0)) throw InvalidArgument("delays must be non-negative");
    });
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError(path.string(), "cannot open config");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.string());
}

std::string ExperimentConfig::canonical_json() const {
    using nlohmann::ordered_json;
    ordered_json j;
    j["version"] = config_version;
    j["name"] = name;
    j["seed"] = seed;
    if (task == TaskKind::cue) {
        j["task"] = {{"kind", "cue"},          {"n_cues", cue.n_cues},       {"cue_ms", cue.cue_ms},
                     {"pause_ms", cue.pause_ms}, {"wait_ms", {cue.wait_min_ms, cue.wait_max_ms}},
                     {"recall_ms", cue.recall_ms}, {"group_size", cue.group_size}, {"cue_hz", cue.cue_hz},
                     {"noise_hz", cue.noise_hz}, {"recall_hz", cue.recall_hz}};
    } else {
        j["task"] = {{"kind", "psmnist"},
                     {"data_dir", psmnist.data_dir.string()},
                     {"train_limit", psmnist.train_limit},
                     {"test_limit", psmnist.test_limit},
                     {"readout_ticks", psmnist.readout_ticks}};
    }
    j["network"] = {{"n_hidden", network.n_hidden},     {"tau_rec_ms", network.tau_rec_ms},
                    {"tau_out_ms", network.tau_out_ms}, {"u_th", network.u_th},
                    {"recurrent", network.recurrent},   {"dt_ms", dt_ms},
                    {"reset", reset_name(reset)},       {"rec_init", bound_name(network.rec_bound)},
                    {"io_init", bound_name(network.io_bound)}};
    const char* mode = delays.mode == DelayMode::none ? "none" : delays.mode == DelayMode::fraction ? "fraction" : "radius";
    j["delays"] = {{"mode", mode},
                   {"delays_ms", delays.delays_ms},
                   {"fractions", delays.fractions},
                   {"radius_fracs", delays.radius_fracs}};
    j["optimizer"] = {{"kind", train.optimizer == OptimizerKind::madgrad ? "madgrad" : "sgd"},
                      {"lr", train.madgrad.lr},
                      {"momentum", train.madgrad.momentum},
                      {"eps", train.madgrad.eps}};
    j["loss"] = {{"beta", train.loss.beta},
                 {"clip_max_norm", train.loss.clip_max_norm},
                 {"bf_per_neuron", train.loss.bf_per_neuron},
                 {"bf_reduction", train.loss.bf_reduction == BfReduction::sum ? "sum" : "mean_over_time"}};
    j["constraints"] = {{"tau_rec_clamp_ms", {train.constraints.tau_rec.lo, train.constraints.tau_rec.hi}},
                        {"tau_out_clamp_ms", {train.constraints.tau_out.lo, train.constraints.tau_out.hi}},
                        {"assert", train.assert_constraints}};
    // Thread count and output location do not change results.
    j["training"] = {{"epochs", train.epochs},
                     {"samples_per_epoch", train.samples_per_epoch},
                     {"batch_size", train.batch_size},
                     {"eval_samples", train.eval_samples},
                     {"checkpoint_every", checkpoint_every}};
    return j.dump();
}

std::string ExperimentConfig::hash() const {
    // FNV-1a over the canonical text.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : canonical_json()) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream ss;
    ss << std::hex;
    ss.width(16);
    ss.fill('0');
    ss << h;
    return ss.str();
}

DelaySchedule build_delays(const ExperimentConfig& cfg) {
    const std::size_t n = cfg.network.n_hidden;
    const auto& d = cfg.delays;
    switch (d.mode) {
    case DelayMode::none:
        return DelaySchedule::uniform(n, 0.0, cfg.dt_ms);
    case DelayMode::fraction:
        return assign_delays_by_fraction(n, d.fractions, d.delays_ms, cfg.dt_ms, derive_seed(cfg.seed, "delays"));
    case DelayMode::radius:
        return assign_delays_by_radius(place_neurons(n, derive_seed(cfg.seed, "topology")), d.radius_fracs,
                                       d.delays_ms, cfg.dt_ms);
    }
    throw InvalidArgument("unknown delay mode");
}

NetworkParams build_network(const ExperimentConfig& cfg) {
    return initialize_network(cfg.network, cfg.seed);
}

std::unique_ptr<EpisodeSource> build_source(const ExperimentConfig& cfg) {
    if (cfg.task == TaskKind::cue) return std::make_unique<CueTaskSource>(cfg.cue, cfg.seed);
    const auto perm_seed = derive_seed(cfg.seed, "psmnist/permutation");
    auto limit = [](std::size_t v) { return v == 0 ? std::nullopt : std::optional<std::size_t>(v); };
    auto train = std::make_shared<const PsMnist>(
        PsMnist::load(cfg.psmnist.data_dir, "train", perm_seed, limit(cfg.psmnist.train_limit)));
    auto test = std::make_shared<const PsMnist>(
        PsMnist::load(cfg.psmnist.data_dir, "t10k", perm_seed, limit(cfg.psmnist.test_limit)));
    return std::make_unique<PsMnistSource>(std::move(train), std::move(test), cfg.seed, cfg.psmnist.readout_ticks);
}

} // namespace delaynet::cli
