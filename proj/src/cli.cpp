#include "cspcl/cli.hpp"

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <thread>

#include "cspcl/errors.hpp"
#include "json.hpp"

namespace cspcl {

namespace {

using ojson = nlohmann::ordered_json;

[[noreturn]] void bad_config(const std::string& msg) { throw ConfigError("config: " + msg); }

void expect_keys(const ojson& j, const std::string& ctx,
                 std::initializer_list<const char*> allowed) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* a : allowed)
            if (it.key() == a) {
                known = true;
                break;
            }
        if (!known) bad_config("unknown key '" + it.key() + "' in " + ctx);
    }
}

double jget_double(const ojson& j, const std::string& ctx, const char* key, double cur) {
    if (!j.contains(key)) return cur;
    const auto& v = j.at(key);
    if (!v.is_number()) bad_config(ctx + "." + key + " must be a number");
    return v.get<double>();
}

std::uint64_t jget_u64(const ojson& j, const std::string& ctx, const char* key,
                       std::uint64_t cur) {
    if (!j.contains(key)) return cur;
    const auto& v = j.at(key);
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() &&
                                   v.get<std::int64_t>() < 0))
        bad_config(ctx + "." + key + " must be a non-negative integer");
    return v.get<std::uint64_t>();
}

std::int64_t jget_i64(const ojson& j, const std::string& ctx, const char* key,
                      std::int64_t cur) {
    if (!j.contains(key)) return cur;
    const auto& v = j.at(key);
    if (!v.is_number_integer()) bad_config(ctx + "." + key + " must be an integer");
    return v.get<std::int64_t>();
}

bool jget_bool(const ojson& j, const std::string& ctx, const char* key, bool cur) {
    if (!j.contains(key)) return cur;
    const auto& v = j.at(key);
    if (!v.is_boolean()) bad_config(ctx + "." + key + " must be a boolean");
    return v.get<bool>();
}

std::size_t jget_size(const ojson& j, const std::string& ctx, const char* key,
                      std::size_t cur) {
    return static_cast<std::size_t>(jget_u64(j, ctx, key, cur));
}

void parse_scenario(const ojson& j, SyntheticScenario& s) {
    expect_keys(j, "scenario", {"k", "n", "dim", "proto_geometry", "query_init", "seed"});
    s.k = jget_size(j, "scenario", "k", s.k);
    s.n = jget_size(j, "scenario", "n", s.n);
    s.dim = jget_size(j, "scenario", "dim", s.dim);
    s.seed = jget_u64(j, "scenario", "seed", s.seed);
    if (j.contains("proto_geometry")) {
        const auto& g = j.at("proto_geometry");
        if (g.is_string()) {
            std::string name = g.get<std::string>();
            if (name == "orthogonal")
                s.proto_geometry = ProtoGeometry::Orthogonal;
            else if (name == "random_unit")
                s.proto_geometry = ProtoGeometry::RandomUnit;
            else
                bad_config("scenario.proto_geometry: unknown geometry '" + name + "'");
            s.paired_sims.clear();
        } else if (g.is_object()) {
            expect_keys(g, "scenario.proto_geometry", {"paired_similar"});
            if (!g.contains("paired_similar") || !g.at("paired_similar").is_array())
                bad_config("scenario.proto_geometry.paired_similar must be an array");
            s.proto_geometry = ProtoGeometry::PairedSimilar;
            s.paired_sims.clear();
            for (const auto& el : g.at("paired_similar")) {
                if (!el.is_array() || el.size() != 3 || !el[0].is_number_integer() ||
                    !el[1].is_number_integer() || !el[2].is_number())
                    bad_config(
                        "scenario.proto_geometry.paired_similar entries must be "
                        "[k1, k2, similarity] triples");
                PairedSim p;
                p.k1 = el[0].get<std::size_t>();
                p.k2 = el[1].get<std::size_t>();
                p.target = el[2].get<double>();
                s.paired_sims.push_back(p);
            }
        } else {
            bad_config(
                "scenario.proto_geometry must be \"orthogonal\", \"random_unit\" or "
                "{\"paired_similar\": [[k1, k2, sim], ...]}");
        }
    }
    if (j.contains("query_init")) {
        const auto& q = j.at("query_init");
        if (q.is_string()) {
            std::string name = q.get<std::string>();
            if (name != "random_unit")
                bad_config("scenario.query_init: unknown initializer '" + name + "'");
            s.query_init = QueryInit::RandomUnit;
        } else if (q.is_object()) {
            expect_keys(q, "scenario.query_init", {"near_prototype"});
            if (!q.contains("near_prototype") || !q.at("near_prototype").is_number())
                bad_config("scenario.query_init.near_prototype must be a noise scale number");
            s.query_init = QueryInit::NearPrototype;
            s.noise_scale = q.at("near_prototype").get<double>();
        } else {
            bad_config(
                "scenario.query_init must be \"random_unit\" or {\"near_prototype\": sigma}");
        }
    }
}

std::vector<OutputFormat> parse_formats_json(const ojson& arr) {
    std::vector<OutputFormat> out;
    for (const auto& el : arr) {
        if (!el.is_string()) bad_config("output.formats entries must be \"csv\" or \"json\"");
        std::string s = el.get<std::string>();
        if (s == "csv")
            out.push_back(OutputFormat::Csv);
        else if (s == "json")
            out.push_back(OutputFormat::Json);
        else
            bad_config("output.formats: unknown format '" + s + "'");
    }
    return out;
}

void parse_into(const ojson& j, ExperimentConfig& cfg) {
    expect_keys(j, "the top level",
                {"scenario", "loss", "losses", "csp", "optimizer", "layers", "output"});
    if (j.contains("scenario")) {
        if (!j.at("scenario").is_object()) bad_config("scenario must be an object");
        parse_scenario(j.at("scenario"), cfg.scenario);
    }
    if (j.contains("loss")) {
        if (!j.at("loss").is_string()) bad_config("loss must be a string");
        cfg.loss = parse_loss_kind(j.at("loss").get<std::string>());
    }
    if (j.contains("losses")) {
        if (!j.at("losses").is_array()) bad_config("losses must be an array of loss names");
        cfg.losses.clear();
        for (const auto& el : j.at("losses")) {
            if (!el.is_string()) bad_config("losses entries must be strings");
            cfg.losses.push_back(parse_loss_kind(el.get<std::string>()));
        }
    }
    if (j.contains("csp")) {
        const auto& c = j.at("csp");
        if (!c.is_object()) bad_config("csp must be an object");
        expect_keys(c, "csp",
                    {"alpha", "beta", "gamma", "tau", "log_floor", "norm_floor",
                     "grad_through_repulsion", "grad_to_prototypes"});
        cfg.csp.alpha = jget_double(c, "csp", "alpha", cfg.csp.alpha);
        cfg.csp.beta = jget_double(c, "csp", "beta", cfg.csp.beta);
        cfg.csp.gamma = jget_double(c, "csp", "gamma", cfg.csp.gamma);
        cfg.csp.tau = jget_double(c, "csp", "tau", cfg.csp.tau);
        cfg.csp.log_floor = jget_double(c, "csp", "log_floor", cfg.csp.log_floor);
        cfg.csp.norm_floor = jget_double(c, "csp", "norm_floor", cfg.csp.norm_floor);
        cfg.csp.grad_through_repulsion =
            jget_bool(c, "csp", "grad_through_repulsion", cfg.csp.grad_through_repulsion);
        cfg.csp.grad_to_prototypes =
            jget_bool(c, "csp", "grad_to_prototypes", cfg.csp.grad_to_prototypes);
    }
    if (j.contains("optimizer")) {
        const auto& o = j.at("optimizer");
        if (!o.is_object()) bad_config("optimizer must be an object");
        expect_keys(o, "optimizer", {"lr", "steps", "record_every"});
        cfg.optimizer.lr = jget_double(o, "optimizer", "lr", cfg.optimizer.lr);
        cfg.optimizer.steps = jget_i64(o, "optimizer", "steps", cfg.optimizer.steps);
        cfg.optimizer.record_every =
            jget_i64(o, "optimizer", "record_every", cfg.optimizer.record_every);
    }
    if (j.contains("layers")) {
        const auto& l = j.at("layers");
        if (!l.is_object()) bad_config("layers must be an object");
        expect_keys(l, "layers", {"count", "target_set"});
        cfg.layers.count = jget_size(l, "layers", "count", cfg.layers.count);
        if (l.contains("target_set")) {
            if (!l.at("target_set").is_array())
                bad_config("layers.target_set must be an array of layer indices");
            cfg.layers.target_set.clear();
            for (const auto& el : l.at("target_set")) {
                if (!el.is_number_integer() || el.get<std::int64_t>() < 0)
                    bad_config("layers.target_set entries must be non-negative integers");
                cfg.layers.target_set.push_back(el.get<std::size_t>());
            }
        } else if (j.at("layers").contains("count")) {
            // A count without an explicit target set keeps "all layers".
            cfg.layers.target_set = LayerSpec::all_layers(cfg.layers.count).target_set;
        }
    }
    if (j.contains("output")) {
        const auto& o = j.at("output");
        if (!o.is_object()) bad_config("output must be an object");
        expect_keys(o, "output", {"directory", "formats"});
        if (o.contains("directory")) {
            if (!o.at("directory").is_string()) bad_config("output.directory must be a string");
            cfg.output.directory = o.at("directory").get<std::string>();
        }
        if (o.contains("formats")) {
            if (!o.at("formats").is_array())
                bad_config("output.formats must be an array of \"csv\"/\"json\"");
            cfg.output.formats = parse_formats_json(o.at("formats"));
        }
    }
}

ojson scenario_to_json(const SyntheticScenario& s) {
    ojson j;
    j["k"] = s.k;
    j["n"] = s.n;
    j["dim"] = s.dim;
    switch (s.proto_geometry) {
        case ProtoGeometry::Orthogonal: j["proto_geometry"] = "orthogonal"; break;
        case ProtoGeometry::RandomUnit: j["proto_geometry"] = "random_unit"; break;
        case ProtoGeometry::PairedSimilar: {
            ojson pairs = ojson::array();
            for (const PairedSim& p : s.paired_sims)
                pairs.push_back(ojson::array({p.k1, p.k2, p.target}));
            j["proto_geometry"] = ojson{{"paired_similar", pairs}};
            break;
        }
    }
    if (s.query_init == QueryInit::RandomUnit)
        j["query_init"] = "random_unit";
    else
        j["query_init"] = ojson{{"near_prototype", s.noise_scale}};
    j["seed"] = s.seed;
    return j;
}

ojson config_json(const ExperimentConfig& cfg) {
    ojson j;
    j["scenario"] = scenario_to_json(cfg.scenario);
    j["loss"] = loss_kind_name(cfg.loss);
    if (!cfg.losses.empty()) {
        ojson ls = ojson::array();
        for (LossKind k : cfg.losses) ls.push_back(loss_kind_name(k));
        j["losses"] = ls;
    }
    j["csp"] = ojson{{"alpha", cfg.csp.alpha},
                     {"beta", cfg.csp.beta},
                     {"gamma", cfg.csp.gamma},
                     {"tau", cfg.csp.tau},
                     {"log_floor", cfg.csp.log_floor},
                     {"norm_floor", cfg.csp.norm_floor},
                     {"grad_through_repulsion", cfg.csp.grad_through_repulsion},
                     {"grad_to_prototypes", cfg.csp.grad_to_prototypes}};
    j["optimizer"] = ojson{{"lr", cfg.optimizer.lr},
                           {"steps", cfg.optimizer.steps},
                           {"record_every", cfg.optimizer.record_every}};
    j["layers"] = ojson{{"count", cfg.layers.count}, {"target_set", cfg.layers.target_set}};
    ojson formats = ojson::array();
    for (OutputFormat f : cfg.output.formats)
        formats.push_back(f == OutputFormat::Csv ? "csv" : "json");
    j["output"] = ojson{{"directory", cfg.output.directory}, {"formats", formats}};
    return j;
}

ojson metrics_json(const MetricsReport& m, std::size_t k) {
    ojson j;
    j["step"] = m.step;
    j["loss_total"] = m.loss_total;
    j["loss_ita"] = m.loss_ita;
    j["loss_iar"] = m.loss_iar;
    j["intra_pq_sim_mean"] = m.intra_pq_sim_mean;
    j["intra_pq_sim_var"] = m.intra_pq_sim_var;
    j["intra_pq_sim_mean_per_class"] = m.intra_pq_sim_mean_per_class;
    j["intra_pq_sim_var_per_class"] = m.intra_pq_sim_var_per_class;
    j["intra_qq_sim_var"] = m.intra_qq_sim_var;
    ojson inter;
    for (std::size_t a = 0; a < k; ++a)
        for (std::size_t b = 0; b < k; ++b)
            if (a != b)
                inter[std::to_string(a) + "_" + std::to_string(b)] = m.inter_pq_sim.at(a, b);
    j["inter_pq_sim"] = inter;
    j["nearest_proto_accuracy"] = m.nearest_proto_accuracy;
    return j;
}

std::vector<std::string> run_notes(LossKind loss) {
    std::vector<std::string> notes;
    notes.push_back(
        "cluster metrics (intra/inter similarity statistics and nearest-prototype "
        "accuracy) are this artifact's own quantitative operationalization of "
        "qualitative clustering behavior");
    if (loss == LossKind::NPair || loss == LossKind::InfoNce)
        notes.push_back(std::string(loss_kind_name(loss)) +
                        " is adapted to score class prototypes against queries and has no "
                        "attraction/repulsion split; loss_ita and loss_iar are reported as 0");
    return notes;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("output: cannot open " + path.string() + " for writing");
    f << text;
    f.flush();
    if (!f) throw ConfigError("output: write to " + path.string() + " failed");
}

std::string metrics_csv_text(const Trajectory& traj, std::size_t k) {
    std::ostringstream out;
    out << "step,loss_total,loss_ita,loss_iar,intra_pq_sim_mean,intra_pq_sim_var,"
           "intra_qq_sim_var,nearest_proto_accuracy";
    for (const std::string& name : inter_sim_column_names(k)) out << ',' << name;
    out << '\n';
    for (const MetricsReport& m : traj.steps) {
        out << m.step << ',' << format_double(m.loss_total) << ','
            << format_double(m.loss_ita) << ',' << format_double(m.loss_iar) << ','
            << format_double(m.intra_pq_sim_mean) << ',' << format_double(m.intra_pq_sim_var)
            << ',' << format_double(m.intra_qq_sim_var) << ','
            << format_double(m.nearest_proto_accuracy);
        for (std::size_t a = 0; a < k; ++a)
            for (std::size_t b = 0; b < k; ++b)
                if (a != b) out << ',' << format_double(m.inter_pq_sim.at(a, b));
        out << '\n';
    }
    return out.str();
}

std::string summary_json_text(const ExperimentConfig& cfg, const MetricsReport& final_metrics) {
    ojson j;
    j["artifact_version"] = kArtifactVersion;
    j["config"] = config_json(cfg);
    j["final_metrics"] = metrics_json(final_metrics, cfg.scenario.k);
    j["notes"] = run_notes(cfg.loss);
    return j.dump(2) + "\n";
}

struct AlignOutcome {
    int code = kExitOk;
    MetricsReport final_metrics;
    std::string message;  // human-readable status or error text
};

AlignOutcome run_align_internal(const ExperimentConfig& cfg) {
    AlignOutcome outcome;
    try {
        cfg.validate();
        Trajectory traj =
            run_alignment(cfg.scenario, cfg.loss, cfg.csp, cfg.optimizer, cfg.layers);
        std::filesystem::create_directories(cfg.output.directory);
        std::filesystem::path dir(cfg.output.directory);
        if (cfg.output.wants(OutputFormat::Csv))
            write_text_file(dir / "metrics.csv", metrics_csv_text(traj, cfg.scenario.k));
        outcome.final_metrics = traj.steps.back();
        if (cfg.output.wants(OutputFormat::Json))
            write_text_file(dir / "summary.json",
                            summary_json_text(cfg, outcome.final_metrics));
        std::ostringstream msg;
        msg << "align: loss=" << loss_kind_name(cfg.loss) << " steps=" << cfg.optimizer.steps
            << " final loss_total=" << format_double(outcome.final_metrics.loss_total)
            << " nearest_proto_accuracy="
            << format_double(outcome.final_metrics.nearest_proto_accuracy) << " -> "
            << cfg.output.directory;
        outcome.message = msg.str();
    } catch (const ConfigError& e) {
        outcome.code = kExitConfigError;
        outcome.message = std::string("error: ") + e.what();
    } catch (const Error& e) {
        outcome.code = kExitNumericFailure;
        outcome.message = std::string("error: ") + e.what();
    } catch (const std::exception& e) {
        outcome.code = kExitConfigError;
        outcome.message = std::string("error: ") + e.what();
    }
    return outcome;
}

double parse_double_strict(const std::string& s, const std::string& what) {
    try {
        std::size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config: " + what + ": '" + s + "' is not a number");
    }
}

std::int64_t parse_int_strict(const std::string& s, const std::string& what) {
    try {
        std::size_t pos = 0;
        std::int64_t v = std::stoll(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config: " + what + ": '" + s + "' is not an integer");
    }
}

std::vector<std::string> split_list(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            parts.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    parts.push_back(cur);
    return parts;
}

// Applies one sweep cell value. `value` syntax for target_set: "all" or
// '+'-joined layer indices, e.g. "0+3+5".
void apply_sweep_value(ExperimentConfig& cfg, const std::string& param,
                       const std::string& value) {
    if (param == "gamma")
        cfg.csp.gamma = parse_double_strict(value, "sweep value for gamma");
    else if (param == "tau")
        cfg.csp.tau = parse_double_strict(value, "sweep value for tau");
    else if (param == "alpha")
        cfg.csp.alpha = parse_double_strict(value, "sweep value for alpha");
    else if (param == "beta")
        cfg.csp.beta = parse_double_strict(value, "sweep value for beta");
    else if (param == "lr")
        cfg.optimizer.lr = parse_double_strict(value, "sweep value for lr");
    else if (param == "steps")
        cfg.optimizer.steps = parse_int_strict(value, "sweep value for steps");
    else if (param == "target_set") {
        if (value == "all") {
            cfg.layers.target_set = LayerSpec::all_layers(cfg.layers.count).target_set;
        } else {
            cfg.layers.target_set.clear();
            for (const std::string& part : split_list(value, '+')) {
                std::int64_t idx = parse_int_strict(part, "sweep value for target_set");
                if (idx < 0)
                    throw ConfigError("config: sweep value for target_set: negative index");
                cfg.layers.target_set.push_back(static_cast<std::size_t>(idx));
            }
        }
    } else {
        throw ConfigError("config: unknown sweep parameter '" + param +
                          "' (expected gamma, tau, alpha, beta, target_set, lr, steps)");
    }
}

std::size_t sweep_thread_budget(std::size_t cells) {
    std::size_t t = std::thread::hardware_concurrency();
    if (t == 0) t = 1;
    if (const char* env = std::getenv("CSPCL_THREADS")) {
        std::int64_t v = parse_int_strict(env, "CSPCL_THREADS");
        if (v < 1) throw ConfigError("config: CSPCL_THREADS must be a positive integer");
        t = static_cast<std::size_t>(v);
    }
    return std::min(t, cells == 0 ? std::size_t{1} : cells);
}

}  // namespace

void ExperimentConfig::validate() const {
    try {
        scenario.validate();
        csp.validate();
        validate_target_set(layers.target_set, layers.count);
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    if (!(optimizer.lr >= 0.0) || !std::isfinite(optimizer.lr))
        throw ConfigError("config: optimizer.lr must be finite and >= 0");
    if (optimizer.steps < 1) throw ConfigError("config: optimizer.steps must be >= 1");
    if (optimizer.record_every < 1)
        throw ConfigError("config: optimizer.record_every must be >= 1");
    if (layers.count == 0) throw ConfigError("config: layers.count must be >= 1");
    if (output.directory.empty())
        throw ConfigError("config: output.directory must not be empty");
    if (output.formats.empty())
        throw ConfigError("config: output.formats must list csv and/or json");
}

ExperimentConfig default_config() { return ExperimentConfig{}; }

ExperimentConfig config_from_json_text(const std::string& text) {
    ojson j;
    try {
        j = ojson::parse(text);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    if (!j.is_object()) bad_config("the top level must be an object");
    // summary.json files carry the run's config in an echo section; accept
    // them directly so a summary round-trips into a rerun.
    if (j.contains("config") && j.at("config").is_object()) j = j.at("config");
    ExperimentConfig cfg = default_config();
    try {
        parse_into(j, cfg);
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("config: cannot read file '" + path + "'");
    std::ostringstream buf;
    buf << f.rdbuf();
    return config_from_json_text(buf.str());
}

ExperimentConfig resolve_config(const CliOverrides& ov) {
    ExperimentConfig cfg =
        ov.config_path ? load_config_file(*ov.config_path) : default_config();
    if (ov.seed) cfg.scenario.seed = *ov.seed;
    if (ov.out_dir) cfg.output.directory = *ov.out_dir;
    if (ov.format) {
        const std::string& f = *ov.format;
        if (f == "csv")
            cfg.output.formats = {OutputFormat::Csv};
        else if (f == "json")
            cfg.output.formats = {OutputFormat::Json};
        else if (f == "both")
            cfg.output.formats = {OutputFormat::Csv, OutputFormat::Json};
        else
            throw ConfigError("config: --format must be csv, json or both (got '" + f + "')");
    }
    if (ov.losses) {
        cfg.losses.clear();
        for (const std::string& name : split_list(*ov.losses, ',')) {
            if (name.empty()) throw ConfigError("config: --losses has an empty entry");
            cfg.losses.push_back(parse_loss_kind(name));
        }
    }
    return cfg;
}

std::string config_to_json(const ExperimentConfig& cfg) { return config_json(cfg).dump(2); }

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::vector<std::string> inter_sim_column_names(std::size_t k) {
    std::vector<std::string> names;
    for (std::size_t a = 0; a < k; ++a)
        for (std::size_t b = 0; b < k; ++b)
            if (a != b)
                names.push_back("inter_pq_sim_" + std::to_string(a) + "_" +
                                std::to_string(b));
    return names;
}

int cmd_grad_check(const ExperimentConfig& cfg, int instances, std::ostream& out) {
    constexpr double kH = 1e-6;
    constexpr double kTol = 1e-6;
    try {
        cfg.validate();
        if (instances < 1) throw ConfigError("config: --instances must be >= 1");
        const LossKind kinds[] = {LossKind::Csp, LossKind::ItaOnly, LossKind::IarOnly,
                                  LossKind::NPair, LossKind::InfoNce};
        bool all_ok = true;
        out << "loss max_rel_error verdict\n";
        for (LossKind kind : kinds) {
            double err = gradcheck_suite(kind, cfg.scenario.seed, instances, kH);
            bool ok = err <= kTol;
            all_ok = all_ok && ok;
            out << loss_kind_name(kind) << ' ' << format_double(err) << ' '
                << (ok ? "PASS" : "FAIL") << '\n';
        }
        return all_ok ? kExitOk : kExitNumericFailure;
    } catch (const ConfigError& e) {
        out << "error: " << e.what() << '\n';
        return kExitConfigError;
    } catch (const Error& e) {
        out << "error: " << e.what() << '\n';
        return kExitNumericFailure;
    } catch (const std::exception& e) {
        out << "error: " << e.what() << '\n';
        return kExitConfigError;
    }
}

int cmd_align(const ExperimentConfig& cfg, std::ostream& out) {
    AlignOutcome outcome = run_align_internal(cfg);
    out << outcome.message << '\n';
    return outcome.code;
}

int cmd_compare(const ExperimentConfig& cfg, std::ostream& out) {
    try {
        cfg.validate();
        if (cfg.losses.size() < 2)
            throw ConfigError(
                "config: compare needs at least two entries in 'losses' (or --losses)");
        std::vector<MetricsReport> finals;
        for (LossKind kind : cfg.losses) {
            Trajectory traj =
                run_alignment(cfg.scenario, kind, cfg.csp, cfg.optimizer, cfg.layers);
            finals.push_back(traj.steps.back());
        }
        std::filesystem::create_directories(cfg.output.directory);
        std::ostringstream csv;
        csv << "loss,final_accuracy,final_intra_pq_sim_mean,final_intra_qq_sim_var,"
               "final_loss\n";
        for (std::size_t i = 0; i < cfg.losses.size(); ++i) {
            const MetricsReport& m = finals[i];
            csv << loss_kind_name(cfg.losses[i]) << ','
                << format_double(m.nearest_proto_accuracy) << ','
                << format_double(m.intra_pq_sim_mean) << ','
                << format_double(m.intra_qq_sim_var) << ',' << format_double(m.loss_total)
                << '\n';
        }
        write_text_file(std::filesystem::path(cfg.output.directory) / "compare.csv",
                        csv.str());
        out << std::left << std::setw(10) << "loss" << std::right << std::setw(14)
            << "accuracy" << std::setw(18) << "intra_pq_mean" << std::setw(18)
            << "intra_qq_var" << std::setw(16) << "loss" << '\n';
        for (std::size_t i = 0; i < cfg.losses.size(); ++i) {
            const MetricsReport& m = finals[i];
            out << std::left << std::setw(10) << loss_kind_name(cfg.losses[i]) << std::right
                << std::setw(14) << std::setprecision(6) << m.nearest_proto_accuracy
                << std::setw(18) << m.intra_pq_sim_mean << std::setw(18) << m.intra_qq_sim_var
                << std::setw(16) << m.loss_total << '\n';
        }
        return kExitOk;
    } catch (const ConfigError& e) {
        out << "error: " << e.what() << '\n';
        return kExitConfigError;
    } catch (const Error& e) {
        out << "error: " << e.what() << '\n';
        return kExitNumericFailure;
    } catch (const std::exception& e) {
        out << "error: " << e.what() << '\n';
        return kExitConfigError;
    }
}

int cmd_sweep(const ExperimentConfig& cfg, const std::string& param,
              const std::vector<std::string>& values, std::ostream& out) {
    try {
        cfg.validate();
        if (values.empty()) throw ConfigError("config: sweep needs a non-empty --values list");
        std::vector<ExperimentConfig> cells;
        cells.reserve(values.size());
        for (std::size_t i = 0; i < values.size(); ++i) {
            ExperimentConfig cell = cfg;
            apply_sweep_value(cell, param, values[i]);
            cell.output.directory =
                (std::filesystem::path(cfg.output.directory) / ("cell_" + std::to_string(i)))
                    .string();
            cell.validate();
            cells.push_back(std::move(cell));
        }

        std::vector<AlignOutcome> results(cells.size());
        std::size_t threads = sweep_thread_budget(cells.size());
        if (threads <= 1) {
            for (std::size_t i = 0; i < cells.size(); ++i)
                results[i] = run_align_internal(cells[i]);
        } else {
            std::atomic<std::size_t> next{0};
            std::vector<std::thread> pool;
            pool.reserve(threads);
            for (std::size_t t = 0; t < threads; ++t)
                pool.emplace_back([&]() {
                    for (std::size_t i = next.fetch_add(1); i < cells.size();
                         i = next.fetch_add(1))
                        results[i] = run_align_internal(cells[i]);
                });
            for (std::thread& th : pool) th.join();
        }

        for (std::size_t i = 0; i < cells.size(); ++i)
            out << param << "=" << values[i] << " " << results[i].message << '\n';
        for (const AlignOutcome& r : results)
            if (r.code != kExitOk) return r.code;

        std::ostringstream csv;
        csv << "param,value,loss_total,loss_ita,loss_iar,intra_pq_sim_mean,intra_pq_sim_var,"
               "intra_qq_sim_var,nearest_proto_accuracy";
        for (const std::string& name : inter_sim_column_names(cfg.scenario.k))
            csv << ',' << name;
        csv << '\n';
        for (std::size_t i = 0; i < cells.size(); ++i) {
            const MetricsReport& m = results[i].final_metrics;
            csv << param << ',' << values[i] << ',' << format_double(m.loss_total) << ','
                << format_double(m.loss_ita) << ',' << format_double(m.loss_iar) << ','
                << format_double(m.intra_pq_sim_mean) << ','
                << format_double(m.intra_pq_sim_var) << ','
                << format_double(m.intra_qq_sim_var) << ','
                << format_double(m.nearest_proto_accuracy);
            for (std::size_t a = 0; a < cfg.scenario.k; ++a)
                for (std::size_t b = 0; b < cfg.scenario.k; ++b)
                    if (a != b) csv << ',' << format_double(m.inter_pq_sim.at(a, b));
            csv << '\n';
        }
        write_text_file(std::filesystem::path(cfg.output.directory) / "sweep.csv", csv.str());
        out << "sweep: " << cells.size() << " cells -> " << cfg.output.directory << '\n';
        return kExitOk;
    } catch (const ConfigError& e) {
        out << "error: " << e.what() << '\n';
        return kExitConfigError;
    } catch (const Error& e) {
        out << "error: " << e.what() << '\n';
        return kExitNumericFailure;
    } catch (const std::exception& e) {
        out << "error: " << e.what() << '\n';
        return kExitConfigError;
    }
}

}  // namespace cspcl
