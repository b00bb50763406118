#include <cstdint>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cspcl/cli.hpp"
#include "cspcl/errors.hpp"

namespace {

std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> parts;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            parts.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    parts.push_back(cur);
    return parts;
}

struct CommonOpts {
    CLI::Option* config = nullptr;
    CLI::Option* seed = nullptr;
    CLI::Option* out = nullptr;
    CLI::Option* format = nullptr;
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Contrastive prototype/query alignment toolkit"};
    app.require_subcommand(1);

    std::string config_path, out_dir, format, losses, param, values;
    std::uint64_t seed = 0;
    int instances = 100;

    std::map<const CLI::App*, CommonOpts> commons;
    auto add_common = [&](CLI::App* sub) {
        CommonOpts c;
        c.config = sub->add_option("--config", config_path, "JSON configuration file");
        c.seed = sub->add_option("--seed", seed, "Override the scenario seed");
        c.out = sub->add_option("--out", out_dir, "Override the output directory");
        c.format = sub->add_option("--format", format, "Output formats: csv, json or both");
        commons[sub] = c;
    };

    CLI::App* gc = app.add_subcommand(
        "grad-check", "Audit analytic gradients against central finite differences");
    add_common(gc);
    gc->add_option("--instances", instances, "Random instances per loss (default 100)");

    CLI::App* al =
        app.add_subcommand("align", "Run one alignment experiment and emit metrics");
    add_common(al);

    CLI::App* cp =
        app.add_subcommand("compare", "Run several losses on the identical scenario");
    add_common(cp);
    CLI::Option* losses_opt =
        cp->add_option("--losses", losses, "Comma-separated losses to compare");

    CLI::App* sw = app.add_subcommand("sweep", "Grid over one parameter");
    add_common(sw);
    sw->add_option("--param", param,
                   "Swept parameter: gamma, tau, alpha, beta, target_set, lr, steps")
        ->required();
    CLI::Option* values_opt = sw->add_option(
        "--values", values, "Comma-separated values (target_set cells: 'all' or '0+3+5')");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : cspcl::kExitConfigError;
    }

    const CLI::App* sub = app.get_subcommands().front();
    const CommonOpts& c = commons.at(sub);
    cspcl::CliOverrides ov;
    if (c.config->count() > 0) ov.config_path = config_path;
    if (c.seed->count() > 0) ov.seed = seed;
    if (c.out->count() > 0) ov.out_dir = out_dir;
    if (c.format->count() > 0) ov.format = format;
    if (sub == cp && losses_opt->count() > 0) ov.losses = losses;

    try {
        cspcl::ExperimentConfig cfg = cspcl::resolve_config(ov);
        if (sub == gc) return cspcl::cmd_grad_check(cfg, instances, std::cout);
        if (sub == al) return cspcl::cmd_align(cfg, std::cout);
        if (sub == cp) return cspcl::cmd_compare(cfg, std::cout);
        std::vector<std::string> value_list;
        if (values_opt->count() > 0) value_list = split_commas(values);
        return cspcl::cmd_sweep(cfg, param, value_list, std::cout);
    } catch (const cspcl::ConfigError& e) {
        std::cout << "error: " << e.what() << '\n';
        return cspcl::kExitConfigError;
    } catch (const cspcl::Error& e) {
        std::cout << "error: " << e.what() << '\n';
        return cspcl::kExitNumericFailure;
    } catch (const std::exception& e) {
        std::cout << "error: " << e.what() << '\n';
        return cspcl::kExitConfigError;
    }
}
