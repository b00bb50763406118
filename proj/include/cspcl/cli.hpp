#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cspcl/config.hpp"
#include "cspcl/layered.hpp"
#include "cspcl/sim.hpp"

namespace cspcl {

inline constexpr const char* kArtifactVersion = "0.1.0";

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitNumericFailure = 1;
inline constexpr int kExitConfigError = 2;

enum class OutputFormat { Csv, Json };

struct OutputSpec {
    std::string directory = "out";
    std::vector<OutputFormat> formats = {OutputFormat::Csv, OutputFormat::Json};

    bool wants(OutputFormat f) const {
        for (auto g : formats)
            if (g == f) return true;
        return false;
    }
};

// Everything one experiment needs; mirrors the config-file schema 1:1.
struct ExperimentConfig {
    SyntheticScenario scenario;
    LossKind loss = LossKind::Csp;
    std::vector<LossKind> losses;  // used by `compare`; optional elsewhere
    CspConfig csp;
    OptimizerParams optimizer;
    LayerSpec layers;
    OutputSpec output;

    void validate() const;  // throws ConfigError naming the offending field
};

// Command-line values that override file values (flags > file > defaults).
struct CliOverrides {
    std::optional<std::string> config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<std::string> format;  // "csv" | "json" | "both"
    std::optional<std::string> losses;  // comma list, compare
    std::optional<int> instances;       // grad-check
    std::optional<std::string> param;   // sweep
    std::optional<std::string> values;  // sweep, comma list
};

// Built-in defaults, optionally merged with a config file and flag overrides.
ExperimentConfig default_config();
ExperimentConfig load_config_file(const std::string& path);  // throws ConfigError
ExperimentConfig resolve_config(const CliOverrides& ov);     // full precedence chain

// JSON (de)serialization of the config schema; used for files and the
// summary.json echo.
std::string config_to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json_text(const std::string& text);  // throws ConfigError

// Subcommand implementations. Each returns a process exit code and writes its
// files under cfg.output.directory.
int cmd_grad_check(const ExperimentConfig& cfg, int instances, std::ostream& out);
int cmd_align(const ExperimentConfig& cfg, std::ostream& out);
int cmd_compare(const ExperimentConfig& cfg, std::ostream& out);
int cmd_sweep(const ExperimentConfig& cfg, const std::string& param,
              const std::vector<std::string>& values, std::ostream& out);

// Formats a double with 17 significant digits (byte-stable CSV contract).
std::string format_double(double v);

// Lexicographic (k1,k2), k1 != k2 column labels inter_pq_sim_k1_k2.
std::vector<std::string> inter_sim_column_names(std::size_t k);

}  // namespace cspcl
