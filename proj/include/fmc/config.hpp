#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "fmc/closure.hpp"
#include "fmc/specdens.hpp"

namespace fmc {

// Experiment configuration, read from JSON. Every key is optional except
// `leads`; unknown keys are rejected with ConfigError. See README for the schema.
struct ExperimentConfig {
    std::vector<LeadSpec> leads;

    double epsilon = 0.0;
    bool system_filled = true;

    std::size_t n_e = 6;
    std::size_t n_sites = 60;            // chain-coeffs / convergence-report depth
    std::size_t quadrature_nodes = 20000;
    std::string chain_source = "tcsm";   // "tcsm" or "density"
    double truncation_epsilon = 1e-2;

    std::vector<std::size_t> n_c{6};
    std::filesystem::path table_dir = "data";
    bool fit_missing_tables = false;
    ClosureFitOptions fit;

    double t_max = 50.0;
    double dt = 0.0;                     // <= 0 selects 1e-3 / K
    double ramp_tau = 0.0;
    double record_every = 0.1;
    std::optional<double> transient;     // default 5 / K after full coupling

    std::size_t reference_length = 0;    // 0 selects ceil(2 K t_max 1.25)

    double recon_t_max = 400.0;
    double recon_dt = 0.05;
    double recon_omega_step = 0.005;
    double recon_kink_radius = 0.05;
    double recon_window_floor = 1e-15;

    std::optional<double> gate;          // acceptance threshold recorded in the manifest

    nlohmann::json resolved;             // the config after overrides, echoed in manifests
};

// "a.b.c=value"; value is parsed as JSON when possible, else taken as a string.
void apply_override(nlohmann::json& j, const std::string& assignment);

ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir);

// Missing or unreadable file: IoError. Syntax or schema problems: ConfigError.
ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

SpectralDensity density_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);

} // namespace fmc
