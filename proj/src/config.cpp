#include "fmc/config.hpp"

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <set>

#include "fmc/errors.hpp"

namespace fmc {

using nlohmann::json;

namespace {

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!obj.is_object())
        throw ConfigError(where + ": expected an object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, value] : obj.items())
        if (!ok.count(key))
            throw ConfigError(where + ": unknown key '" + key + "'");
}

double number(const json& obj, const char* key, double fallback, const std::string& where) {
    if (!obj.contains(key) || obj.at(key).is_null())
        return fallback;
    const json& v = obj.at(key);
    if (!v.is_number())
        throw ConfigError(where + "." + key + ": expected a number");
    double x = v.get<double>();
    if (!std::isfinite(x))
        throw ConfigError(where + "." + key + ": must be finite");
    return x;
}

std::size_t count(const json& obj, const char* key, std::size_t fallback, const std::string& where) {
    if (!obj.contains(key))
        return fallback;
    const json& v = obj.at(key);
    if (!v.is_number_integer() || v.get<long long>() < 0)
        throw ConfigError(where + "." + key + ": expected a non-negative integer");
    return v.get<std::size_t>();
}

std::string text(const json& obj, const char* key, const std::string& fallback, const std::string& where) {
    if (!obj.contains(key))
        return fallback;
    if (!obj.at(key).is_string())
        throw ConfigError(where + "." + key + ": expected a string");
    return obj.at(key).get<std::string>();
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path q(p);
    return q.is_absolute() || base.empty() ? q : base / q;
}

LeadSpec lead_from_json(const json& j, const std::filesystem::path& base, const std::string& where) {
    check_keys(j, {"density", "temperature", "beta", "mu", "kappa"}, where);
    if (!j.contains("density"))
        throw ConfigError(where + ": missing 'density'");
    if (j.contains("temperature") == j.contains("beta"))
        throw ConfigError(where + ": give exactly one of 'temperature' or 'beta'");
    std::optional<InverseTemperature> beta;
    try {
        if (j.contains("temperature"))
            beta = InverseTemperature::from_temperature(number(j, "temperature", 0.0, where));
        else
            beta = InverseTemperature(number(j, "beta", 0.0, where));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(where + ": " + e.what());
    }
    std::vector<double> kappa{1.0};
    if (j.contains("kappa")) {
        const json& k = j.at("kappa");
        if (k.is_number())
            kappa = {k.get<double>()};
        else if (k.is_array() && !k.empty() && std::all_of(k.begin(), k.end(), [](const json& x) { return x.is_number(); }))
            kappa = k.get<std::vector<double>>();
        else
            throw ConfigError(where + ".kappa: expected a number or a non-empty list of numbers");
    }
    LeadSpec lead{density_from_json(j.at("density"), base), *beta, number(j, "mu", 0.0, where), kappa};
    try {
        lead.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(where + ": " + e.what());
    }
    return lead;
}

} // namespace

SpectralDensity density_from_json(const json& j, const std::filesystem::path& base_dir) {
    const std::string where = "density";
    check_keys(j, {"type", "lo", "hi", "scale", "path"}, where);
    std::string type = text(j, "type", "", where);
    try {
        if (type == "semicircle") {
            check_keys(j, {"type", "lo", "hi", "scale"}, where);
            Interval iv(number(j, "lo", NAN, where), number(j, "hi", NAN, where));
            return SpectralDensity::semicircle(iv, number(j, "scale", NAN, where));
        }
        if (type == "tabulated") {
            check_keys(j, {"type", "path", "scale"}, where);
            auto d = SpectralDensity::load_csv(resolve(base_dir, text(j, "path", "", where)));
            return d.scaled(number(j, "scale", 1.0, where));
        }
    } catch (const std::invalid_argument& e) {
        throw ConfigError(where + ": " + e.what());
    }
    throw ConfigError(where + ".type: expected 'semicircle' or 'tabulated', got '" + type + "'");
}

void apply_override(json& j, const std::string& assignment) {
    auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("override '" + assignment + "' is not of the form key=value");
    std::string key = assignment.substr(0, eq), raw = assignment.substr(eq + 1);
    std::string ptr;
    std::size_t start = 0;
    while (true) {
        auto dot = key.find('.', start);
        std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty())
            throw ConfigError("override '" + assignment + "' has an empty key component");
        ptr += "/" + part;
        if (dot == std::string::npos)
            break;
        start = dot + 1;
    }
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded())
        value = raw;
    try {
        j[json::json_pointer(ptr)] = value;
    } catch (const json::exception& e) {
        throw ConfigError("override '" + assignment + "': " + e.what());
    }
}

ExperimentConfig parse_config(const json& j, const std::filesystem::path& base_dir) {
    check_keys(j, {"description", "leads", "system", "chain", "closure", "evolution", "reference", "reconstruction",
                   "acceptance"},
               "config");
    ExperimentConfig c;
    c.resolved = j;
    try {
        if (!j.contains("leads") || !j.at("leads").is_array() || j.at("leads").empty())
            throw ConfigError("config.leads: expected a non-empty list");
        for (std::size_t i = 0; i < j.at("leads").size(); ++i)
            c.leads.push_back(lead_from_json(j.at("leads")[i], base_dir, "leads[" + std::to_string(i) + "]"));

        if (j.contains("system")) {
            const json& s = j.at("system");
            check_keys(s, {"epsilon", "initial"}, "system");
            c.epsilon = number(s, "epsilon", 0.0, "system");
            std::string init = text(s, "initial", "filled", "system");
            if (init != "filled" && init != "empty")
                throw ConfigError("system.initial: expected 'empty' or 'filled'");
            c.system_filled = init == "filled";
        }
        if (j.contains("chain")) {
            const json& s = j.at("chain");
            check_keys(s, {"n_e", "n_sites", "quadrature_nodes", "source", "epsilon"}, "chain");
            c.n_e = count(s, "n_e", c.n_e, "chain");
            c.n_sites = count(s, "n_sites", c.n_sites, "chain");
            c.quadrature_nodes = count(s, "quadrature_nodes", c.quadrature_nodes, "chain");
            c.chain_source = text(s, "source", c.chain_source, "chain");
            if (c.chain_source != "tcsm" && c.chain_source != "density")
                throw ConfigError("chain.source: expected 'tcsm' or 'density'");
            c.truncation_epsilon = number(s, "epsilon", c.truncation_epsilon, "chain");
        }
        if (j.contains("closure")) {
            const json& s = j.at("closure");
            check_keys(s, {"n_modes", "table_dir", "fit_missing", "fit"}, "closure");
            if (s.contains("n_modes")) {
                const json& n = s.at("n_modes");
                if (n.is_number_integer())
                    c.n_c = {n.get<std::size_t>()};
                else if (n.is_array() && !n.empty() &&
                         std::all_of(n.begin(), n.end(), [](const json& x) { return x.is_number_integer(); }))
                    c.n_c = n.get<std::vector<std::size_t>>();
                else
                    throw ConfigError("closure.n_modes: expected an integer or a list of integers");
                for (auto v : c.n_c)
                    if (v == 0)
                        throw ConfigError("closure.n_modes: must be positive");
            }
            c.table_dir = resolve(base_dir, text(s, "table_dir", "data", "closure"));
            if (s.contains("fit_missing")) {
                if (!s.at("fit_missing").is_boolean())
                    throw ConfigError("closure.fit_missing: expected true or false");
                c.fit_missing_tables = s.at("fit_missing").get<bool>();
            }
            if (s.contains("fit")) {
                const json& f = s.at("fit");
                check_keys(f, {"t_max", "n_grid", "tolerance", "n_starts", "n_refine", "n_hops", "seed"}, "closure.fit");
                c.fit.t_max = number(f, "t_max", c.fit.t_max, "closure.fit");
                c.fit.n_grid = count(f, "n_grid", c.fit.n_grid, "closure.fit");
                c.fit.tolerance = number(f, "tolerance", c.fit.tolerance, "closure.fit");
                c.fit.n_starts = count(f, "n_starts", c.fit.n_starts, "closure.fit");
                c.fit.n_refine = count(f, "n_refine", c.fit.n_refine, "closure.fit");
                c.fit.n_hops = count(f, "n_hops", c.fit.n_hops, "closure.fit");
                c.fit.seed = count(f, "seed", c.fit.seed, "closure.fit");
            }
        } else {
            c.table_dir = resolve(base_dir, "data");
        }
        if (j.contains("evolution")) {
            const json& s = j.at("evolution");
            check_keys(s, {"t_max", "dt", "ramp_tau", "record_every", "transient"}, "evolution");
            c.t_max = number(s, "t_max", c.t_max, "evolution");
            c.dt = number(s, "dt", c.dt, "evolution");
            c.ramp_tau = number(s, "ramp_tau", c.ramp_tau, "evolution");
            c.record_every = number(s, "record_every", c.record_every, "evolution");
            if (s.contains("transient") && !s.at("transient").is_null())
                c.transient = number(s, "transient", 0.0, "evolution");
            if (!(c.t_max > 0.0))
                throw ConfigError("evolution.t_max: must be positive");
            if (c.ramp_tau < 0.0)
                throw ConfigError("evolution.ramp_tau: must be non-negative");
        }
        if (j.contains("reference")) {
            const json& s = j.at("reference");
            check_keys(s, {"chain_length"}, "reference");
            c.reference_length = count(s, "chain_length", 0, "reference");
        }
        if (j.contains("reconstruction")) {
            const json& s = j.at("reconstruction");
            check_keys(s, {"t_max", "dt", "omega_step", "kink_radius", "window_floor"}, "reconstruction");
            c.recon_t_max = number(s, "t_max", c.recon_t_max, "reconstruction");
            c.recon_dt = number(s, "dt", c.recon_dt, "reconstruction");
            c.recon_omega_step = number(s, "omega_step", c.recon_omega_step, "reconstruction");
            c.recon_kink_radius = number(s, "kink_radius", c.recon_kink_radius, "reconstruction");
            c.recon_window_floor = number(s, "window_floor", c.recon_window_floor, "reconstruction");
            if (!(c.recon_t_max > 0.0) || !(c.recon_dt > 0.0) || !(c.recon_omega_step > 0.0) ||
                !(c.recon_window_floor > 0.0 && c.recon_window_floor < 1.0))
                throw ConfigError("reconstruction: t_max, dt, omega_step must be positive and window_floor in (0,1)");
        }
        if (j.contains("acceptance")) {
            const json& s = j.at("acceptance");
            check_keys(s, {"max_error"}, "acceptance");
            if (s.contains("max_error"))
                c.gate = number(s, "max_error", 0.0, "acceptance");
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    if (c.n_e == 0)
        throw ConfigError("chain.n_e: must be at least 1");
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open config file " + path.string());
    json j = json::parse(in, nullptr, false, true);
    if (j.is_discarded())
        throw ConfigError("config file " + path.string() + " is not valid JSON");
    for (const auto& o : overrides)
        apply_override(j, o);
    return parse_config(j, path.parent_path());
}

} // namespace fmc
