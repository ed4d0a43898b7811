// Experiment configuration: JSON serialization with strict unknown-key
// rejection and paper-values defaults.
#pragma once

#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "protocol.hpp"

namespace phonopair {

struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class SimMode { amplitude, master_equation };

inline std::string to_string(SimMode m) {
    return m == SimMode::amplitude ? "amplitude" : "master-equation";
}
inline SimMode mode_from_string(const std::string& s) {
    if (s == "amplitude") return SimMode::amplitude;
    if (s == "master-equation") return SimMode::master_equation;
    throw config_error("mode must be 'amplitude' or 'master-equation', got '" + s + "'");
}

struct SweepSpec {
    std::string axis;  // delta_t | tau_f | drive_power
    double start = 0, step = 0, stop = 0;

    void validate() const {
        if (axis != "delta_t" && axis != "tau_f" && axis != "drive_power")
            throw config_error("sweep.axis must be delta_t, tau_f or drive_power");
        if (step <= 0) throw config_error("sweep.step must be > 0");
        if (stop < start) throw config_error("sweep.stop must be >= sweep.start");
    }

    std::vector<double> values() const {
        validate();
        std::vector<double> v;
        for (double x = start; x <= stop + step * 1e-9; x += step) v.push_back(x);
        return v;
    }
};

struct ExperimentConfig {
    PhysicalParams physical;
    ProtocolSchedule schedule;
    DetectorSpec detector;
    HeatingModel heating;
    BackgroundSpec background;
    uint64_t trials = 1'000'000;
    uint64_t base_seed = 1;
    SimMode mode = SimMode::amplitude;
    bool keep_records = false;
    std::optional<SweepSpec> sweep;

    void validate() const {
        physical.validate();
        schedule.validate(physical);
        detector.validate();
        heating.validate();
        background.validate();
        if (trials < 1) throw config_error("trials must be >= 1");
        if (sweep) sweep->validate();
    }

    /// Paper-values preset.
    static ExperimentConfig paper() {
        ExperimentConfig c;
        c.schedule = ProtocolSchedule::paper(c.physical);
        return c;
    }
};

namespace detail {

using json = nlohmann::json;

inline void reject_unknown(const json& j, const std::vector<std::string>& allowed,
                           const std::string& section) {
    if (!j.is_object()) throw config_error("config section '" + section + "' must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
            throw config_error("unknown key '" + it.key() + "' in section '" + section + "'");
    }
}

template <typename T>
void get_if(const json& j, const char* key, T& out) {
    if (auto it = j.find(key); it != j.end()) out = it->get<T>();
}

inline void parse_drive(const json& j, const std::string& section, DriveSpec& d) {
    reject_unknown(j, {"n_r", "n_b", "tau", "shape"}, section);
    get_if(j, "n_r", d.n_r);
    get_if(j, "n_b", d.n_b);
    get_if(j, "tau", d.tau);
    if (auto it = j.find("shape"); it != j.end()) {
        const std::string s = it->get<std::string>();
        if (s == "rectangular")
            d.shape = PulseShape::rectangular;
        else if (s == "gaussian")
            d.shape = PulseShape::gaussian;
        else
            throw config_error(section + ".shape must be rectangular or gaussian");
    }
}

inline json drive_json(const DriveSpec& d) {
    return json{{"n_r", d.n_r},
                {"n_b", d.n_b},
                {"tau", d.tau},
                {"shape", d.shape == PulseShape::gaussian ? "gaussian" : "rectangular"}};
}

}  // namespace detail

/// Parses a config from JSON text. Missing keys take the paper preset values;
/// unknown keys are rejected by section; all invariants checked here, never
/// at run time.
inline ExperimentConfig parse_config(const std::string& text) {
    using detail::json;
    ExperimentConfig c = ExperimentConfig::paper();
    if (text.find_first_not_of(" \t\r\n") == std::string::npos) return c;  // empty -> preset

    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw config_error(std::string("config parse error: ") + e.what());
    }
    detail::reject_unknown(j,
                           {"physical", "schedule", "detector", "heating", "background", "trials",
                            "base_seed", "mode", "records", "sweep"},
                           "<root>");

    if (auto it = j.find("physical"); it != j.end()) {
        detail::reject_unknown(*it, {"g_o", "kappa", "gamma_m", "omega_m", "wavelength_nm", "n_th"},
                               "physical");
        detail::get_if(*it, "g_o", c.physical.g_o);
        detail::get_if(*it, "kappa", c.physical.kappa);
        detail::get_if(*it, "gamma_m", c.physical.gamma_m);
        detail::get_if(*it, "omega_m", c.physical.omega_m);
        detail::get_if(*it, "wavelength_nm", c.physical.wavelength_nm);
        detail::get_if(*it, "n_th", c.physical.n_th);
    }
    if (auto it = j.find("schedule"); it != j.end()) {
        detail::reject_unknown(*it, {"prep", "meas", "delta_t", "tau_f", "repetition", "p_meas"},
                               "schedule");
        if (auto p = it->find("prep"); p != it->end()) detail::parse_drive(*p, "schedule.prep", c.schedule.prep);
        if (auto p = it->find("meas"); p != it->end()) detail::parse_drive(*p, "schedule.meas", c.schedule.meas);
        detail::get_if(*it, "delta_t", c.schedule.delta_T);
        detail::get_if(*it, "tau_f", c.schedule.tau_f);
        detail::get_if(*it, "repetition", c.schedule.repetition);
        detail::get_if(*it, "p_meas", c.schedule.p_meas);
    }
    if (auto it = j.find("detector"); it != j.end()) {
        detail::reject_unknown(*it, {"efficiency", "dark_rate", "filter_rejection"}, "detector");
        detail::get_if(*it, "efficiency", c.detector.efficiency);
        detail::get_if(*it, "dark_rate", c.detector.dark_rate);
        detail::get_if(*it, "filter_rejection", c.detector.filter_rejection);
    }
    if (auto it = j.find("heating"); it != j.end()) {
        detail::reject_unknown(*it, {"n_base", "n_peak", "t_s", "t_l", "in_pulse_rate"}, "heating");
        detail::get_if(*it, "n_base", c.heating.n_base);
        detail::get_if(*it, "n_peak", c.heating.n_peak);
        detail::get_if(*it, "t_s", c.heating.t_s);
        detail::get_if(*it, "t_l", c.heating.t_l);
        detail::get_if(*it, "in_pulse_rate", c.heating.in_pulse_rate);
    }
    if (auto it = j.find("background"); it != j.end()) {
        detail::reject_unknown(*it, {"n_residual", "n_extra_p2", "leak_fraction"}, "background");
        detail::get_if(*it, "n_residual", c.background.n_residual);
        detail::get_if(*it, "n_extra_p2", c.background.n_extra_p2);
        detail::get_if(*it, "leak_fraction", c.background.leak_fraction);
    }
    detail::get_if(j, "trials", c.trials);
    detail::get_if(j, "base_seed", c.base_seed);
    if (auto it = j.find("mode"); it != j.end()) c.mode = mode_from_string(it->get<std::string>());
    if (auto it = j.find("records"); it != j.end()) {
        const std::string s = it->get<std::string>();
        if (s == "keep")
            c.keep_records = true;
        else if (s == "drop")
            c.keep_records = false;
        else
            throw config_error("records must be 'keep' or 'drop'");
    }
    if (auto it = j.find("sweep"); it != j.end() && !it->is_null()) {
        detail::reject_unknown(*it, {"axis", "start", "step", "stop"}, "sweep");
        SweepSpec s;
        detail::get_if(*it, "axis", s.axis);
        detail::get_if(*it, "start", s.start);
        detail::get_if(*it, "step", s.step);
        detail::get_if(*it, "stop", s.stop);
        c.sweep = s;
    }

    try {
        c.validate();
    } catch (const std::invalid_argument& e) {
        throw config_error(std::string("config validation: ") + e.what());
    }
    return c;
}

inline std::string config_to_json(const ExperimentConfig& c) {
    using detail::json;
    json j{
        {"physical",
         {{"g_o", c.physical.g_o},
          {"kappa", c.physical.kappa},
          {"gamma_m", c.physical.gamma_m},
          {"omega_m", c.physical.omega_m},
          {"wavelength_nm", c.physical.wavelength_nm},
          {"n_th", c.physical.n_th}}},
        {"schedule",
         {{"prep", detail::drive_json(c.schedule.prep)},
          {"meas", detail::drive_json(c.schedule.meas)},
          {"delta_t", c.schedule.delta_T},
          {"tau_f", c.schedule.tau_f},
          {"repetition", c.schedule.repetition},
          {"p_meas", c.schedule.p_meas}}},
        {"detector",
         {{"efficiency", c.detector.efficiency},
          {"dark_rate", c.detector.dark_rate},
          {"filter_rejection", c.detector.filter_rejection}}},
        {"heating",
         {{"n_base", c.heating.n_base},
          {"n_peak", c.heating.n_peak},
          {"t_s", c.heating.t_s},
          {"t_l", c.heating.t_l},
          {"in_pulse_rate", c.heating.in_pulse_rate}}},
        {"background",
         {{"n_residual", c.background.n_residual},
          {"n_extra_p2", c.background.n_extra_p2},
          {"leak_fraction", c.background.leak_fraction}}},
        {"trials", c.trials},
        {"base_seed", c.base_seed},
        {"mode", to_string(c.mode)},
        {"records", c.keep_records ? "keep" : "drop"},
    };
    if (c.sweep)
        j["sweep"] = {{"axis", c.sweep->axis},
                      {"start", c.sweep->start},
                      {"step", c.sweep->step},
                      {"stop", c.sweep->stop}};
    return j.dump(2) + "\n";
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw config_error("cannot open config file: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str());
}

inline void save_config(const ExperimentConfig& c, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw config_error("cannot write config file: " + path);
    f << config_to_json(c);
}

/// FNV-1a hash of the canonical JSON form, for manifests.
inline uint64_t config_hash(const ExperimentConfig& c) {
    const std::string s = config_to_json(c);
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ull;
    }
    return h;
}

}  // namespace phonopair
