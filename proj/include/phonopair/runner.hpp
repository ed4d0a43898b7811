// Experiment execution: deterministic parallel trial loop, reference runs,
// analysis bundle assembly and on-disk persistence (CSV + JSON manifest).
#pragma once

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "config.hpp"
#include "stats.hpp"

namespace phonopair {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kWorkersEnv = "PHONOPAIR_WORKERS";

/// Worker count: explicit override > PHONOPAIR_WORKERS > hardware concurrency.
inline int worker_count(std::optional<int> override_n = std::nullopt) {
    int n = 0;
    if (override_n) {
        n = *override_n;
    } else if (const char* env = std::getenv(kWorkersEnv)) {
        n = std::atoi(env);
    } else {
        n = static_cast<int>(std::thread::hardware_concurrency());
    }
    if (n < 1) n = 1;
    if (n > 256) n = 256;
    return n;
}

/// Runs `trials` independent trials across `workers` threads. Per-trial seeds
/// are derived from (base_seed, trial index), so the record set is identical
/// for any worker count; only nonempty records are kept.
inline RecordSet run_trials(const TrialModel& model, uint64_t trials, uint64_t base_seed,
                            int workers) {
    RecordSet rs;
    rs.n_trials = trials;
    if (workers < 1) workers = 1;
    if (static_cast<uint64_t>(workers) > trials) workers = static_cast<int>(trials);

    std::vector<std::vector<ClickRecord>> chunks(workers);
    std::vector<std::thread> pool;
    const uint64_t per = trials / workers, extra = trials % workers;
    uint64_t start = 0;
    for (int w = 0; w < workers; ++w) {
        const uint64_t count = per + (static_cast<uint64_t>(w) < extra ? 1 : 0);
        pool.emplace_back([&model, base_seed, start, count, &out = chunks[w]]() {
            for (uint64_t i = 0; i < count; ++i) {
                ClickRecord rec = simulate_trial(model, base_seed, start + i);
                if (!rec.empty()) out.push_back(std::move(rec));
            }
        });
        start += count;
    }
    for (auto& t : pool) t.join();
    for (auto& c : chunks)
        for (auto& r : c) rs.records.push_back(std::move(r));
    return rs;  // chunks are contiguous trial ranges, so the result is sorted
}

/// Mode-aware trial model. In master-equation mode the branch probabilities
/// are extracted from an open-system integration of the preparation pulse and
/// mapped back onto the sampler's (lambda, p_r) parameters.
inline TrialModel build_model(const ExperimentConfig& cfg) {
    TrialModel m = make_trial_model(cfg.physical, cfg.schedule, cfg.detector, cfg.heating,
                                    cfg.background);
    if (cfg.mode == SimMode::master_equation && cfg.schedule.prep.n_b > 0) {
        const PrepResult prep =
            run_preparation(cfg.physical, cfg.schedule, cfg.heating, ModeDims{4, 4}, 1e-10);
        const BranchProbs& b = prep.branches;
        const double K = b.p11 + b.p20 + b.p02;
        if (K > 0 && K < 0.25) {
            m.p_r = (b.p20 + b.p02) / K;
            m.lambda = (1.0 - std::sqrt(1.0 - 4.0 * K)) / 2.0;
        }
    }
    return m;
}

struct SweepPoint {
    double value = 0;  // axis value in config units (seconds or power factor)
    G2Estimate g2;
};

struct RunBundle {
    ExperimentConfig cfg;
    std::vector<G2Estimate> g2_p1, g2_p2;  // delta_N = 0..4; p2 windowed at tau_f
    CSBoundReport cs_p1, cs_p2;
    FourfoldTable fourfold;
    std::vector<SweepPoint> sweep_points;
    std::optional<FitResult> sweep_fit;
    RecordSet records;
};

namespace detail {

inline constexpr uint64_t kRefRedStream = 0x7265645f726566ull;   // distinct reference seeds
inline constexpr uint64_t kRefBlueStream = 0x626c75655f726566ull;
inline constexpr uint64_t kSweepStream = 0x73776565705f30ull;

/// Reference runs measure the g2 of a single-drive source; g2 is invariant
/// under loss, so they run at unit efficiency for usable coincidence counts.
inline ExperimentConfig reference_config(const ExperimentConfig& cfg, bool red_only) {
    ExperimentConfig ref = cfg;
    (red_only ? ref.schedule.prep.n_b : ref.schedule.prep.n_r) = 0;
    ref.detector.efficiency = 1.0;
    ref.base_seed = derive_seed(cfg.base_seed, red_only ? kRefRedStream : kRefBlueStream);
    return ref;
}

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

}  // namespace detail

inline constexpr uint64_t kMaxDeltaN = 4;

/// Full run: main trial loop, single-drive reference runs, g2 tables, bound
/// reports, fourfold classification and the optional sweep.
inline RunBundle execute_run(const ExperimentConfig& cfg, int workers) {
    cfg.validate();
    RunBundle b;
    b.cfg = cfg;

    const TrialModel model = build_model(cfg);
    b.records = run_trials(model, cfg.trials, cfg.base_seed, workers);

    const ExperimentConfig red_cfg = detail::reference_config(cfg, true);
    const ExperimentConfig blue_cfg = detail::reference_config(cfg, false);
    const RecordSet ref_red = run_trials(build_model(red_cfg), cfg.trials, red_cfg.base_seed, workers);
    const RecordSet ref_blue =
        run_trials(build_model(blue_cfg), cfg.trials, blue_cfg.base_seed, workers);

    for (uint64_t dn = 0; dn <= kMaxDeltaN; ++dn) {
        b.g2_p1.push_back(g2_cross_trials(b.records, 1, dn));
        b.g2_p2.push_back(g2_cross_trials(b.records, 2, dn, cfg.schedule.tau_f));
    }
    const G2Estimate g2_ref_r = g2_cross_trials(ref_red, 1, 0);
    const G2Estimate g2_ref_b = g2_cross_trials(ref_blue, 1, 0);
    b.cs_p1 = cs_bound(b.g2_p1[0], g2_ref_r, g2_ref_b);
    // pulse 2 sees only the red measurement tone: both references are the
    // red-only run's pulse-2 statistics
    const G2Estimate g2_ref_p2 = g2_cross_trials(ref_red, 2, 0, cfg.schedule.tau_f);
    b.cs_p2 = cs_bound(b.g2_p2[0], g2_ref_p2, g2_ref_p2);
    b.fourfold = fourfold_coincidences(b.records);

    if (cfg.sweep) {
        const std::vector<double> axis = cfg.sweep->values();
        std::vector<double> xs, ys;
        for (size_t i = 0; i < axis.size(); ++i) {
            G2Estimate est;
            if (cfg.sweep->axis == "tau_f") {
                est = g2_cross_trials(b.records, 2, 0, axis[i]);
            } else {
                ExperimentConfig pt = cfg;
                pt.sweep.reset();
                if (cfg.sweep->axis == "delta_t") {
                    pt.schedule.delta_T = axis[i];
                    pt.schedule.tau_f = std::min(pt.schedule.tau_f, pt.schedule.meas.effective_tau());
                } else {  // drive_power: scale both tones' photon numbers
                    pt.schedule.prep.n_r *= axis[i];
                    pt.schedule.prep.n_b *= axis[i];
                }
                pt.base_seed = derive_seed(cfg.base_seed, detail::kSweepStream + i);
                const RecordSet rs = run_trials(build_model(pt), pt.trials, pt.base_seed, workers);
                est = g2_cross_trials(rs, cfg.sweep->axis == "delta_t" ? 2 : 1, 0,
                                      cfg.sweep->axis == "delta_t"
                                          ? std::optional<double>(pt.schedule.tau_f)
                                          : std::nullopt);
            }
            b.sweep_points.push_back({axis[i], est});
            xs.push_back(axis[i]);
            ys.push_back(est.value);
        }
        try {
            if (cfg.sweep->axis == "delta_t")
                b.sweep_fit = g2_vs_delay(xs, ys);
            else if (xs.size() >= 4)
                b.sweep_fit = fit_exponential(xs, ys, FitModel::single);
        } catch (const fit_error&) {
            // sweep too short or degenerate for a fit; points are still reported
        }
    }
    return b;
}

// ---- persistence -------------------------------------------------------------

namespace detail {

inline void write_g2_csv(std::ostream& os, const RunBundle& b) {
    os << "pulse,delta_n,window_ns,value,sigma,coincidences,singles_a,singles_b,trials\n";
    auto row = [&](int pulse, const G2Estimate& e) {
        os << pulse << ',' << e.delta_N << ',' << (e.window ? fmt(*e.window * 1e9) : "") << ','
           << fmt(e.value) << ',' << fmt(e.sigma) << ',' << fmt(e.coincidences) << ','
           << e.singles_a << ',' << e.singles_b << ',' << e.trials << '\n';
    };
    for (const auto& e : b.g2_p1) row(1, e);
    for (const auto& e : b.g2_p2) row(2, e);
}

inline void write_cs_csv(std::ostream& os, const RunBundle& b) {
    os << "pulse,g2,g2_sigma,g2_r,g2_r_sigma,g2_b,g2_b_sigma,eta,bound,bound_sigma,violated,"
          "sigmas,sigmas_propagated\n";
    auto row = [&](int pulse, const CSBoundReport& r) {
        os << pulse << ',' << fmt(r.g2.value) << ',' << fmt(r.g2.sigma) << ',' << fmt(r.g2_r.value)
           << ',' << fmt(r.g2_r.sigma) << ',' << fmt(r.g2_b.value) << ',' << fmt(r.g2_b.sigma)
           << ',' << fmt(r.eta) << ',' << fmt(r.bound) << ',' << fmt(r.bound_sigma) << ','
           << (r.violated ? 1 : 0) << ',' << fmt(r.sigmas) << ',' << fmt(r.sigmas_propagated)
           << '\n';
    };
    row(1, b.cs_p1);
    row(2, b.cs_p2);
}

inline void write_fourfold_csv(std::ostream& os, const FourfoldTable& t) {
    os << "n_22,n_20,n_02,n_00,trials\n";
    os << t.n_22 << ',' << t.n_20 << ',' << t.n_02 << ',' << t.n_00 << ',' << t.trials << '\n';
}

inline void write_sweep_csv(std::ostream& os, const RunBundle& b) {
    os << "axis,value,g2,sigma,coincidences,singles_a,singles_b,trials\n";
    for (const auto& p : b.sweep_points) {
        os << b.cfg.sweep->axis << ',' << fmt(p.value) << ',' << fmt(p.g2.value) << ','
           << fmt(p.g2.sigma) << ',' << fmt(p.g2.coincidences) << ',' << p.g2.singles_a << ','
           << p.g2.singles_b << ',' << p.g2.trials << '\n';
    }
}

inline nlohmann::json g2_json(const G2Estimate& e) {
    nlohmann::json j{{"value", e.value},         {"sigma", e.sigma},
                     {"delta_n", e.delta_N},     {"coincidences", e.coincidences},
                     {"singles_a", e.singles_a}, {"singles_b", e.singles_b},
                     {"trials", e.trials}};
    if (e.window) j["window_ns"] = *e.window * 1e9;
    return j;
}

inline nlohmann::json cs_json(const CSBoundReport& r) {
    return nlohmann::json{{"g2", g2_json(r.g2)},
                          {"g2_r", g2_json(r.g2_r)},
                          {"g2_b", g2_json(r.g2_b)},
                          {"eta", r.eta},
                          {"bound", r.bound},
                          {"bound_sigma", r.bound_sigma},
                          {"violated", r.violated},
                          {"sigmas", r.sigmas},
                          {"sigmas_propagated", r.sigmas_propagated}};
}

inline nlohmann::json fit_json(const FitResult& f) {
    return nlohmann::json{{"amplitude", f.amplitude},
                          {"decay_constant", f.decay_constant},
                          {"rise_constant", f.rise_constant},
                          {"offset", f.offset},
                          {"residual_norm", f.residual_norm},
                          {"iterations", f.iterations},
                          {"degenerate", f.degenerate}};
}

}  // namespace detail

/// Writes the result bundle: CSV tables, results.json, manifest.json and,
/// when requested, the raw click records.
inline void write_bundle(const RunBundle& b, const std::string& out_dir, double wall_seconds,
                         int workers) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw std::runtime_error("cannot create output directory " + out_dir + ": " + ec.message());

    auto open = [&](const char* name) {
        std::ofstream f(fs::path(out_dir) / name, std::ios::binary);
        if (!f) throw std::runtime_error(std::string("cannot write ") + name + " in " + out_dir);
        return f;
    };

    {
        auto f = open("g2.csv");
        detail::write_g2_csv(f, b);
    }
    {
        auto f = open("cs_bound.csv");
        detail::write_cs_csv(f, b);
    }
    {
        auto f = open("fourfold.csv");
        detail::write_fourfold_csv(f, b.fourfold);
    }
    if (b.cfg.sweep) {
        auto f = open("sweep.csv");
        detail::write_sweep_csv(f, b);
    }
    if (b.cfg.keep_records) {
        auto f = open("records.txt");
        for (const auto& r : b.records.records) write_record(f, r);
    }
    {
        auto f = open("config.json");
        f << config_to_json(b.cfg);
    }

    nlohmann::json results;
    results["g2_pulse1"] = nlohmann::json::array();
    for (const auto& e : b.g2_p1) results["g2_pulse1"].push_back(detail::g2_json(e));
    results["g2_pulse2"] = nlohmann::json::array();
    for (const auto& e : b.g2_p2) results["g2_pulse2"].push_back(detail::g2_json(e));
    results["cs_pulse1"] = detail::cs_json(b.cs_p1);
    results["cs_pulse2"] = detail::cs_json(b.cs_p2);
    results["fourfold"] = {{"n_22", b.fourfold.n_22},
                           {"n_20", b.fourfold.n_20},
                           {"n_02", b.fourfold.n_02},
                           {"n_00", b.fourfold.n_00},
                           {"trials", b.fourfold.trials}};
    if (b.cfg.sweep) {
        results["sweep"] = nlohmann::json::array();
        for (const auto& p : b.sweep_points) {
            nlohmann::json j = detail::g2_json(p.g2);
            j["axis_value"] = p.value;
            results["sweep"].push_back(j);
        }
        if (b.sweep_fit) results["sweep_fit"] = detail::fit_json(*b.sweep_fit);
    }
    {
        auto f = open("results.json");
        f << results.dump(2) << "\n";
    }

    char hash_hex[24];
    std::snprintf(hash_hex, sizeof hash_hex, "%016llx",
                  static_cast<unsigned long long>(config_hash(b.cfg)));
    nlohmann::json manifest{{"config_hash", hash_hex},
                            {"base_seed", b.cfg.base_seed},
                            {"trials", b.cfg.trials},
                            {"mode", to_string(b.cfg.mode)},
                            {"version", kVersion},
                            {"workers", workers},
                            {"wall_seconds", wall_seconds},
                            {"records_kept", b.cfg.keep_records}};
    {
        auto f = open("manifest.json");
        f << manifest.dump(2) << "\n";
    }
}

}  // namespace phonopair
