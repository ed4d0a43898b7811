// phonopair: pulsed optomechanical phonon-pair experiment simulator.
//
// Subcommands: preset, run, sweep, analyze, report. See --help per command.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "phonopair/phonopair.hpp"

namespace pp = phonopair;
namespace fs = std::filesystem;

namespace {

struct CommonOpts {
    std::string config_path;
    std::optional<uint64_t> seed;
    std::optional<uint64_t> trials;
    std::optional<std::string> mode;
    std::string out_dir = "out";
    std::optional<std::string> records;  // keep | drop
    std::optional<int> workers;
    std::optional<std::string> sweep;    // AXIS=START:STEP:END
};

void add_common(CLI::App* cmd, CommonOpts& o, bool with_sweep) {
    cmd->add_option("--config", o.config_path, "Config file (JSON); empty/missing keys take paper presets");
    cmd->add_option("--seed", o.seed, "Base RNG seed (u64)");
    cmd->add_option("--trials", o.trials, "Number of trials");
    cmd->add_option("--mode", o.mode, "Simulation fidelity: amplitude | master-equation")
        ->check(CLI::IsMember({"amplitude", "master-equation"}));
    cmd->add_option("--out", o.out_dir, "Output directory for the result bundle");
    cmd->add_option("--records", o.records, "Persist raw click records: keep | drop")
        ->check(CLI::IsMember({"keep", "drop"}));
    cmd->add_option("--workers", o.workers,
                    "Worker threads (default: $PHONOPAIR_WORKERS or hardware concurrency)");
    if (with_sweep)
        cmd->add_option("--sweep", o.sweep,
                        "Sweep axis AXIS=START:STEP:END; AXIS in {delta_t, tau_f, drive_power}; "
                        "delta_t/tau_f values in ns");
}

pp::SweepSpec parse_sweep_arg(const std::string& s) {
    const size_t eq = s.find('=');
    if (eq == std::string::npos) throw pp::config_error("--sweep expects AXIS=START:STEP:END");
    pp::SweepSpec spec;
    spec.axis = s.substr(0, eq);
    double a, b, c;
    if (std::sscanf(s.c_str() + eq + 1, "%lf:%lf:%lf", &a, &b, &c) != 3)
        throw pp::config_error("--sweep expects AXIS=START:STEP:END with numeric bounds");
    const double unit = (spec.axis == "delta_t" || spec.axis == "tau_f") ? 1e-9 : 1.0;
    spec.start = a * unit;
    spec.step = b * unit;
    spec.stop = c * unit;
    spec.validate();
    return spec;
}

pp::ExperimentConfig assemble_config(const CommonOpts& o, bool require_sweep) {
    pp::ExperimentConfig cfg =
        o.config_path.empty() ? pp::ExperimentConfig::paper() : pp::load_config(o.config_path);
    if (o.seed) cfg.base_seed = *o.seed;
    if (o.trials) cfg.trials = *o.trials;
    if (o.mode) cfg.mode = pp::mode_from_string(*o.mode);
    if (o.records) cfg.keep_records = *o.records == "keep";
    if (o.sweep) cfg.sweep = parse_sweep_arg(*o.sweep);
    if (require_sweep && !cfg.sweep)
        throw pp::config_error("sweep: no sweep axis given (use --sweep or the config file)");
    cfg.validate();
    return cfg;
}

void print_summary(const pp::RunBundle& b) {
    std::printf("trials: %llu  mode: %s\n", static_cast<unsigned long long>(b.cfg.trials),
                pp::to_string(b.cfg.mode).c_str());
    std::printf("g2_pre(0)      = %.3f +/- %.3f\n", b.g2_p1[0].value, b.g2_p1[0].sigma);
    std::printf("g2_meas(0,%2.0fns)= %.3f +/- %.3f\n", *b.g2_p2[0].window * 1e9, b.g2_p2[0].value,
                b.g2_p2[0].sigma);
    std::printf("pulse 1 bound  = %.3f (eta=%.3f)  %s by %.2f sigma\n", b.cs_p1.bound, b.cs_p1.eta,
                b.cs_p1.violated ? "VIOLATED" : "not violated", b.cs_p1.sigmas);
    std::printf("fourfold: n_22=%llu n_20=%llu n_02=%llu n_00=%llu\n",
                static_cast<unsigned long long>(b.fourfold.n_22),
                static_cast<unsigned long long>(b.fourfold.n_20),
                static_cast<unsigned long long>(b.fourfold.n_02),
                static_cast<unsigned long long>(b.fourfold.n_00));
}

int cmd_run(const CommonOpts& o, bool require_sweep) {
    const pp::ExperimentConfig cfg = assemble_config(o, require_sweep);
    const int workers = pp::worker_count(o.workers);
    const auto t0 = std::chrono::steady_clock::now();
    const pp::RunBundle b = pp::execute_run(cfg, workers);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    pp::write_bundle(b, o.out_dir, wall, workers);
    print_summary(b);
    std::printf("bundle written to %s (%.1f s, %d workers)\n", o.out_dir.c_str(), wall, workers);
    return 0;
}

int cmd_analyze(const std::string& records_path, uint64_t trials, const std::string& out_dir,
                std::optional<double> window_ns, uint64_t delta_n_max) {
    std::ifstream f(records_path);
    if (!f) {
        std::fprintf(stderr, "analyze: cannot open records file %s\n", records_path.c_str());
        return 1;
    }
    const pp::RecordSet rs = pp::read_records(f, trials);
    std::optional<double> window;
    if (window_ns) window = *window_ns * 1e-9;

    fs::create_directories(out_dir);
    std::ofstream g2f(fs::path(out_dir) / "g2.csv", std::ios::binary);
    g2f << "pulse,delta_n,window_ns,value,sigma,coincidences,singles_a,singles_b,trials\n";
    for (int pulse : {1, 2}) {
        for (uint64_t dn = 0; dn <= delta_n_max; ++dn) {
            try {
                const pp::G2Estimate e =
                    pp::g2_cross_trials(rs, pulse, dn, pulse == 2 ? window : std::nullopt);
                char wbuf[32] = "";
                if (e.window) std::snprintf(wbuf, sizeof wbuf, "%.9g", *e.window * 1e9);
                g2f << pulse << ',' << dn << ',' << wbuf << ',' << e.value << ',' << e.sigma << ','
                    << e.coincidences << ',' << e.singles_a << ',' << e.singles_b << ','
                    << e.trials << '\n';
            } catch (const pp::stats_error& e) {
                std::fprintf(stderr, "analyze: pulse %d dN %llu skipped: %s\n", pulse,
                             static_cast<unsigned long long>(dn), e.what());
            }
        }
    }
    const pp::FourfoldTable t = pp::fourfold_coincidences(rs);
    std::ofstream fff(fs::path(out_dir) / "fourfold.csv", std::ios::binary);
    fff << "n_22,n_20,n_02,n_00,trials\n"
        << t.n_22 << ',' << t.n_20 << ',' << t.n_02 << ',' << t.n_00 << ',' << t.trials << '\n';
    std::printf("analyze: wrote g2.csv and fourfold.csv to %s\n", out_dir.c_str());
    return 0;
}

int cmd_report(const std::string& in_dir) {
    const fs::path dir(in_dir);
    std::vector<std::string> missing;
    nlohmann::json results, manifest;
    {
        std::ifstream f(dir / "results.json");
        if (!f)
            missing.push_back("results.json");
        else
            f >> results;
    }
    {
        std::ifstream f(dir / "manifest.json");
        if (!f)
            missing.push_back("manifest.json");
        else
            f >> manifest;
    }
    for (const char* key : {"g2_pulse1", "g2_pulse2", "cs_pulse1", "cs_pulse2", "fourfold"})
        if (!results.contains(key)) missing.push_back(std::string("results.json: ") + key);
    if (!missing.empty()) {
        std::fprintf(stderr, "report: bundle incomplete, missing components:\n");
        for (const auto& m : missing) std::fprintf(stderr, "  - %s\n", m.c_str());
        return 1;
    }

    std::printf("== phonopair report (%s) ==\n", in_dir.c_str());
    std::printf("config hash %s  seed %llu  trials %llu  mode %s  (v%s)\n",
                manifest.value("config_hash", std::string("?")).c_str(),
                static_cast<unsigned long long>(manifest.value("base_seed", 0ull)),
                static_cast<unsigned long long>(manifest.value("trials", 0ull)),
                manifest.value("mode", std::string("?")).c_str(),
                manifest.value("version", std::string("?")).c_str());

    auto print_g2_list = [&](const char* title, const nlohmann::json& list) {
        std::printf("%s\n", title);
        for (const auto& e : list) {
            std::printf("  dN=%llu%s: g2 = %.3f +/- %.3f  (C=%.0f, S_A=%llu, S_B=%llu)\n",
                        static_cast<unsigned long long>(e.value("delta_n", 0ull)),
                        e.contains("window_ns")
                            ? (" w=" + std::to_string(e["window_ns"].get<double>()) + "ns").c_str()
                            : "",
                        e.value("value", 0.0), e.value("sigma", 0.0), e.value("coincidences", 0.0),
                        static_cast<unsigned long long>(e.value("singles_a", 0ull)),
                        static_cast<unsigned long long>(e.value("singles_b", 0ull)));
        }
    };
    print_g2_list("pulse 1 g2(dN):", results["g2_pulse1"]);
    print_g2_list("pulse 2 g2(dN):", results["g2_pulse2"]);

    auto print_cs = [&](const char* title, const nlohmann::json& r) {
        std::printf("%s g2 = %.3f +/- %.3f vs bound %.3f +/- %.3f (eta=%.3f): %s, %.2f sigma "
                    "(%.2f propagated)\n",
                    title, r["g2"].value("value", 0.0), r["g2"].value("sigma", 0.0),
                    r.value("bound", 0.0), r.value("bound_sigma", 0.0), r.value("eta", 0.0),
                    r.value("violated", false) ? "VIOLATED" : "not violated",
                    r.value("sigmas", 0.0), r.value("sigmas_propagated", 0.0));
    };
    print_cs("Cauchy-Schwarz pulse 1:", results["cs_pulse1"]);
    print_cs("Cauchy-Schwarz pulse 2:", results["cs_pulse2"]);

    const auto& ff = results["fourfold"];
    std::printf("fourfold (N=%llu trials):\n",
                static_cast<unsigned long long>(ff.value("trials", 0ull)));
    std::printf("            pulse2: yes     no\n");
    std::printf("  pulse1 yes   %8llu %8llu\n", static_cast<unsigned long long>(ff.value("n_22", 0ull)),
                static_cast<unsigned long long>(ff.value("n_20", 0ull)));
    std::printf("  pulse1 no    %8llu %8llu\n", static_cast<unsigned long long>(ff.value("n_02", 0ull)),
                static_cast<unsigned long long>(ff.value("n_00", 0ull)));

    if (results.contains("sweep_fit")) {
        const auto& fit = results["sweep_fit"];
        std::printf("sweep fit: amplitude %.4g, decay %.4g s, offset %.4g%s\n",
                    fit.value("amplitude", 0.0), fit.value("decay_constant", 0.0),
                    fit.value("offset", 0.0),
                    fit.value("degenerate", false) ? "  [degenerate]" : "");
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Pulsed optomechanical phonon-pair experiment simulator"};
    app.require_subcommand(1);

    CommonOpts run_opts, sweep_opts;
    auto* run_cmd = app.add_subcommand("run", "Execute trials and write the analysis bundle");
    add_common(run_cmd, run_opts, true);
    auto* sweep_cmd = app.add_subcommand("sweep", "Run a parameter sweep (one CSV row per point)");
    add_common(sweep_cmd, sweep_opts, true);

    std::string analyze_records, analyze_out = "out";
    uint64_t analyze_trials = 0, analyze_dn = 4;
    std::optional<double> analyze_window_ns;
    auto* an_cmd = app.add_subcommand("analyze", "Compute statistics from stored click records");
    an_cmd->add_option("--records-file", analyze_records, "ClickRecord text file")->required();
    an_cmd->add_option("--trials", analyze_trials, "Total trial count of the stored run")->required();
    an_cmd->add_option("--out", analyze_out, "Output directory");
    an_cmd->add_option("--window", analyze_window_ns, "Pulse-2 analysis window tau_f in ns");
    an_cmd->add_option("--delta-n-max", analyze_dn, "Largest trial offset delta_N");

    std::string report_dir = "out";
    auto* rep_cmd = app.add_subcommand("report", "Print a human-readable summary of a bundle");
    rep_cmd->add_option("--in", report_dir, "Bundle directory");

    std::string preset_out;
    auto* pre_cmd = app.add_subcommand("preset", "Emit the paper-values config");
    pre_cmd->add_option("--out", preset_out, "Write to file instead of stdout");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run_cmd->parsed()) return cmd_run(run_opts, false);
        if (sweep_cmd->parsed()) return cmd_run(sweep_opts, true);
        if (an_cmd->parsed())
            return cmd_analyze(analyze_records, analyze_trials, analyze_out, analyze_window_ns,
                               analyze_dn);
        if (rep_cmd->parsed()) return cmd_report(report_dir);
        if (pre_cmd->parsed()) {
            const std::string text = pp::config_to_json(pp::ExperimentConfig::paper());
            if (preset_out.empty()) {
                std::fputs(text.c_str(), stdout);
            } else {
                std::ofstream f(preset_out);
                if (!f) {
                    std::fprintf(stderr, "preset: cannot write %s\n", preset_out.c_str());
                    return 1;
                }
                f << text;
            }
            return 0;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
