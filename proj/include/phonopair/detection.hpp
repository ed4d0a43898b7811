// Stochastic click generation: emission profiles -> photons -> HBT detector
// records, plus the line-oriented record serialization shared with the stats
// tools.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rng.hpp"

namespace phonopair {

struct DetectorSpec {
    double efficiency = 0.1;        // total detection probability per signal photon
    double dark_rate = 1e-4;        // mean dark counts per pulse window
    double filter_rejection = 1e-6; // probability a pump photon leaks into the signal band

    void validate() const {
        if (efficiency <= 0 || efficiency > 1)
            throw std::invalid_argument("DetectorSpec: efficiency must be in (0,1]");
        if (dark_rate < 0) throw std::invalid_argument("DetectorSpec: dark_rate must be >= 0");
        if (filter_rejection < 0 || filter_rejection >= 1)
            throw std::invalid_argument("DetectorSpec: filter_rejection must be in [0,1)");
    }
};

enum class Detector : uint8_t { A = 0, B = 1 };

struct ClickEvent {
    Detector det = Detector::A;
    int pulse = 1;       // 1 = preparation, 2 = measurement
    double t = 0;        // seconds from the start of the pulse window
};

struct ClickRecord {
    uint64_t trial = 0;
    std::vector<ClickEvent> events;

    bool empty() const { return events.empty(); }
};

enum class PhotonOrigin : uint8_t { pair, single, stokes_bg, antistokes_bg, heating_bg, leak };

struct Photon {
    int pulse = 1;
    double t = 0;
    PhotonOrigin origin = PhotonOrigin::single;
};

/// Per-pulse mean signal-photon numbers by origin (pre-detection).
struct EmissionProfile {
    double pair_prob = 0;       // probability of a 2-photon pair emission this pulse
    double single_mean = 0;     // Bernoulli-like single-photon branch mean
    double stokes_bg = 0;       // thermal-statistics background means
    double antistokes_bg = 0;
    double heating_bg = 0;
    double poisson_bg = 0;      // pump leakage (Poisson statistics)
    double duration = 36e-9;    // pulse window, s
    double arrival_tau = 1e-9;  // sub-bin exponential arrival constant, s

    double total_mean() const {
        return 2.0 * pair_prob + single_mean + stokes_bg + antistokes_bg + heating_bg +
               poisson_bg;
    }
};

namespace detail {
inline double truncated_exp_time(Rng& rng, double tau, double duration) {
    // Inverse CDF of an exponential truncated to [0, duration).
    const double cap = -std::expm1(-duration / tau);
    return -tau * std::log1p(-rng.uniform() * cap);
}
}  // namespace detail

/// Samples the photon list for one pulse of one trial. Pair branch emits 0 or
/// 2 photons; thermal backgrounds are Bose sampled; leakage is Poisson.
inline std::vector<Photon> sample_photons(const EmissionProfile& prof, int pulse, Rng& rng) {
    std::vector<Photon> out;
    auto arrival = [&]() { return detail::truncated_exp_time(rng, prof.arrival_tau, prof.duration); };
    if (prof.pair_prob > 0 && rng.bernoulli(prof.pair_prob)) {
        out.push_back({pulse, arrival(), PhotonOrigin::pair});
        out.push_back({pulse, arrival(), PhotonOrigin::pair});
    }
    if (prof.single_mean > 0 && rng.bernoulli(prof.single_mean))
        out.push_back({pulse, arrival(), PhotonOrigin::single});
    for (int i = rng.bose(prof.stokes_bg); i > 0; --i)
        out.push_back({pulse, arrival(), PhotonOrigin::stokes_bg});
    for (int i = rng.bose(prof.antistokes_bg); i > 0; --i)
        out.push_back({pulse, arrival(), PhotonOrigin::antistokes_bg});
    // Heating photons ramp up through the window: density ~ t.
    for (int i = rng.bose(prof.heating_bg); i > 0; --i)
        out.push_back({pulse, prof.duration * std::sqrt(rng.uniform()), PhotonOrigin::heating_bg});
    for (int i = rng.poisson(prof.poisson_bg); i > 0; --i)
        out.push_back({pulse, rng.uniform() * prof.duration, PhotonOrigin::leak});
    return out;
}

/// Routes photons through the 50/50 splitter onto two threshold detectors,
/// applies efficiency, and adds Poisson dark counts uniform in the window.
inline void hbt_detect(const std::vector<Photon>& photons, const DetectorSpec& spec,
                       double window_duration, int pulse, Rng& rng, ClickRecord& record) {
    for (const auto& ph : photons) {
        if (ph.pulse != pulse) continue;
        if (!rng.bernoulli(spec.efficiency)) continue;
        const Detector d = rng.bernoulli(0.5) ? Detector::A : Detector::B;
        record.events.push_back({d, pulse, ph.t});
    }
    for (int d = 0; d < 2; ++d)
        for (int i = rng.poisson(spec.dark_rate); i > 0; --i)
            record.events.push_back(
                {static_cast<Detector>(d), pulse, rng.uniform() * window_duration});
}

inline void sort_events(ClickRecord& record) {
    std::sort(record.events.begin(), record.events.end(), [](const ClickEvent& x, const ClickEvent& y) {
        if (x.pulse != y.pulse) return x.pulse < y.pulse;
        if (x.t != y.t) return x.t < y.t;
        return static_cast<int>(x.det) < static_cast<int>(y.det);
    });
}

// ---- line-oriented record format -------------------------------------------
// One trial per line: trial index, then semicolon-separated events
// "detector,pulse,time_ns". Example:
//   17 A,1,0.532;B,2,12.250

inline void write_record(std::ostream& os, const ClickRecord& r) {
    os << r.trial;
    bool first = true;
    char buf[64];
    for (const auto& e : r.events) {
        std::snprintf(buf, sizeof buf, "%s%c,%d,%.6f", first ? " " : ";",
                      e.det == Detector::A ? 'A' : 'B', e.pulse, e.t * 1e9);
        os << buf;
        first = false;
    }
    os << '\n';
}

inline ClickRecord parse_record(const std::string& line) {
    ClickRecord r;
    std::istringstream is(line);
    if (!(is >> r.trial)) throw std::runtime_error("parse_record: bad trial index: " + line);
    std::string rest;
    std::getline(is, rest);
    size_t pos = rest.find_first_not_of(' ');
    if (pos == std::string::npos) return r;
    rest = rest.substr(pos);
    std::istringstream es(rest);
    std::string tok;
    while (std::getline(es, tok, ';')) {
        ClickEvent e;
        char det;
        double t_ns;
        if (std::sscanf(tok.c_str(), "%c,%d,%lf", &det, &e.pulse, &t_ns) != 3 ||
            (det != 'A' && det != 'B'))
            throw std::runtime_error("parse_record: bad event token: " + tok);
        e.det = det == 'A' ? Detector::A : Detector::B;
        e.t = t_ns * 1e-9;
        r.events.push_back(e);
    }
    return r;
}

}  // namespace phonopair
