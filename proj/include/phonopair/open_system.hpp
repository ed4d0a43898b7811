// GKSL master-equation integration with cavity decay, mechanical damping and
// a time-dependent bath occupation modelling laser heating.
#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "dynamics.hpp"
#include "linalg.hpp"

namespace phonopair {

/// One drive pulse in a heating history. `energy` is the pulse drive energy
/// relative to the reference preparation pulse (n_photons * tau normalized).
struct PulseEvent {
    double t_end = 0;     // absolute time at which the pulse ends, s
    double energy = 1.0;  // relative drive energy deposited
};

/// Laser-heating model. `heating_profile` gives the effective added mode
/// occupation after a pulse (the quantity the pump-probe experiment reads
/// out): it rises with t_s and decays with t_l. `bath_transient` gives the
/// bath occupation that, fed through the gamma_m channels of the master
/// equation, reproduces that mode response: a hot-bath spike relaxing with
/// t_s, with amplitude chosen so the mode picks up n_peak.
struct HeatingModel {
    double n_base = 0.014;   // bath occupation with no drive history (= n_th)
    double n_peak = 0.3;     // added mode occupation at the heating maximum, per unit energy
    double t_s = 0.22e-6;    // fast thermalization constant, s
    double t_l = 1.46e-6;    // slow decay constant, s
    double in_pulse_rate = 1.4e6;  // occupation growth rate while a pulse is on, 1/s per unit energy

    void validate() const {
        if (n_base < 0 || n_peak < 0 || t_s <= 0 || t_l <= 0 || in_pulse_rate < 0)
            throw std::invalid_argument("HeatingModel: invalid parameters");
    }
};

/// Effective occupation added by past pulses, evaluated at absolute time t:
/// n_base + sum over pulses of n_peak*energy*(1 - e^{-dt/t_s}) e^{-dt/t_l}.
inline double heating_profile(const HeatingModel& model, std::span<const PulseEvent> pulses,
                              double t) {
    model.validate();
    double n = model.n_base;
    for (const auto& p : pulses) {
        const double dt = t - p.t_end;
        if (dt <= 0) continue;
        n += model.n_peak * p.energy * (1.0 - std::exp(-dt / model.t_s)) *
             std::exp(-dt / model.t_l);
    }
    return n;
}

/// Bath occupation driving the gamma_m channels in master-equation mode.
/// The hot-bath amplitude n_peak*(1/(gamma_m t_s) - 1) makes the mode
/// response n_peak*(e^{-dt/t_l'} - e^{-dt/t_s}) with t_l' = 1/gamma_m.
inline double bath_transient(const HeatingModel& model, std::span<const PulseEvent> pulses,
                             double t, double gamma_m) {
    model.validate();
    const double scale = 1.0 / (gamma_m * model.t_s) - 1.0;
    if (scale <= 0)
        throw std::invalid_argument("bath_transient: requires gamma_m * t_s < 1");
    double n = model.n_base;
    for (const auto& p : pulses) {
        const double dt = t - p.t_end;
        if (dt <= 0) continue;
        n += model.n_peak * p.energy * scale * std::exp(-dt / model.t_s);
    }
    return n;
}

/// Collapse operators already scaled by sqrt(rate).
struct CollapseSet {
    std::vector<Mat> ops;

    static CollapseSet build(ModeDims dims, double kappa, double gamma_m, double n_bath) {
        if (kappa < 0 || gamma_m < 0 || n_bath < 0)
            throw std::invalid_argument("CollapseSet: rates must be >= 0");
        CollapseSet c;
        const Mat a = tensor(annihilation(dims.n_a), identity(dims.n_m));
        const Mat m = tensor(identity(dims.n_a), annihilation(dims.n_m));
        if (kappa > 0) c.ops.push_back(std::sqrt(kappa) * a);
        if (gamma_m > 0) {
            c.ops.push_back(std::sqrt(gamma_m * (1.0 + n_bath)) * m);
            if (n_bath > 0) c.ops.push_back(std::sqrt(gamma_m * n_bath) * Mat(m.adjoint()));
        }
        return c;
    }
};

/// dRho/dt = -i[H, rho] + sum_k (L rho L' - (L'L rho + rho L'L)/2).
inline Mat lindblad_rhs(const Mat& rho, const Mat& H, const CollapseSet& c) {
    if (rho.rows() != rho.cols() || H.rows() != rho.rows())
        throw dimension_error("lindblad_rhs: dimension mismatch");
    Mat d = cx(0, -1) * (H * rho - rho * H);
    for (const Mat& L : c.ops) {
        if (L.rows() != rho.rows()) throw dimension_error("lindblad_rhs: collapse op mismatch");
        const Mat LdL = L.adjoint() * L;
        d += L * rho * L.adjoint() - 0.5 * (LdL * rho + rho * LdL);
    }
    return d;
}

/// Time-dependent integration schedule.
struct Schedule {
    double t0 = 0, t1 = 0;
    std::function<const Mat*(double)> hamiltonian;  // may return nullptr for H = 0
    std::function<double(double)> n_bath;           // bath occupation vs time
    double kappa = 0;
    double gamma_m = 0;
};

struct TrajectoryPoint {
    double t = 0;
    double n_optical = 0;
    double n_mechanical = 0;
};

struct Trajectory {
    std::vector<TrajectoryPoint> points;
    DensityMatrix final_state;
    double max_trace_drift = 0;   // |tr-1| before renormalization, worst step
    double min_eigenvalue = 0;    // most negative eigenvalue seen at stored steps
};

struct integration_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr double kTraceTol = 1e-8;
inline constexpr double kPositivityTol = -1e-9;

/// Fixed-step RK4 trajectory. Trace is renormalized each step and the drift
/// accounted; eigenvalue clipping is never performed. `store_stride` controls
/// how often expectation values are recorded (the final state always is).
inline Trajectory integrate(const DensityMatrix& rho0, const Schedule& sched, double dt,
                            int store_stride = 1, int eig_check_stride = 16) {
    if (dt <= 0) throw std::invalid_argument("integrate: dt must be > 0");
    const double span = sched.t1 - sched.t0;
    if (span < 0) throw std::invalid_argument("integrate: t1 < t0");
    const long nsteps = std::lround(std::ceil(span / dt - 1e-12));
    const ModeDims dims = rho0.dims;
    const Mat zero = Mat::Zero(dims.joint(), dims.joint());

    Trajectory traj;
    traj.min_eigenvalue = 0;
    Mat rho = rho0.rho;

    auto rhs = [&](const Mat& r, double t) -> Mat {
        const Mat* Hp = sched.hamiltonian ? sched.hamiltonian(t) : nullptr;
        const double nb = sched.n_bath ? sched.n_bath(t) : 0.0;
        const CollapseSet c = CollapseSet::build(dims, sched.kappa, sched.gamma_m, nb);
        return lindblad_rhs(r, Hp ? *Hp : zero, c);
    };

    auto record = [&](double t, const Mat& r) {
        traj.points.push_back({t, DensityMatrix{dims, r}.mean_occupation_optical(),
                               DensityMatrix{dims, r}.mean_occupation_mechanical()});
    };
    record(sched.t0, rho);

    for (long i = 0; i < nsteps; ++i) {
        const double t = sched.t0 + i * dt;
        const double h = std::min(dt, sched.t1 - t);
        const Mat k1 = rhs(rho, t);
        const Mat k2 = rhs(rho + 0.5 * h * k1, t + 0.5 * h);
        const Mat k3 = rhs(rho + 0.5 * h * k2, t + 0.5 * h);
        const Mat k4 = rhs(rho + h * k3, t + h);
        rho += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);

        const double tr = rho.trace().real();
        const double drift = std::abs(tr - 1.0);
        traj.max_trace_drift = std::max(traj.max_trace_drift, drift);
        if (drift > kTraceTol)
            throw integration_error("integrate: trace drift exceeds tolerance, reduce dt");
        rho /= tr;

        if ((i + 1) % eig_check_stride == 0 || i + 1 == nsteps) {
            const double mineig = DensityMatrix{dims, rho}.min_eigenvalue();
            traj.min_eigenvalue = std::min(traj.min_eigenvalue, mineig);
            if (mineig < kPositivityTol)
                throw integration_error(
                    "integrate: positivity violated beyond tolerance, reduce dt");
        }
        if ((i + 1) % store_stride == 0 || i + 1 == nsteps) record(t + h, rho);
    }
    traj.final_state = DensityMatrix{dims, rho};
    return traj;
}

}  // namespace phonopair
