// Dense complex linear algebra over truncated Fock spaces: ladder operators,
// tensor products, matrix exponentials, state and density-matrix containers.
#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>

namespace phonopair {

using cx = std::complex<double>;
using Mat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;

// Joint dimensions stay small by design; anything past this is a config bug.
inline constexpr long kMaxJointDim = 4096;

struct dimension_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct resource_error : std::length_error {
    using std::length_error::length_error;
};

/// Single-mode annihilation operator on a dim-level truncated Fock space.
/// A[j-1, j] = sqrt(j).
inline Mat annihilation(int dim) {
    if (dim < 2) throw dimension_error("annihilation: dim must be >= 2");
    Mat a = Mat::Zero(dim, dim);
    for (int j = 1; j < dim; ++j) a(j - 1, j) = std::sqrt(static_cast<double>(j));
    return a;
}

inline Mat identity(int dim) {
    if (dim < 1) throw dimension_error("identity: dim must be >= 1");
    return Mat::Identity(dim, dim);
}

/// Kronecker product, A on the optical factor, B on the mechanical factor.
inline Mat tensor(const Mat& A, const Mat& B) {
    if (A.rows() != A.cols() || B.rows() != B.cols())
        throw dimension_error("tensor: operands must be square");
    const long da = A.rows(), db = B.rows();
    if (da * db > kMaxJointDim)
        throw resource_error("tensor: joint dimension exceeds kMaxJointDim");
    Mat C(da * db, da * db);
    for (long i = 0; i < da; ++i)
        for (long j = 0; j < da; ++j)
            C.block(i * db, j * db, db, db) = A(i, j) * B;
    return C;
}

inline bool is_hermitian(const Mat& A, double tol = 1e-12) {
    if (A.rows() != A.cols()) return false;
    return (A - A.adjoint()).cwiseAbs().maxCoeff() <= tol;
}

/// Matrix exponential by scaling-and-squaring with a degree-13 Pade
/// approximant (Higham 2005).
inline Mat expm(const Mat& A) {
    if (A.rows() != A.cols()) throw dimension_error("expm: matrix must be square");
    if (!A.allFinite()) throw std::invalid_argument("expm: non-finite entries");
    const long n = A.rows();
    static const double b[] = {64764752532480000.0, 32382376266240000.0,
                               7771770303897600.0,  1187353796428800.0,
                               129060195264000.0,   10559470521600.0,
                               670442572800.0,      33522128640.0,
                               1323241920.0,        40840800.0,
                               960960.0,            16380.0,
                               182.0,               1.0};
    const double theta13 = 5.371920351148152;
    const double norm1 = A.cwiseAbs().colwise().sum().maxCoeff();
    int s = 0;
    if (norm1 > theta13) s = static_cast<int>(std::ceil(std::log2(norm1 / theta13)));
    const Mat As = A / std::pow(2.0, s);

    const Mat I = Mat::Identity(n, n);
    const Mat A2 = As * As;
    const Mat A4 = A2 * A2;
    const Mat A6 = A2 * A4;
    const Mat U = As * (A6 * (b[13] * A6 + b[11] * A4 + b[9] * A2) +
                        b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * I);
    const Mat V = A6 * (b[12] * A6 + b[10] * A4 + b[8] * A2) +
                  b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * I;
    Mat R = (V - U).partialPivLu().solve(V + U);
    for (int k = 0; k < s; ++k) R = R * R;
    return R;
}

/// Truncation levels of the joint optical (x) mechanical space.
/// Basis ordering is optical-major: |j,k> maps to index j*n_m + k.
struct ModeDims {
    int n_a = 5;
    int n_m = 5;

    int joint() const { return n_a * n_m; }
    int index(int j, int k) const {
        if (j < 0 || j >= n_a || k < 0 || k >= n_m)
            throw dimension_error("ModeDims::index: level out of range");
        return j * n_m + k;
    }
    bool operator==(const ModeDims&) const = default;
    void validate() const {
        if (n_a < 2 || n_m < 2) throw dimension_error("ModeDims: truncations must be >= 2");
        if (static_cast<long>(n_a) * n_m > kMaxJointDim)
            throw resource_error("ModeDims: joint dimension exceeds kMaxJointDim");
    }
};

struct StateVector {
    ModeDims dims;
    CVec amp;
    bool leakage_flag = false;  // set when a pulse pushed population onto the top level

    static StateVector vacuum(ModeDims d) {
        d.validate();
        StateVector s{d, CVec::Zero(d.joint())};
        s.amp(0) = 1.0;
        return s;
    }
    static StateVector basis(ModeDims d, int j, int k) {
        d.validate();
        StateVector s{d, CVec::Zero(d.joint())};
        s.amp(d.index(j, k)) = 1.0;
        return s;
    }

    double norm() const { return amp.norm(); }
    void normalize() {
        const double n = norm();
        if (n <= 0) throw std::runtime_error("StateVector::normalize: zero norm");
        amp /= n;
    }
    cx project(int j, int k) const { return amp(dims.index(j, k)); }

    /// Population sitting on the highest Fock level of either mode.
    double leakage() const {
        double p = 0;
        for (int k = 0; k < dims.n_m; ++k) p += std::norm(amp(dims.index(dims.n_a - 1, k)));
        for (int j = 0; j < dims.n_a - 1; ++j) p += std::norm(amp(dims.index(j, dims.n_m - 1)));
        return p;
    }
};

inline StateVector apply(const Mat& A, const StateVector& psi) {
    if (A.rows() != A.cols() || A.rows() != psi.amp.size())
        throw dimension_error("apply: operator/state dimension mismatch");
    StateVector out = psi;
    out.amp = A * psi.amp;
    return out;
}

inline cx inner(const StateVector& a, const StateVector& b) {
    if (a.amp.size() != b.amp.size()) throw dimension_error("inner: dimension mismatch");
    return a.amp.dot(b.amp);  // Eigen dot conjugates the left argument
}

struct DensityMatrix {
    ModeDims dims;
    Mat rho;

    static DensityMatrix from_pure(const StateVector& psi) {
        return {psi.dims, psi.amp * psi.amp.adjoint()};
    }
    /// Vacuum optical mode tensored with a mechanical thermal state of mean
    /// occupation nbar, truncated and renormalized.
    static DensityMatrix thermal_mechanical(ModeDims d, double nbar) {
        d.validate();
        if (nbar < 0) throw std::invalid_argument("thermal_mechanical: nbar < 0");
        Mat r = Mat::Zero(d.joint(), d.joint());
        double z = 0;
        for (int k = 0; k < d.n_m; ++k) {
            const double w = (nbar == 0.0) ? (k == 0 ? 1.0 : 0.0)
                                           : std::pow(nbar / (1.0 + nbar), k) / (1.0 + nbar);
            r(d.index(0, k), d.index(0, k)) = w;
            z += w;
        }
        r /= z;
        return {d, r};
    }

    double trace_real() const { return rho.trace().real(); }
    bool hermitian(double tol = 1e-10) const { return is_hermitian(rho, tol); }
    double min_eigenvalue() const {
        Eigen::SelfAdjointEigenSolver<Mat> es((rho + rho.adjoint()) / 2.0);
        return es.eigenvalues().minCoeff();
    }
    double mean_occupation_optical() const {
        double s = 0;
        for (int j = 0; j < dims.n_a; ++j)
            for (int k = 0; k < dims.n_m; ++k)
                s += j * rho(dims.index(j, k), dims.index(j, k)).real();
        return s;
    }
    double mean_occupation_mechanical() const {
        double s = 0;
        for (int j = 0; j < dims.n_a; ++j)
            for (int k = 0; k < dims.n_m; ++k)
                s += k * rho(dims.index(j, k), dims.index(j, k)).real();
        return s;
    }
    double population(int j, int k) const {
        return rho(dims.index(j, k), dims.index(j, k)).real();
    }
};

}  // namespace phonopair
