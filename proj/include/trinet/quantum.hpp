#pragma once

// Finite-dimensional model of the quantum triangle network: three two-qubit
// sources, one two-qubit measurement per party.
//
// Global slot order is (A1, A2, B1, B2, C1, C2) with slot A1 the most
// significant qubit. Source alpha feeds (B2, C1), beta feeds (C2, A1) and
// gamma feeds (A2, B1); each party's first slot receives the share of the
// source on its left in the cycle A -> B -> C -> A.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <variant>

#include <Eigen/Dense>
#include <json.hpp>

#include "trinet/distribution.hpp"
#include "trinet/error.hpp"

namespace trinet {

using cplx = std::complex<double>;
using Qubit = Eigen::Vector2cd;
using PairVector = Eigen::Vector4cd;
using PairMatrix = Eigen::Matrix4cd;
using GlobalVector = Eigen::Matrix<cplx, 64, 1>;
using GlobalMatrix = Eigen::Matrix<cplx, 64, 64>;

inline constexpr double kAlgebraTolerance = 1e-10;
inline constexpr double kNormTolerance = 1e-12;

// --- single qubits ----------------------------------------------------------

struct BlochVector {
    double x = 0.0, y = 0.0, z = 1.0;

    /// Validating factory; the vector must have unit length within 1e-12.
    static BlochVector make(double x, double y, double z) {
        const double n = std::sqrt(x * x + y * y + z * z);
        if (!std::isfinite(n) || std::abs(n - 1.0) > kNormTolerance) {
            std::ostringstream os;
            os << "Bloch vector (" << x << ", " << y << ", " << z << ") has norm " << n << ", expected 1";
            throw ValidationError(os.str());
        }
        return {x, y, z};
    }

    static BlochVector normalized(const Eigen::Vector3d& v) {
        const double n = v.norm();
        if (!(n > 0.0)) throw ValidationError("cannot normalize a zero Bloch vector");
        return {v.x() / n, v.y() / n, v.z() / n};
    }

    Eigen::Vector3d vec() const { return {x, y, z}; }
    BlochVector operator-() const { return {-x, -y, -z}; }
    double dot(const BlochVector& o) const { return x * o.x + y * o.y + z * o.z; }
};

using Tetrahedron = std::array<BlochVector, 4>;

/// Regular tetrahedron with alternating-sign vertices (1,1,1)/sqrt3, ...
inline Tetrahedron tetrahedron_default() {
    const double s = 1.0 / std::sqrt(3.0);
    return {BlochVector{s, s, s}, BlochVector{s, -s, -s}, BlochVector{-s, s, -s}, BlochVector{-s, -s, s}};
}

/// Throws unless the four vectors are unit length with pairwise dot -1/3.
inline void validate_tetrahedron(const Tetrahedron& t, double tol = 1e-9) {
    for (const auto& m : t) BlochVector::make(m.x, m.y, m.z);
    for (int i = 0; i < 4; ++i) {
        for (int j = i + 1; j < 4; ++j) {
            const double d = t[i].dot(t[j]);
            if (std::abs(d + 1.0 / 3.0) > tol) {
                std::ostringstream os;
                os << "not a regular tetrahedron: m" << i + 1 << ".m" << j + 1 << " = " << d << ", expected -1/3";
                throw ValidationError(os.str());
            }
        }
    }
}

/// Rotation from z-y-z Euler angles in radians.
inline Eigen::Matrix3d euler_zyz(double alpha, double beta, double gamma) {
    using Eigen::AngleAxisd;
    using Eigen::Vector3d;
    return (AngleAxisd(alpha, Vector3d::UnitZ()) * AngleAxisd(beta, Vector3d::UnitY()) *
            AngleAxisd(gamma, Vector3d::UnitZ()))
        .toRotationMatrix();
}

inline Tetrahedron rotate(const Tetrahedron& t, const Eigen::Matrix3d& r) {
    Tetrahedron out;
    for (int i = 0; i < 4; ++i) {
        const Eigen::Vector3d v = r * t[i].vec();
        out[i] = {v.x(), v.y(), v.z()};
    }
    return out;
}

/// Pure qubit (|H> = (1,0), |V> = (0,1)) whose Bloch vector is `m`.
inline Qubit qubit_from_bloch(const BlochVector& m) {
    BlochVector::make(m.x, m.y, m.z);
    const double theta = std::acos(std::clamp(m.z, -1.0, 1.0));
    const double phi = std::atan2(m.y, m.x);
    const cplx half_phase = std::polar(1.0, phi / 2.0);
    return Qubit(std::conj(half_phase) * std::cos(theta / 2.0), half_phase * std::sin(theta / 2.0));
}

/// Spin-flipped partner i*sigma_y*conj(q): orthogonal to q, antipodal Bloch
/// vector, and covariant under SU(2). This fixes the relative phase of
/// |m> and |-m> used in the joint-measurement basis.
inline Qubit antipode(const Qubit& q) { return Qubit(std::conj(q(1)), -std::conj(q(0))); }

inline Eigen::Vector3d bloch_of(const Qubit& q) {
    const cplx off = std::conj(q(0)) * q(1);
    return {2.0 * off.real(), 2.0 * off.imag(), std::norm(q(0)) - std::norm(q(1))};
}

inline PairVector kron(const Qubit& u, const Qubit& v) {
    return PairVector(u(0) * v(0), u(0) * v(1), u(1) * v(0), u(1) * v(1));
}

// --- two-qubit states -------------------------------------------------------

/// State emitted by one source: a pure two-qubit vector or a density matrix.
class QubitPairState {
public:
    static QubitPairState pure(const PairVector& psi) {
        const double n = psi.norm();
        if (!std::isfinite(n) || std::abs(n - 1.0) > kNormTolerance) {
            throw ValidationError("pure pair state has norm " + std::to_string(n) + ", expected 1");
        }
        return QubitPairState(psi);
    }

    static QubitPairState mixed(const PairMatrix& rho) {
        if (!rho.allFinite()) throw ValidationError("density matrix has non-finite entries");
        if ((rho - rho.adjoint()).cwiseAbs().maxCoeff() > kNormTolerance) {
            throw ValidationError("density matrix is not Hermitian");
        }
        const double tr = rho.trace().real();
        if (std::abs(tr - 1.0) > kNormTolerance) {
            throw ValidationError("density matrix has trace " + std::to_string(tr) + ", expected 1");
        }
        Eigen::SelfAdjointEigenSolver<PairMatrix> es(rho, Eigen::EigenvaluesOnly);
        if (es.eigenvalues().minCoeff() < -kAlgebraTolerance) {
            throw ValidationError("density matrix is not positive semidefinite");
        }
        return QubitPairState(rho);
    }

    /// (|HV> - |VH>)/sqrt2.
    static QubitPairState singlet() {
        const double s = 1.0 / std::numbers::sqrt2;
        return QubitPairState(PairVector(0.0, s, -s, 0.0));
    }

    static QubitPairState maximally_mixed() { return QubitPairState(PairMatrix(PairMatrix::Identity() / 4.0)); }

    bool is_pure() const { return std::holds_alternative<PairVector>(rep_); }
    const PairVector& vector() const { return std::get<PairVector>(rep_); }

    PairMatrix density() const {
        if (is_pure()) {
            const auto& v = vector();
            return v * v.adjoint();
        }
        return std::get<PairMatrix>(rep_);
    }

private:
    explicit QubitPairState(PairVector v) : rep_(std::move(v)) {}
    explicit QubitPairState(PairMatrix m) : rep_(std::move(m)) {}

    std::variant<PairVector, PairMatrix> rep_;
};

// --- measurements -----------------------------------------------------------

/// Four-outcome measurement on a party's two slots.
class Povm {
public:
    using Elements = std::array<PairMatrix, 4>;
    using Vectors = std::array<PairVector, 4>;

    static Povm from_elements(const Elements& e) {
        PairMatrix total = PairMatrix::Zero();
        for (int k = 0; k < 4; ++k) {
            const auto& m = e[k];
            if (!m.allFinite()) throw ValidationError("POVM element has non-finite entries");
            if ((m - m.adjoint()).cwiseAbs().maxCoeff() > kNormTolerance) {
                throw ValidationError("POVM element " + std::to_string(k + 1) + " is not Hermitian");
            }
            Eigen::SelfAdjointEigenSolver<PairMatrix> es(m, Eigen::EigenvaluesOnly);
            if (es.eigenvalues().minCoeff() < -kAlgebraTolerance) {
                throw ValidationError("POVM element " + std::to_string(k + 1) + " is not positive semidefinite");
            }
            total += m;
        }
        if ((total - PairMatrix::Identity()).cwiseAbs().maxCoeff() > kAlgebraTolerance) {
            throw ValidationError("POVM elements do not sum to the identity");
        }
        return Povm(e, std::nullopt);
    }

    /// Projective measurement onto four orthonormal vectors.
    static Povm from_basis(const Vectors& v) {
        Elements e;
        for (int k = 0; k < 4; ++k) e[k] = v[k] * v[k].adjoint();
        Povm p = from_elements(e);
        p.vectors_ = v;
        return p;
    }

    /// Every element I/4: outcomes independent of the state.
    static Povm trivial() {
        Elements e;
        e.fill(PairMatrix::Identity() / 4.0);
        return Povm(e, std::nullopt);
    }

    /// White-noise mixture nu*E + (1-nu)/4 * I of every element.
    Povm depolarized(double nu) const {
        if (!(nu >= 0.0 && nu <= 1.0)) throw ValidationError("visibility must lie in [0,1]");
        Elements e;
        for (int k = 0; k < 4; ++k) e[k] = nu * elements_[k] + PairMatrix::Identity() * ((1.0 - nu) / 4.0);
        return Povm(e, nu == 1.0 ? vectors_ : std::nullopt);
    }

    const Elements& elements() const { return elements_; }
    const PairMatrix& operator[](int k) const { return elements_[k]; }
    /// Present when every element is a rank-1 projector built from a basis.
    const std::optional<Vectors>& rank_one_vectors() const { return vectors_; }

private:
    Povm(const Elements& e, std::optional<Vectors> v) : elements_(e), vectors_(std::move(v)) {}

    Elements elements_;
    std::optional<Vectors> vectors_;
};

/// Elegant joint measurement basis built on a regular tetrahedron.
struct EjmBasis {
    std::array<PairVector, 4> vectors;
    Tetrahedron tetrahedron;

    Povm povm() const { return Povm::from_basis(vectors); }
};

/// Larger / smaller Schmidt coefficient of every basis vector.
inline double ejm_schmidt_major() { return (std::sqrt(3.0) + 1.0) / (2.0 * std::numbers::sqrt2); }
inline double ejm_schmidt_minor() { return (std::sqrt(3.0) - 1.0) / (2.0 * std::numbers::sqrt2); }

inline EjmBasis ejm_basis(const Tetrahedron& tetra) {
    validate_tetrahedron(tetra);
    EjmBasis basis;
    basis.tetrahedron = tetra;
    for (int i = 0; i < 4; ++i) {
        const Qubit m = qubit_from_bloch(tetra[i]);
        const Qubit minus_m = antipode(m);
        basis.vectors[i] = ejm_schmidt_major() * kron(m, minus_m) + ejm_schmidt_minor() * kron(minus_m, m);
    }
    return basis;
}

inline EjmBasis ejm_basis() { return ejm_basis(tetrahedron_default()); }

/// Result of sending a pair through the lossy Bell-state projector.
struct AttenuatedProjection {
    PairVector vector;   ///< subnormalized projection vector
    double efficiency;   ///< squared norm of `vector`
};

/// Transmittance of the loss element for |V> that turns the Bell projector
/// into an elegant-basis projector: 7 - 4 sqrt3.
inline double ejm_loss_transmittance() { return 7.0 - 4.0 * std::sqrt(3.0); }

/// Bell projector onto (|HV> + |VH>)/sqrt2 with a polarization-dependent
/// loss diag(1, sqrt(t_v)) on photon 1, followed by the basis change
/// |H> -> |m_i>, |V> -> |-m_i> on both photons. `basis_index` is 1-based.
inline AttenuatedProjection attenuated_projection(int basis_index, double t_v,
                                                  const Tetrahedron& tetra = tetrahedron_default()) {
    if (basis_index < 1 || basis_index > 4) throw ValidationError("basis index must be in 1..4");
    if (!(t_v > 0.0 && t_v <= 1.0)) throw ValidationError("transmittance must lie in (0,1]");
    validate_tetrahedron(tetra);
    const Qubit m = qubit_from_bloch(tetra[basis_index - 1]);
    const Qubit minus_m = antipode(m);
    // Amplitudes of |HV> and |VH> after the loss element.
    const double hv = 1.0 / std::numbers::sqrt2;
    const double vh = std::sqrt(t_v) / std::numbers::sqrt2;
    AttenuatedProjection out;
    out.vector = hv * kron(m, minus_m) + vh * kron(minus_m, m);
    out.efficiency = out.vector.squaredNorm();
    return out;
}

// --- the triangle -----------------------------------------------------------

namespace slot {
inline constexpr int A1 = 0, A2 = 1, B1 = 2, B2 = 3, C1 = 4, C2 = 5;
}

/// Slot occupied by each qubit of the product alpha (x) beta (x) gamma.
inline constexpr std::array<int, 6> kSourceSlots{slot::B2, slot::C1, slot::C2, slot::A1, slot::A2, slot::B1};

/// Maps a basis index of the 6-qubit product (qubit 0 most significant) to
/// the index obtained by moving qubit j into slot target[j].
inline int permute_index(int index, const std::array<int, 6>& target) {
    int out = 0;
    for (int j = 0; j < 6; ++j) {
        const int bit = (index >> (5 - j)) & 1;
        out |= bit << (5 - target[j]);
    }
    return out;
}

/// Joint state of all six slots.
struct GlobalState {
    GlobalMatrix density;
    std::optional<GlobalVector> pure;  ///< set when every source is pure
};

inline GlobalState triangle_state(const QubitPairState& alpha, const QubitPairState& beta,
                                  const QubitPairState& gamma) {
    const PairMatrix ra = alpha.density(), rb = beta.density(), rg = gamma.density();
    std::array<int, 64> perm;
    for (int i = 0; i < 64; ++i) perm[i] = permute_index(i, kSourceSlots);

    GlobalState g;
    g.density.setZero();
    for (int i = 0; i < 64; ++i) {
        for (int j = 0; j < 64; ++j) {
            g.density(perm[i], perm[j]) = ra(i >> 4, j >> 4) * rb((i >> 2) & 3, (j >> 2) & 3) * rg(i & 3, j & 3);
        }
    }
    if (alpha.is_pure() && beta.is_pure() && gamma.is_pure()) {
        const auto &va = alpha.vector(), &vb = beta.vector(), &vg = gamma.vector();
        GlobalVector psi;
        for (int i = 0; i < 64; ++i) psi(perm[i]) = va(i >> 4) * vb((i >> 2) & 3) * vg(i & 3);
        g.pure = psi;
    }
    return g;
}

namespace detail {

inline TriangleDistribution finalize_probabilities(TriangleDistribution::Table& t) {
    for (double& v : t) {
        if (v < 0.0 && v > -kAlgebraTolerance) v = 0.0;
    }
    return TriangleDistribution::from_table(t);
}

}  // namespace detail

/// P(a,b,c) = Tr[rho (M_A^a (x) M_B^b (x) M_C^c)] evaluated with dense
/// matrices. Reference path.
inline TriangleDistribution triangle_distribution_dense(const GlobalState& state, const Povm& pa,
                                                        const Povm& pb, const Povm& pc) {
    const GlobalMatrix& rho = state.density;
    TriangleDistribution::Table t{};
    for (int a = 0; a < 4; ++a) {
        for (int b = 0; b < 4; ++b) {
            // Contract parties A and B first: X(ic, jc) = sum rho(i,j) MA(ja,ia) MB(jb,ib).
            Eigen::Matrix4cd x = Eigen::Matrix4cd::Zero();
            const auto &ma = pa[a], &mb = pb[b];
            for (int i = 0; i < 64; ++i) {
                const int ia = i >> 4, ib = (i >> 2) & 3, ic = i & 3;
                for (int j = 0; j < 64; ++j) {
                    const int ja = j >> 4, jb = (j >> 2) & 3, jc = j & 3;
                    x(ic, jc) += rho(i, j) * ma(ja, ia) * mb(jb, ib);
                }
            }
            for (int c = 0; c < 4; ++c) {
                const auto& mc = pc[c];
                cplx tr = 0.0;
                for (int ic = 0; ic < 4; ++ic)
                    for (int jc = 0; jc < 4; ++jc) tr += x(ic, jc) * mc(jc, ic);
                t[cell_index(a, b, c)] = tr.real();
            }
        }
    }
    return detail::finalize_probabilities(t);
}

/// Amplitude path |<phi_a (x) phi_b (x) phi_c | psi>|^2; requires a pure
/// global state and rank-1 POVMs.
inline TriangleDistribution triangle_distribution_pure(const GlobalState& state, const Povm& pa,
                                                       const Povm& pb, const Povm& pc) {
    if (!state.pure || !pa.rank_one_vectors() || !pb.rank_one_vectors() || !pc.rank_one_vectors()) {
        throw ValidationError("amplitude path needs pure sources and rank-1 measurements");
    }
    const auto &va = *pa.rank_one_vectors(), &vb = *pb.rank_one_vectors(), &vc = *pc.rank_one_vectors();
    const GlobalVector& psi = *state.pure;
    TriangleDistribution::Table t{};
    for (int a = 0; a < 4; ++a) {
        for (int b = 0; b < 4; ++b) {
            for (int c = 0; c < 4; ++c) {
                cplx amp = 0.0;
                for (int i = 0; i < 64; ++i) {
                    amp += std::conj(va[a](i >> 4) * vb[b]((i >> 2) & 3) * vc[c](i & 3)) * psi(i);
                }
                t[cell_index(a, b, c)] = std::norm(amp);
            }
        }
    }
    return detail::finalize_probabilities(t);
}

inline TriangleDistribution triangle_distribution(const GlobalState& state, const Povm& pa, const Povm& pb,
                                                  const Povm& pc) {
    if (state.pure && pa.rank_one_vectors() && pb.rank_one_vectors() && pc.rank_one_vectors()) {
        return triangle_distribution_pure(state, pa, pb, pc);
    }
    return triangle_distribution_dense(state, pa, pb, pc);
}

/// Closed form: 25/256 if a=b=c, 1/256 if exactly two agree, 5/256 otherwise.
inline TriangleDistribution elegant_distribution() {
    TriangleDistribution::Table t{};
    for (int i = 0; i < kCells; ++i) {
        const auto o = cell_triple(i);
        const int distinct = 1 + (o.b != o.a) + (o.c != o.a && o.c != o.b);
        t[i] = (distinct == 1 ? 25.0 : distinct == 2 ? 1.0 : 5.0) / 256.0;
    }
    return TriangleDistribution::from_table(t);
}

/// Singlets from every source, elegant measurement at every party.
inline TriangleDistribution simulate_elegant(const Tetrahedron& tetra = tetrahedron_default()) {
    const auto s = QubitPairState::singlet();
    const Povm m = ejm_basis(tetra).povm();
    return triangle_distribution(triangle_state(s, s, s), m, m, m);
}

// --- serialization (interleaved [re, im] pairs, row-major) --------------------

namespace detail {

inline nlohmann::json complex_json(cplx z) { return nlohmann::json::array({z.real(), z.imag()}); }

inline cplx complex_from_json(const nlohmann::json& j) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
        throw ValidationError("complex numbers must be [re, im] pairs");
    }
    return {j[0].get<double>(), j[1].get<double>()};
}

inline nlohmann::json matrix_json(const PairMatrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (int r = 0; r < 4; ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (int c = 0; c < 4; ++c) row.push_back(complex_json(m(r, c)));
        rows.push_back(row);
    }
    return rows;
}

inline PairMatrix matrix_from_json(const nlohmann::json& j) {
    if (!j.is_array() || j.size() != 4) throw ValidationError("expected a 4x4 matrix (4 rows)");
    PairMatrix m;
    for (int r = 0; r < 4; ++r) {
        if (!j[r].is_array() || j[r].size() != 4) throw ValidationError("expected 4 entries per matrix row");
        for (int c = 0; c < 4; ++c) m(r, c) = complex_from_json(j[r][c]);
    }
    return m;
}

}  // namespace detail

inline nlohmann::json to_json(const QubitPairState& s) {
    nlohmann::json j;
    if (s.is_pure()) {
        j["kind"] = "pure";
        j["amplitudes"] = nlohmann::json::array();
        for (int i = 0; i < 4; ++i) j["amplitudes"].push_back(detail::complex_json(s.vector()(i)));
    } else {
        j["kind"] = "mixed";
        j["matrix"] = detail::matrix_json(s.density());
    }
    return j;
}

inline QubitPairState pair_state_from_json(const nlohmann::json& j) {
    const std::string kind = j.value("kind", "");
    if (kind == "pure") {
        const auto& a = j.at("amplitudes");
        if (!a.is_array() || a.size() != 4) throw ValidationError("pure state needs 4 amplitudes");
        PairVector v;
        for (int i = 0; i < 4; ++i) v(i) = detail::complex_from_json(a[i]);
        return QubitPairState::pure(v);
    }
    if (kind == "mixed") return QubitPairState::mixed(detail::matrix_from_json(j.at("matrix")));
    throw ValidationError("pair state kind must be \"pure\" or \"mixed\"");
}

inline nlohmann::json to_json(const Povm& p) {
    nlohmann::json j;
    j["elements"] = nlohmann::json::array();
    for (const auto& e : p.elements()) j["elements"].push_back(detail::matrix_json(e));
    return j;
}

inline Povm povm_from_json(const nlohmann::json& j) {
    const auto& e = j.at("elements");
    if (!e.is_array() || e.size() != 4) throw ValidationError("POVM needs exactly 4 elements");
    Povm::Elements el;
    for (int k = 0; k < 4; ++k) el[k] = detail::matrix_from_json(e[k]);
    return Povm::from_elements(el);
}

}  // namespace trinet
