#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "icofact/design.hpp"
#include "icofact/errors.hpp"

namespace icofact {

enum class SchemeKind { DL, PNNMF, SPNNMF, PPNMF };

inline std::string_view to_string(SchemeKind k) {
    switch (k) {
        case SchemeKind::DL: return "DL";
        case SchemeKind::PNNMF: return "PNNMF";
        case SchemeKind::SPNNMF: return "SPNNMF";
        case SchemeKind::PPNMF: return "PPNMF";
    }
    return "?";
}

// Case-insensitive; accepts "dl", "pnnmf", "spnnmf", "ppnmf".
SchemeKind parse_scheme(std::string_view s);

inline bool is_nonnegative(SchemeKind k) { return k != SchemeKind::DL; }
inline bool has_loadings(SchemeKind k) { return k != SchemeKind::PPNMF; }

// B lives in design coordinates (n_k x n_d). C (n_d x n_s) is absent for
// PPNMF, whose loadings are the projection B^T L^T.
template <typename Scalar = double>
struct FactorState {
    Mat<Scalar> B;
    std::optional<Mat<Scalar>> C;
    long iteration = 0;
};

// Additive floor on multiplicative-update denominators.
inline constexpr double kEpsDiv = 1e-12;

template <typename Derived>
auto soft_threshold(const Eigen::MatrixBase<Derived>& Z, typename Derived::Scalar alpha) {
    using Scalar = typename Derived::Scalar;
    if (alpha < Scalar(0)) throw std::invalid_argument("soft_threshold: alpha must be >= 0");
    return Mat<Scalar>(Z.unaryExpr([alpha](Scalar z) {
        const Scalar m = std::abs(z) - alpha;
        if (std::isnan(m)) return m;
        return m > Scalar(0) ? (z < Scalar(0) ? -m : m) : Scalar(0);
    }));
}

// Y * G- / (G+ + eps), entrywise.
template <typename DY, typename DP, typename DM>
auto multiplicative_update(const Eigen::MatrixBase<DY>& Y, const Eigen::MatrixBase<DP>& Gplus,
                           const Eigen::MatrixBase<DM>& Gminus) {
    using Scalar = typename DY::Scalar;
    return Mat<Scalar>(Y.array() * Gminus.array() / (Gplus.array() + Scalar(kEpsDiv)));
}

namespace detail {
template <typename Scalar>
void require_finite(const Mat<Scalar>& A, const char* name, long iteration) {
    if (!A.allFinite()) throw DivergenceError(name, iteration);
}
template <typename Scalar>
const Mat<Scalar>& require_loadings(const FactorState<Scalar>& s) {
    if (!s.C) throw std::invalid_argument("scheme requires loadings C");
    return *s.C;
}
}  // namespace detail

// Loadings C, or B^T L^T when the state carries none.
template <typename Scalar, typename Products>
Mat<Scalar> loadings(const FactorState<Scalar>& s, const Products& cp) {
    if (s.C) return *s.C;
    return s.B.transpose() * cp.Lt();
}

namespace detail {
template <typename Scalar>
Scalar largest_eigenvalue(const Mat<Scalar>& S) {
    if (S.size() == 0) return Scalar(0);
    return Eigen::SelfAdjointEigenSolver<Mat<Scalar>>(S, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
}
// min(eta, 1 / lipschitz); eta alone when the bound vanishes.
template <typename Scalar>
Scalar capped_step(Scalar eta, Scalar lipschitz) {
    return lipschitz > Scalar(0) ? std::min(eta, Scalar(1) / lipschitz) : eta;
}
}  // namespace detail

// Step sizes actually used by step_dl for the B and the C half-sweeps: eta
// capped by the inverse Lipschitz constants ||K|| ||C C^T|| and ||B^T K B||.
template <typename Scalar, typename Products>
Scalar dl_step_B(const Mat<Scalar>& C, const Products& cp, Scalar eta) {
    const Mat<Scalar> CCt = C * C.transpose();
    return detail::capped_step(eta, cp.K_spectral() * detail::largest_eigenvalue(CCt));
}
template <typename Scalar, typename Products>
Scalar dl_step_C(const Mat<Scalar>& B, const Products& cp, Scalar eta) {
    const Mat<Scalar> BtKB = B.transpose() * cp.K_times(B);
    return detail::capped_step(eta, detail::largest_eigenvalue(Mat<Scalar>(Scalar(0.5) * (BtKB + BtKB.transpose()))));
}

// One alternating proximal-gradient sweep: B first, then C from the new B.
template <typename Scalar, typename Products>
FactorState<Scalar> step_dl(const FactorState<Scalar>& s, const Products& cp, Scalar lambda, Scalar eta) {
    if (!(eta > Scalar(0))) throw std::invalid_argument("step_dl: eta must be > 0");
    const Mat<Scalar>& C = detail::require_loadings(s);
    FactorState<Scalar> out;
    out.iteration = s.iteration + 1;

    const Scalar eta_B = dl_step_B(C, cp, eta);
    const Mat<Scalar> gB = cp.K_times(s.B) * (C * C.transpose()) - cp.Lt() * C.transpose();
    out.B = soft_threshold(s.B - eta_B * gB, lambda * eta_B);
    detail::require_finite(out.B, "B", out.iteration);

    const Scalar eta_C = dl_step_C(out.B, cp, eta);
    const Mat<Scalar> KB = cp.K_times(out.B);
    const Mat<Scalar> gC = (out.B.transpose() * KB) * C - out.B.transpose() * cp.Lt();
    out.C = soft_threshold(C - eta_C * gC, lambda * eta_C);
    detail::require_finite(*out.C, "C", out.iteration);
    return out;
}

namespace detail {
// Shared body of the two penalized NMF schemes; `penalty(Y)` returns the
// term subtracted inside the positive part of each numerator.
template <typename Scalar, typename Products, typename Penalty>
FactorState<Scalar> nmf_sweep(const FactorState<Scalar>& s, const Products& cp, Penalty penalty) {
    const Mat<Scalar>& C = require_loadings(s);
    FactorState<Scalar> out;
    out.iteration = s.iteration + 1;

    const Mat<Scalar> numB = (cp.Lt() * C.transpose() - penalty(s.B)).cwiseMax(Scalar(0));
    const Mat<Scalar> denB = cp.K_times(s.B) * (C * C.transpose());
    out.B = multiplicative_update(s.B, denB, numB);
    require_finite(out.B, "B", out.iteration);

    const Mat<Scalar> KB = cp.K_times(out.B);
    const Mat<Scalar> numC = (out.B.transpose() * cp.Lt() - penalty(C)).cwiseMax(Scalar(0));
    const Mat<Scalar> denC = (out.B.transpose() * KB) * C;
    out.C = multiplicative_update(C, denC, numC);
    require_finite(*out.C, "C", out.iteration);
    return out;
}
}  // namespace detail

// Frobenius-penalized NMF: penalty gradient lambda * Y joins the numerator.
template <typename Scalar, typename Products>
FactorState<Scalar> step_pnnmf(const FactorState<Scalar>& s, const Products& cp, Scalar lambda) {
    return detail::nmf_sweep(s, cp, [lambda](const Mat<Scalar>& Y) { return Mat<Scalar>(lambda * Y); });
}

// L1-penalized NMF: penalty gradient is lambda times a matrix of ones.
template <typename Scalar, typename Products>
FactorState<Scalar> step_spnnmf(const FactorState<Scalar>& s, const Products& cp, Scalar lambda) {
    return detail::nmf_sweep(s, cp, [lambda](const Mat<Scalar>& Y) {
        return Mat<Scalar>(Mat<Scalar>::Constant(Y.rows(), Y.cols(), lambda));
    });
}

namespace detail {
// ||X - D B B^T D^T X||^2 - ||X||^2 = -2 tr(B^T M B) + tr(B^T M B B^T K B).
template <typename Scalar>
Scalar ppnmf_energy(const Mat<Scalar>& B, const Mat<Scalar>& MB, const Mat<Scalar>& KB) {
    const Mat<Scalar> G = B.transpose() * MB;
    return -Scalar(2) * G.trace() + (G * (B.transpose() * KB)).trace();
}
}  // namespace detail

inline constexpr int kPpnmfMaxShrink = 30;

// B <- B (1 - w + w 2 M B / [(K B B^T M + M B B^T K) B]) with w = 1/2, the halved
// multiplicative update. w is halved further while the objective would increase.
template <typename Scalar, typename Products>
FactorState<Scalar> step_ppnmf(const FactorState<Scalar>& s, const Products& cp) {
    const Mat<Scalar>& B = s.B;
    const Mat<Scalar> MB = cp.M_times(B);
    const Mat<Scalar> KB = cp.K_times(B);
    // (K B B^T M + M B B^T K) B = K B (B^T M B) + M B (B^T K B)
    const Mat<Scalar> den = KB * (B.transpose() * MB) + MB * (B.transpose() * KB);
    const Mat<Scalar> ratio = (Scalar(2) * MB.array() / (den.array() + Scalar(kEpsDiv))).matrix();
    FactorState<Scalar> out;
    out.iteration = s.iteration + 1;
    Scalar w = Scalar(0.5);
    out.B = (B.array() * (Scalar(1) - w + w * ratio.array())).matrix();
    detail::require_finite(out.B, "B", out.iteration);
    const Scalar e0 = detail::ppnmf_energy(B, MB, KB);
    for (int k = 0; k < kPpnmfMaxShrink; ++k) {
        const Scalar e1 = detail::ppnmf_energy<Scalar>(out.B, cp.M_times(out.B), cp.K_times(out.B));
        if (e1 <= e0) break;
        w /= Scalar(2);
        out.B = (B.array() * (Scalar(1) - w + w * ratio.array())).matrix();
    }
    return out;
}

template <typename Scalar, typename Products>
FactorState<Scalar> step(SchemeKind kind, const FactorState<Scalar>& s, const Products& cp, Scalar lambda,
                         Scalar eta) {
    switch (kind) {
        case SchemeKind::DL: return step_dl(s, cp, lambda, eta);
        case SchemeKind::PNNMF: return step_pnnmf(s, cp, lambda);
        case SchemeKind::SPNNMF: return step_spnnmf(s, cp, lambda);
        case SchemeKind::PPNMF: return step_ppnmf(s, cp);
    }
    throw std::logic_error("unknown scheme");
}

// ||X - D B C||^2 through the cached products only:
// ||X||^2 - 2 <L^T, B C> + <B C, K B C>.
template <typename Scalar, typename Products>
Scalar residual_norm_sq(const FactorState<Scalar>& s, const Products& cp, Scalar x_norm_sq) {
    const Mat<Scalar> P = s.B * loadings(s, cp);
    const Mat<Scalar> KP = cp.K_times(P);
    const Scalar cross = (cp.Lt().array() * P.array()).sum();
    const Scalar quad = (P.array() * KP.array()).sum();
    return x_norm_sq - Scalar(2) * cross + quad;
}

inline double data_weight(SchemeKind k) {
    return (k == SchemeKind::DL || k == SchemeKind::SPNNMF) ? 0.5 : 1.0;
}

template <typename Scalar>
Scalar penalty(SchemeKind kind, const FactorState<Scalar>& s, Scalar lambda) {
    switch (kind) {
        case SchemeKind::DL:
        case SchemeKind::SPNNMF:
            return lambda * (s.B.template lpNorm<1>() + (s.C ? s.C->template lpNorm<1>() : Scalar(0)));
        case SchemeKind::PNNMF:
            return lambda * (s.B.squaredNorm() + (s.C ? s.C->squaredNorm() : Scalar(0)));
        case SchemeKind::PPNMF:
            return Scalar(0);
    }
    return Scalar(0);
}

// Full objective of the scheme: weighted data term plus its penalty.
template <typename Scalar, typename Products>
Scalar objective(SchemeKind kind, const FactorState<Scalar>& s, const Products& cp, Scalar lambda,
                 Scalar x_norm_sq) {
    return Scalar(data_weight(kind)) * residual_norm_sq(s, cp, x_norm_sq) + penalty(kind, s, lambda);
}

template <typename Scalar>
struct Gradients {
    Mat<Scalar> B;
    std::optional<Mat<Scalar>> C;
};

// Gradients of the differentiable part of each objective. DL and SPNNMF
// share the data-term gradient; the L1 terms are handled by the updates.
template <typename Scalar, typename Products>
Gradients<Scalar> analytic_gradients(SchemeKind kind, const FactorState<Scalar>& s, const Products& cp,
                                     Scalar lambda) {
    Gradients<Scalar> g;
    const Mat<Scalar>& B = s.B;
    if (kind == SchemeKind::PPNMF) {
        const Mat<Scalar> MB = cp.M_times(B);
        const Mat<Scalar> KB = cp.K_times(B);
        g.B = Scalar(-4) * MB + Scalar(2) * (KB * (B.transpose() * MB) + MB * (B.transpose() * KB));
        return g;
    }
    const Mat<Scalar>& C = detail::require_loadings(s);
    const Mat<Scalar> KB = cp.K_times(B);
    g.B = KB * (C * C.transpose()) - cp.Lt() * C.transpose();
    Mat<Scalar> gC = (B.transpose() * KB) * C - B.transpose() * cp.Lt();
    if (kind == SchemeKind::PNNMF) {
        g.B = Scalar(2) * (g.B + lambda * B);
        gC = Scalar(2) * (gC + lambda * C);
    }
    g.C = std::move(gC);
    return g;
}

// Largest singular value by power iteration on A^T A.
template <typename Derived>
typename Derived::Scalar spectral_norm(const Eigen::MatrixBase<Derived>& A, double tol = 1e-6,
                                       int max_iter = 100) {
    using Scalar = typename Derived::Scalar;
    if (A.size() == 0) return Scalar(0);
    Vec<Scalar> v = Vec<Scalar>::Ones(A.cols()).normalized();
    Scalar sigma_sq(0);
    for (int it = 0; it < max_iter; ++it) {
        Vec<Scalar> w = A.transpose() * (A * v);
        const Scalar next = w.norm();
        if (next == Scalar(0)) return Scalar(0);
        v = w / next;
        const bool done = std::abs(next - sigma_sq) <= Scalar(tol) * next;
        sigma_sq = next;
        if (done) break;
    }
    return std::sqrt(sigma_sq);
}

}  // namespace icofact
