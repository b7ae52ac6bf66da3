#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "icofact/design.hpp"
#include "icofact/schemes.hpp"

namespace icofact::testutil {

inline Eigen::MatrixXd uniform(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double lo = 0.0,
                               double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Eigen::MatrixXd A(r, c);
    for (Eigen::Index j = 0; j < c; ++j)
        for (Eigen::Index i = 0; i < r; ++i) A(i, j) = u(rng);
    return A;
}

inline Eigen::MatrixXd gaussian(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::MatrixXd A(r, c);
    for (Eigen::Index j = 0; j < c; ++j)
        for (Eigen::Index i = 0; i < r; ++i) A(i, j) = n(rng);
    return A;
}

// Small positive design with arbitrary (non-bump) values.
inline DesignMatrix<double> random_design(std::mt19937_64& rng, Eigen::Index nf, Eigen::Index nk) {
    DesignMatrix<double> D;
    D.values = uniform(rng, nf, nk, 0.0, 1.0);
    for (Eigen::Index j = 0; j < nk; ++j) D.columns.push_back({FaceRef{0, static_cast<int>(j)}, Point3::UnitX(), 1.0, 3.0});
    return D;
}

inline FactorState<double> random_state(std::mt19937_64& rng, SchemeKind kind, Eigen::Index nk, Eigen::Index nd,
                                        Eigen::Index ns) {
    FactorState<double> s;
    if (kind == SchemeKind::DL) {
        s.B = gaussian(rng, nk, nd);
        s.C = gaussian(rng, nd, ns);
    } else {
        s.B = uniform(rng, nk, nd, 0.1, 1.0);
        if (kind != SchemeKind::PPNMF) s.C = uniform(rng, nd, ns, 0.1, 1.0);
    }
    return s;
}

// Objective evaluated with full n_f-sized products, never touching K, L, M.
inline double direct_objective(SchemeKind kind, const FactorState<double>& s, const Eigen::MatrixXd& X,
                               const Eigen::MatrixXd& D, double lambda) {
    const Eigen::MatrixXd C = s.C ? *s.C : Eigen::MatrixXd(s.B.transpose() * D.transpose() * X);
    const double r = (X - D * s.B * C).squaredNorm();
    switch (kind) {
        case SchemeKind::DL:
        case SchemeKind::SPNNMF:
            return 0.5 * r + lambda * (s.B.cwiseAbs().sum() + s.C->cwiseAbs().sum());
        case SchemeKind::PNNMF:
            return r + lambda * (s.B.squaredNorm() + s.C->squaredNorm());
        case SchemeKind::PPNMF:
            return r;
    }
    return r;
}

// Smooth part of each objective, in n_f space; used for finite differences.
inline double smooth_objective(SchemeKind kind, const FactorState<double>& s, const Eigen::MatrixXd& X,
                               const Eigen::MatrixXd& D, double lambda) {
    if (kind == SchemeKind::PPNMF) return (X - D * s.B * s.B.transpose() * D.transpose() * X).squaredNorm();
    const double r = (X - D * s.B * *s.C).squaredNorm();
    if (kind == SchemeKind::PNNMF) return r + lambda * (s.B.squaredNorm() + s.C->squaredNorm());
    return 0.5 * r;
}

// Greedy one-to-one matching of columns by cosine similarity; returns the
// smallest matched similarity. With `absolute`, sign flips count as matches.
inline double matched_min_cosine(const Eigen::MatrixXd& A, const Eigen::MatrixXd& P, bool absolute) {
    const Eigen::Index na = A.cols(), np = P.cols();
    Eigen::MatrixXd S(na, np);
    for (Eigen::Index i = 0; i < na; ++i)
        for (Eigen::Index j = 0; j < np; ++j) {
            const double den = A.col(i).norm() * P.col(j).norm();
            const double c = den > 0 ? A.col(i).dot(P.col(j)) / den : 0.0;
            S(i, j) = absolute ? std::abs(c) : c;
        }
    std::vector<bool> used_a(static_cast<std::size_t>(na)), used_p(static_cast<std::size_t>(np));
    double worst = 1.0;
    for (Eigen::Index k = 0; k < std::min(na, np); ++k) {
        double best = -2;
        Eigen::Index bi = -1, bj = -1;
        for (Eigen::Index i = 0; i < na; ++i) {
            if (used_a[static_cast<std::size_t>(i)]) continue;
            for (Eigen::Index j = 0; j < np; ++j) {
                if (!used_p[static_cast<std::size_t>(j)] && S(i, j) > best) {
                    best = S(i, j);
                    bi = i;
                    bj = j;
                }
            }
        }
        used_a[static_cast<std::size_t>(bi)] = used_p[static_cast<std::size_t>(bj)] = true;
        worst = std::min(worst, best);
    }
    return worst;
}

inline double rel_diff(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

}  // namespace icofact::testutil
