#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "icofact/errors.hpp"
#include "icofact/icosphere.hpp"

namespace icofact {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Evaluates exp(-theta / (pi sigma)) at every point, where theta is the angle
// to `center`, and zero once theta / (pi sigma) exceeds tau.
template <typename Scalar = double>
Vec<Scalar> bump_column(const Point3& center, double sigma, double tau, const PointSet& points) {
    if (!(sigma > 0) || !(tau > 0)) throw std::invalid_argument("bump_column: sigma and tau must be > 0");
    Vec<Scalar> out(points.rows());
    const double scale = std::numbers::pi * sigma;
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        const double c = std::clamp(points.row(i).dot(center.transpose()), -1.0, 1.0);
        const double r = std::acos(c) / scale;
        out(i) = r <= tau ? static_cast<Scalar>(std::exp(-r)) : Scalar(0);
    }
    return out;
}

struct DesignColumn {
    FaceRef face;
    Point3 center;
    double sigma;
    double tau;
};

// Positive design matrix; one column per active coarse face, rows indexed by
// the faces of the data-level mesh.
template <typename Scalar = double>
struct DesignMatrix {
    std::vector<DesignColumn> columns;
    Mat<Scalar> values;
    int data_level = 0;

    Eigen::Index n_f() const { return values.rows(); }
    Eigen::Index n_k() const { return values.cols(); }
};

inline constexpr double kDefaultRootSigma = 0.25;
inline constexpr double kDefaultTau = 3.0;

// Twenty bump columns centered on the icosahedron faces, evaluated at the
// data-level face centers.
template <typename Scalar = double>
DesignMatrix<Scalar> initial_design(const IcosphereHierarchy& hier, int data_level,
                                    double sigma0 = kDefaultRootSigma, double tau = kDefaultTau) {
    if (data_level < 0 || data_level > hier.max_level()) {
        throw std::out_of_range("initial_design: data level " + std::to_string(data_level) +
                                " not present in hierarchy (max " + std::to_string(hier.max_level()) + ")");
    }
    const PointSet fine = face_centers(hier.level(data_level));
    const PointSet roots = face_centers(hier.level(0));
    DesignMatrix<Scalar> d;
    d.data_level = data_level;
    d.values.resize(fine.rows(), roots.rows());
    for (Eigen::Index j = 0; j < roots.rows(); ++j) {
        const Point3 c = roots.row(j).transpose();
        d.columns.push_back({FaceRef{0, static_cast<int>(j)}, c, sigma0, tau});
        d.values.col(j) = bump_column<Scalar>(c, sigma0, tau, fine);
    }
    return d;
}

// K = D^T D, L = X^T D, M = L^T L.
template <typename Scalar = double>
struct CachedProducts {
    Mat<Scalar> K;
    Mat<Scalar> L;
    Mat<Scalar> M;
    // Largest eigenvalue of K; negative when not cached.
    Scalar K_norm = Scalar(-1);

    Eigen::Index n_k() const { return K.rows(); }
    Scalar K_spectral() const {
        if (K_norm >= Scalar(0)) return K_norm;
        if (K.size() == 0) return Scalar(0);
        return Eigen::SelfAdjointEigenSolver<Mat<Scalar>>(K, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
    }
    Eigen::Index n_s() const { return L.rows(); }

    template <typename Derived>
    Mat<Scalar> K_times(const Eigen::MatrixBase<Derived>& Y) const { return K * Y; }
    template <typename Derived>
    Mat<Scalar> M_times(const Eigen::MatrixBase<Derived>& Y) const { return M * Y; }
    // L^T, n_k x n_s.
    auto Lt() const { return L.transpose(); }
};

// Products for D = identity at data resolution (n_k = n_f), applied without
// forming K or M: K Y = Y, L^T = X, M Y = X (X^T Y).
template <typename Scalar = double>
struct IdentityProducts {
    Mat<Scalar> X;

    Eigen::Index n_k() const { return X.rows(); }
    Eigen::Index n_s() const { return X.cols(); }
    Scalar K_spectral() const { return Scalar(1); }

    template <typename Derived>
    Mat<Scalar> K_times(const Eigen::MatrixBase<Derived>& Y) const { return Y; }
    template <typename Derived>
    Mat<Scalar> M_times(const Eigen::MatrixBase<Derived>& Y) const { return X * (X.transpose() * Y); }
    const Mat<Scalar>& Lt() const { return X; }
};

namespace detail {
template <typename Scalar>
void symmetrize(Mat<Scalar>& A) {
    A = Scalar(0.5) * (A + A.transpose()).eval();
}
}  // namespace detail

template <typename Scalar, typename DerivedX>
CachedProducts<Scalar> precompute(const Eigen::MatrixBase<DerivedX>& X, const DesignMatrix<Scalar>& D) {
    if (X.rows() != D.n_f()) {
        throw DimensionMismatch("precompute: data has " + std::to_string(X.rows()) +
                                " rows but the design expects " + std::to_string(D.n_f()));
    }
    CachedProducts<Scalar> cp;
    cp.K = D.values.transpose() * D.values;
    detail::symmetrize(cp.K);
    cp.L = X.transpose() * D.values;
    cp.M = cp.L.transpose() * cp.L;
    detail::symmetrize(cp.M);
    cp.K_norm = cp.K_spectral();
    return cp;
}

// Squared residual of the reduced reconstruction L^T - K B C, summed over
// subjects, one entry per design column.
template <typename Products, typename DB, typename DC>
auto local_error(const Products& cp, const Eigen::MatrixBase<DB>& B, const Eigen::MatrixBase<DC>& C) {
    using Scalar = typename DB::Scalar;
    const Mat<Scalar> R = cp.Lt() - cp.K_times(B) * C;
    return Vec<Scalar>(R.array().square().rowwise().sum());
}

struct RefinementRecord {
    std::vector<FaceRef> split;
    // Column indices (before refinement) that were removed, in split order.
    std::vector<int> removed_columns;
    // Worst-error faces passed over because they are already at data level.
    std::vector<FaceRef> skipped;
};

template <typename Scalar>
struct Refinement {
    DesignMatrix<Scalar> design;
    Mat<Scalar> B;
    CachedProducts<Scalar> products;
    RefinementRecord record;
};

// Splits the n_split worst-error columns into their four child faces with
// half the width. B rows of split columns are replaced by four copies scaled
// by 1/4; K and L are extended with only the new rows/columns, M is rebuilt.
template <typename Scalar, typename DerivedX>
Refinement<Scalar> refine(const IcosphereHierarchy& hier, const DesignMatrix<Scalar>& D,
                          const Mat<Scalar>& B, const CachedProducts<Scalar>& cp,
                          const Eigen::MatrixBase<DerivedX>& X, const Vec<Scalar>& e, int n_split) {
    if (n_split < 1) throw std::invalid_argument("refine: n_split must be >= 1");
    const Eigen::Index nk = D.n_k();
    if (e.size() != nk || B.rows() != nk || cp.n_k() != nk) {
        throw DimensionMismatch("refine: error vector, B and products must match n_k = " + std::to_string(nk));
    }
    if (D.data_level > hier.max_level()) throw std::out_of_range("refine: hierarchy lacks the data level");

    std::vector<int> order(static_cast<std::size_t>(nk));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return e(a) > e(b); });

    Refinement<Scalar> out;
    RefinementRecord& rec = out.record;
    for (int j : order) {
        if (static_cast<int>(rec.removed_columns.size()) == n_split) break;
        const FaceRef f = D.columns[static_cast<std::size_t>(j)].face;
        if (f.level >= D.data_level) {
            rec.skipped.push_back(f);
            continue;
        }
        rec.removed_columns.push_back(j);
        rec.split.push_back(f);
    }
    if (rec.removed_columns.empty()) {
        throw RefinementExhausted("refine: every design column is already at data level " +
                                  std::to_string(D.data_level));
    }

    std::vector<bool> removed(static_cast<std::size_t>(nk), false);
    for (int j : rec.removed_columns) removed[static_cast<std::size_t>(j)] = true;
    std::vector<Eigen::Index> kept;
    for (Eigen::Index j = 0; j < nk; ++j) {
        if (!removed[static_cast<std::size_t>(j)]) kept.push_back(j);
    }

    const PointSet fine = face_centers(hier.level(D.data_level));
    const auto n_new = static_cast<Eigen::Index>(4 * rec.removed_columns.size());
    const auto n_kept = static_cast<Eigen::Index>(kept.size());
    const Eigen::Index nk_out = n_kept + n_new;

    DesignMatrix<Scalar>& Dn = out.design;
    Dn.data_level = D.data_level;
    Dn.values.resize(D.n_f(), nk_out);
    out.B.resize(nk_out, B.cols());
    for (Eigen::Index i = 0; i < n_kept; ++i) {
        Dn.columns.push_back(D.columns[static_cast<std::size_t>(kept[static_cast<std::size_t>(i)])]);
        Dn.values.col(i) = D.values.col(kept[static_cast<std::size_t>(i)]);
        out.B.row(i) = B.row(kept[static_cast<std::size_t>(i)]);
    }
    Eigen::Index col = n_kept;
    for (int j : rec.removed_columns) {
        const DesignColumn& parent = D.columns[static_cast<std::size_t>(j)];
        const PointSet child_centers = face_centers(hier.level(parent.face.level + 1));
        for (const FaceRef& child : hier.children_of(parent.face)) {
            const Point3 c = child_centers.row(child.index).transpose();
            Dn.columns.push_back({child, c, parent.sigma / 2, parent.tau});
            Dn.values.col(col) = bump_column<Scalar>(c, parent.sigma / 2, parent.tau, fine);
            out.B.row(col) = B.row(j) / Scalar(4);
            ++col;
        }
    }

    const auto D_new = Dn.values.rightCols(n_new);
    CachedProducts<Scalar>& P = out.products;
    P.K.resize(nk_out, nk_out);
    for (Eigen::Index a = 0; a < n_kept; ++a) {
        for (Eigen::Index b = 0; b < n_kept; ++b) {
            P.K(a, b) = cp.K(kept[static_cast<std::size_t>(a)], kept[static_cast<std::size_t>(b)]);
        }
    }
    const Mat<Scalar> cross = Dn.values.leftCols(n_kept).transpose() * D_new;
    P.K.topRightCorner(n_kept, n_new) = cross;
    P.K.bottomLeftCorner(n_new, n_kept) = cross.transpose();
    P.K.bottomRightCorner(n_new, n_new) = D_new.transpose() * D_new;
    detail::symmetrize(P.K);

    P.L.resize(cp.L.rows(), nk_out);
    for (Eigen::Index a = 0; a < n_kept; ++a) P.L.col(a) = cp.L.col(kept[static_cast<std::size_t>(a)]);
    P.L.rightCols(n_new) = X.transpose() * D_new;
    P.M = P.L.transpose() * P.L;
    detail::symmetrize(P.M);
    P.K_norm = P.K_spectral();
    return out;
}

}  // namespace icofact
