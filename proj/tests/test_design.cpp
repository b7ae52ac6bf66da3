#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "icofact/design.hpp"
#include "test_util.hpp"

using namespace icofact;
using icofact::testutil::rel_diff;
using icofact::testutil::uniform;

namespace {

const IcosphereHierarchy& hier() {
    static const IcosphereHierarchy h = IcosphereHierarchy::build(4);
    return h;
}

// Point at angle theta from `center`, rotated toward an arbitrary orthogonal direction.
Point3 at_angle(const Point3& center, double theta) {
    Point3 ortho = center.unitOrthogonal();
    return (std::cos(theta) * center + std::sin(theta) * ortho).normalized();
}

double rel_norm(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return (a - b).norm() / std::max(b.norm(), 1e-300);
}

struct Fixture {
    DesignMatrix<double> D;
    Eigen::MatrixXd X;
    Eigen::MatrixXd B;
    CachedProducts<double> cp;
};

Fixture make_fixture(int level, std::uint64_t seed, int n_s = 6, int n_d = 3) {
    std::mt19937_64 rng(seed);
    Fixture f;
    f.D = initial_design<double>(hier(), level);
    f.X = uniform(rng, f.D.n_f(), n_s);
    f.B = uniform(rng, f.D.n_k(), n_d);
    f.cp = precompute(f.X, f.D);
    return f;
}

}  // namespace

TEST(Bump, Examples) {
    const Point3 c = Point3(1, 2, 3).normalized();
    PointSet pts(3, 3);
    pts.row(0) = c.transpose();
    pts.row(1) = at_angle(c, 4 * std::numbers::pi * 0.1).transpose();
    pts.row(2) = at_angle(c, std::numbers::pi * 0.015).transpose();
    const Eigen::VectorXd v1 = bump_column(c, 0.1, 3.0, pts);
    EXPECT_DOUBLE_EQ(v1(0), 1.0);
    EXPECT_EQ(v1(1), 0.0);
    const Eigen::VectorXd v2 = bump_column(c, 0.015, 3.0, pts);
    EXPECT_NEAR(v2(2), std::exp(-1.0), 1e-9);
    EXPECT_NEAR(v2(2), 0.3679, 1e-4);
    EXPECT_THROW(bump_column(c, 0.0, 3.0, pts), std::invalid_argument);
    EXPECT_THROW(bump_column(c, 0.1, -1.0, pts), std::invalid_argument);
}

TEST(InitialDesign, ShapeAndPeaks) {
    const auto D = initial_design<double>(hier(), 3);
    EXPECT_EQ(D.n_f(), 1280);
    EXPECT_EQ(D.n_k(), 20);
    EXPECT_EQ(D.data_level, 3);
    EXPECT_GE(D.values.minCoeff(), 0.0);
    const PointSet fine = face_centers(hier().level(3));
    for (Eigen::Index j = 0; j < D.n_k(); ++j) {
        Eigen::Index arg_val, arg_near;
        D.values.col(j).maxCoeff(&arg_val);
        (fine * D.columns[static_cast<std::size_t>(j)].center).maxCoeff(&arg_near);
        EXPECT_EQ(arg_val, arg_near) << "column " << j;
        EXPECT_EQ(D.columns[static_cast<std::size_t>(j)].face, (FaceRef{0, static_cast<int>(j)}));
    }
    EXPECT_THROW(initial_design<double>(hier(), 5), std::out_of_range);
}

// Oracle: the icosahedral rotation taking root face f onto an adjacent face g
// carries column f onto column g, so values agree at rotated face centers.
TEST(InitialDesign, AdjacentColumnsAreRotatedCopies) {
    const auto D = initial_design<double>(hier(), 3);
    const Mesh& m0 = hier().level(0);
    const PointSet fine = face_centers(hier().level(3));
    auto vert = [&](int f, int i) { return m0.nodes[static_cast<std::size_t>(m0.faces[static_cast<std::size_t>(f)][static_cast<std::size_t>(i)])]; };
    int checked = 0;
    for (int f = 0; f < 20; ++f) {
        for (int g = f + 1; g < 20; ++g) {
            int shared = 0;
            for (int a : m0.faces[static_cast<std::size_t>(f)])
                for (int b : m0.faces[static_cast<std::size_t>(g)]) shared += (a == b);
            if (shared != 2) continue;
            Eigen::Matrix3d F, G;
            for (int i = 0; i < 3; ++i) F.col(i) = vert(f, i);
            bool found = false;
            for (int shift = 0; shift < 3 && !found; ++shift) {
                for (int i = 0; i < 3; ++i) G.col(i) = vert(g, (i + shift) % 3);
                const Eigen::Matrix3d R = G * F.inverse();
                if ((R.transpose() * R - Eigen::Matrix3d::Identity()).norm() > 1e-9) continue;
                found = true;
                for (Eigen::Index i = 0; i < fine.rows(); ++i) {
                    const Point3 y = R * fine.row(i).transpose();
                    Eigen::Index k;
                    (fine * y).maxCoeff(&k);
                    ASSERT_LT((fine.row(k).transpose() - y).norm(), 1e-9);
                    ASSERT_NEAR(D.values(k, g), D.values(i, f), 1e-6);
                }
            }
            EXPECT_TRUE(found);
            ++checked;
        }
    }
    EXPECT_EQ(checked, 30);
}

TEST(InitialDesign, SupportRespectsCutoff) {
    const auto D = initial_design<double>(hier(), 3, 0.05, 2.0);
    const PointSet fine = face_centers(hier().level(3));
    for (Eigen::Index j = 0; j < D.n_k(); ++j) {
        const auto& col = D.columns[static_cast<std::size_t>(j)];
        for (Eigen::Index i = 0; i < fine.rows(); ++i) {
            const double r = std::acos(std::clamp(fine.row(i).dot(col.center), -1.0, 1.0)) / (std::numbers::pi * col.sigma);
            if (r > col.tau) EXPECT_EQ(D.values(i, j), 0.0);
            else EXPECT_GT(D.values(i, j), 0.0);
        }
    }
}

TEST(Precompute, OrthonormalDesignGivesIdentityK) {
    std::mt19937_64 rng(1);
    DesignMatrix<double> D = testutil::random_design(rng, 30, 5);
    D.values = Eigen::HouseholderQR<Eigen::MatrixXd>(D.values).householderQ() * Eigen::MatrixXd::Identity(30, 5);
    const auto cp = precompute(uniform(rng, 30, 4), D);
    EXPECT_LT((cp.K - Eigen::MatrixXd::Identity(5, 5)).norm(), 1e-12);
}

TEST(Precompute, ZeroData) {
    std::mt19937_64 rng(2);
    const auto D = testutil::random_design(rng, 30, 5);
    const auto cp = precompute(Eigen::MatrixXd::Zero(30, 4), D);
    EXPECT_EQ(cp.L.norm(), 0.0);
    EXPECT_EQ(cp.M.norm(), 0.0);
}

TEST(Precompute, TripleLoopOracle) {
    std::mt19937_64 rng(3);
    const auto D = testutil::random_design(rng, 40, 4);
    const Eigen::MatrixXd X = uniform(rng, 40, 6);
    const auto cp = precompute(X, D);
    Eigen::MatrixXd L(6, 4), M(4, 4), K(4, 4);
    for (int s = 0; s < 6; ++s)
        for (int k = 0; k < 4; ++k) {
            double acc = 0;
            for (int f = 0; f < 40; ++f) acc += X(f, s) * D.values(f, k);
            L(s, k) = acc;
        }
    for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) {
            double m = 0, kk = 0;
            for (int s = 0; s < 6; ++s) m += L(s, a) * L(s, b);
            for (int f = 0; f < 40; ++f) kk += D.values(f, a) * D.values(f, b);
            M(a, b) = m;
            K(a, b) = kk;
        }
    EXPECT_LT(rel_norm(cp.L, L), 1e-10);
    EXPECT_LT(rel_norm(cp.M, M), 1e-10);
    EXPECT_LT(rel_norm(cp.K, K), 1e-10);
    EXPECT_EQ(cp.K, cp.K.transpose());
    EXPECT_EQ(cp.M, cp.M.transpose());
    EXPECT_NEAR(cp.K_spectral(), Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(K).eigenvalues().maxCoeff(), 1e-9 * cp.K_spectral());
}

TEST(Precompute, DimensionMismatch) {
    std::mt19937_64 rng(4);
    const auto D = testutil::random_design(rng, 40, 4);
    EXPECT_THROW(precompute(Eigen::MatrixXd::Ones(39, 2), D), DimensionMismatch);
}

TEST(LocalError, ExactReconstructionIsZero) {
    std::mt19937_64 rng(5);
    const auto D = testutil::random_design(rng, 30, 5);
    const Eigen::MatrixXd B = uniform(rng, 5, 2), C = uniform(rng, 2, 4);
    const auto cp = precompute(Eigen::MatrixXd(D.values * B * C), D);
    EXPECT_LT(local_error(cp, B, C).maxCoeff(), 1e-20 * cp.L.squaredNorm() + 1e-18);
}

TEST(LocalError, SingleSubjectIsSquaredResidual) {
    std::mt19937_64 rng(6);
    const auto D = testutil::random_design(rng, 30, 5);
    const Eigen::MatrixXd X = uniform(rng, 30, 1), B = uniform(rng, 5, 2), C = uniform(rng, 2, 1);
    const auto cp = precompute(X, D);
    const Eigen::VectorXd r = cp.L.transpose() - cp.K * B * C;
    EXPECT_LT((local_error(cp, B, C) - r.cwiseProduct(r)).norm(), 1e-12 * r.squaredNorm());
}

TEST(LocalError, LoopOracle) {
    std::mt19937_64 rng(7);
    const auto D = testutil::random_design(rng, 25, 6);
    const Eigen::MatrixXd X = uniform(rng, 25, 4), B = uniform(rng, 6, 3), C = uniform(rng, 3, 4);
    const auto cp = precompute(X, D);
    const Eigen::VectorXd e = local_error(cp, B, C);
    for (int k = 0; k < 6; ++k) {
        double acc = 0;
        for (int s = 0; s < 4; ++s) {
            double kbc = 0;
            for (int a = 0; a < 6; ++a)
                for (int d = 0; d < 3; ++d) kbc += cp.K(k, a) * B(a, d) * C(d, s);
            const double r = cp.L(s, k) - kbc;
            acc += r * r;
        }
        EXPECT_NEAR(e(k), acc, 1e-12 * std::max(acc, 1.0));
        EXPECT_GE(e(k), 0.0);
    }
}

TEST(Refine, GrowsByThreePerSplit) {
    auto f = make_fixture(3, 11);
    const Eigen::MatrixXd C = Eigen::MatrixXd::Constant(3, 6, 0.2);
    const auto r = refine(hier(), f.D, f.B, f.cp, f.X, local_error(f.cp, f.B, C), 5);
    EXPECT_EQ(r.design.n_k(), 35);
    EXPECT_EQ(r.B.rows(), 35);
    EXPECT_EQ(r.products.K.rows(), 35);
    EXPECT_EQ(r.products.L.cols(), 35);
    EXPECT_EQ(r.record.split.size(), 5u);
    EXPECT_TRUE(r.record.skipped.empty());
}

TEST(Refine, SplitsWorstFirstWithIndexTieBreak) {
    auto f = make_fixture(3, 12);
    Eigen::VectorXd e = Eigen::VectorXd::Zero(20);
    e(7) = 5;
    e(3) = 2;
    e(12) = 2;
    e(1) = 1;
    const auto r = refine(hier(), f.D, f.B, f.cp, f.X, e, 4);
    EXPECT_EQ(r.record.removed_columns, (std::vector<int>{7, 3, 12, 1}));
    // Kept columns first in their old order, then children in split order.
    EXPECT_EQ(r.design.columns[0].face, (FaceRef{0, 0}));
    EXPECT_EQ(r.design.columns[1].face, (FaceRef{0, 2}));
    const auto kids = hier().children_of(FaceRef{0, 7});
    for (int i = 0; i < 4; ++i) {
        const auto& col = r.design.columns[static_cast<std::size_t>(16 + i)];
        EXPECT_EQ(col.face, kids[static_cast<std::size_t>(i)]);
        EXPECT_DOUBLE_EQ(col.sigma, kDefaultRootSigma / 2);
        EXPECT_DOUBLE_EQ(col.tau, kDefaultTau);
    }
}

TEST(Refine, SplitRowBecomesFourQuarterRows) {
    auto f = make_fixture(3, 13, 6, 2);
    f.B.row(9) << 4, 8;
    Eigen::VectorXd e = Eigen::VectorXd::Zero(20);
    e(9) = 1;
    const auto r = refine(hier(), f.D, f.B, f.cp, f.X, e, 1);
    for (int i = 19; i < 23; ++i) {
        EXPECT_DOUBLE_EQ(r.B(i, 0), 1.0);
        EXPECT_DOUBLE_EQ(r.B(i, 1), 2.0);
    }
}

TEST(Refine, IncrementalProductsMatchRecompute) {
    auto f = make_fixture(4, 14, 7, 3);
    std::mt19937_64 rng(99);
    DesignMatrix<double> D = f.D;
    Eigen::MatrixXd B = f.B;
    CachedProducts<double> cp = f.cp;
    for (int round = 0; round < 6; ++round) {
        const Eigen::VectorXd e = uniform(rng, D.n_k(), 1);
        auto r = refine(hier(), D, B, cp, f.X, e, 4);
        const auto full = precompute(f.X, r.design);
        ASSERT_LT(rel_norm(r.products.K, full.K), 1e-10);
        ASSERT_LT(rel_norm(r.products.L, full.L), 1e-10);
        ASSERT_LT(rel_norm(r.products.M, full.M), 1e-10);
        ASSERT_NEAR(r.products.K_spectral(), full.K_spectral(), 1e-9 * full.K_spectral());
        D = std::move(r.design);
        B = std::move(r.B);
        cp = std::move(r.products);
    }
}

TEST(Refine, ConservesRowMass) {
    auto f = make_fixture(3, 15);
    std::mt19937_64 rng(5);
    const Eigen::VectorXd e = uniform(rng, 20, 1);
    const auto r = refine(hier(), f.D, f.B, f.cp, f.X, e, 5);
    for (std::size_t i = 0; i < r.record.removed_columns.size(); ++i) {
        const Eigen::RowVectorXd sum = r.B.middleRows(15 + 4 * static_cast<Eigen::Index>(i), 4).colwise().sum();
        EXPECT_LT((sum - f.B.row(r.record.removed_columns[i])).norm(), 1e-14);
    }
    EXPECT_NEAR(r.B.sum(), f.B.sum(), 1e-12);
}

// Random refinement sequences keep: one column per active face (active faces
// tile the data level exactly once), nonnegative values, exact cutoff support.
TEST(Refine, RandomSequencesKeepBijectionAndSupport) {
    const PointSet fine = face_centers(hier().level(3));
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto f = make_fixture(3, 100 + seed, 4, 2);
        std::mt19937_64 rng(seed);
        DesignMatrix<double> D = f.D;
        Eigen::MatrixXd B = f.B;
        CachedProducts<double> cp = f.cp;
        for (int round = 0; round < 8; ++round) {
            std::uniform_int_distribution<int> n(1, 6);
            auto r = refine(hier(), D, B, cp, f.X, Eigen::VectorXd(uniform(rng, D.n_k(), 1)), n(rng));
            D = std::move(r.design);
            B = std::move(r.B);
            cp = std::move(r.products);
            std::vector<int> hits(1280, 0);
            for (const auto& col : D.columns)
                for (int x : hier().descendants(col.face, 3)) ++hits[static_cast<std::size_t>(x)];
            for (int h : hits) ASSERT_EQ(h, 1);
            ASSERT_GE(D.values.minCoeff(), 0.0);
        }
        for (Eigen::Index j = 0; j < D.n_k(); ++j) {
            const auto& col = D.columns[static_cast<std::size_t>(j)];
            EXPECT_NEAR(col.sigma, kDefaultRootSigma / std::pow(2.0, col.face.level), 1e-15);
            for (Eigen::Index i = 0; i < fine.rows(); ++i) {
                const double r = std::acos(std::clamp(fine.row(i).dot(col.center), -1.0, 1.0)) / (std::numbers::pi * col.sigma);
                if (r > col.tau) ASSERT_EQ(D.values(i, j), 0.0);
            }
        }
    }
}

TEST(Refine, SkipsDataLevelFacesAndThenExhausts) {
    const auto h = IcosphereHierarchy::build(1);
    std::mt19937_64 rng(8);
    auto D = initial_design<double>(h, 1);
    const Eigen::MatrixXd X = uniform(rng, 80, 3);
    auto cp = precompute(X, D);
    Eigen::MatrixXd B = uniform(rng, 20, 2);
    auto r = refine(h, D, B, cp, X, Eigen::VectorXd(Eigen::VectorXd::LinSpaced(20, 0, 19)), 2);
    ASSERT_EQ(r.design.n_k(), 26);
    // Children (level 1 = data level) get the largest errors; they must be skipped.
    Eigen::VectorXd e = Eigen::VectorXd::Zero(26);
    e.tail(8).setConstant(100);
    e(0) = 1;
    auto r2 = refine(h, r.design, r.B, r.products, X, e, 1);
    EXPECT_EQ(r2.record.skipped.size(), 8u);
    EXPECT_EQ(r2.record.removed_columns, std::vector<int>{0});

    auto all = refine(h, D, B, cp, X, Eigen::VectorXd(Eigen::VectorXd::Zero(20)), 20);
    EXPECT_EQ(all.design.n_k(), 80);
    EXPECT_THROW(refine(h, all.design, all.B, all.products, X, Eigen::VectorXd(Eigen::VectorXd::Ones(80)), 1),
                 RefinementExhausted);
}

TEST(Refine, RejectsBadArguments) {
    auto f = make_fixture(3, 16);
    const Eigen::VectorXd e = Eigen::VectorXd::Ones(20);
    EXPECT_THROW(refine(hier(), f.D, f.B, f.cp, f.X, e, 0), std::invalid_argument);
    EXPECT_THROW(refine(hier(), f.D, f.B, f.cp, f.X, Eigen::VectorXd(Eigen::VectorXd::Ones(19)), 1), DimensionMismatch);
}
