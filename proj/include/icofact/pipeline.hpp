#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "icofact/accel.hpp"
#include "icofact/design.hpp"
#include "icofact/icosphere.hpp"
#include "icofact/schemes.hpp"

namespace icofact {

using Rng = std::mt19937_64;

// Everything a factorization run needs besides the data.
struct SchemeConfig {
    SchemeKind kind = SchemeKind::PNNMF;
    // Unset: 5 for DL, 1/2 for SPNNMF, 1/||L||_2 for PNNMF (at the initial
    // design), 0 for PPNMF.
    std::optional<double> lambda;
    ExtrapolationKind extrapolation = ExtrapolationKind::None;
    std::optional<int> warmup;
    int n_d = 10;
    int multistart_count = 50;
    int multistart_iters = 200;
    int refine_rounds = 10;
    int faces_per_round = 5;
    int iters_per_round = 10;
    std::uint64_t seed = 0;
    int data_level = 3;
    double sigma0 = kDefaultRootSigma;
    double tau = kDefaultTau;

    // Throws ConfigError on out-of-range values.
    void validate() const;
};

// Applies one key=value setting. Keys match the CLI flag names without the
// leading dashes; '-' and '_' are interchangeable.
void set_config_key(SchemeConfig& cfg, std::string_view key, std::string_view value);
// Parses "key = value" lines; '#' starts a comment.
SchemeConfig parse_config(std::string_view text, SchemeConfig base = {});
SchemeConfig load_config(const std::filesystem::path& path, SchemeConfig base = {});

// Derives an independent generator seed for stream `index`.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

// Sparsity weight and DL step size resolved against the initial products.
struct ResolvedParams {
    double lambda = 0;
    double eta = 0;
};

template <typename Products>
double default_lambda(SchemeKind kind, const Products& cp) {
    switch (kind) {
        case SchemeKind::DL: return 5.0;
        case SchemeKind::SPNNMF: return 0.5;
        case SchemeKind::PNNMF: {
            const double n = spectral_norm(cp.Lt());
            return n > 0 ? 1.0 / n : 0.0;
        }
        case SchemeKind::PPNMF: return 0.0;
    }
    return 0.0;
}

// eta = 0.1 / ||L||_2 (spectral norm).
template <typename Products>
ResolvedParams resolve_params(const SchemeConfig& cfg, const Products& cp) {
    ResolvedParams p;
    p.lambda = cfg.lambda.value_or(default_lambda(cfg.kind, cp));
    const double n = spectral_norm(cp.Lt());
    p.eta = n > 0 ? 0.1 / n : 1.0;
    return p;
}

// DL: B, C ~ N(0,1). PPNMF: |N(0,1)| / ||L||_F. NMF: C = 1/n_d, each B column
// the average of five random columns of L^T, clamped at 0.
template <typename Products>
FactorState<double> init_factors(SchemeKind kind, Rng& rng, const Products& cp, int n_d) {
    if (n_d < 1) throw std::invalid_argument("init_factors: n_d must be >= 1");
    const Eigen::Index nk = cp.n_k(), ns = cp.n_s();
    std::normal_distribution<double> normal(0.0, 1.0);
    auto gaussian = [&](Eigen::Index r, Eigen::Index c) {
        Eigen::MatrixXd A(r, c);
        // Column-major fill keeps the draw order fixed.
        for (Eigen::Index j = 0; j < c; ++j)
            for (Eigen::Index i = 0; i < r; ++i) A(i, j) = normal(rng);
        return A;
    };
    FactorState<double> s;
    switch (kind) {
        case SchemeKind::DL:
            s.B = gaussian(nk, n_d);
            s.C = gaussian(n_d, ns);
            break;
        case SchemeKind::PPNMF: {
            const double fro = Eigen::MatrixXd(cp.Lt()).norm();
            s.B = gaussian(nk, n_d).cwiseAbs() / (fro > 0 ? fro : 1.0);
            // Rescale to the best multiple a B, a^2 = tr(B^T M B) / tr(B^T M B B^T K B);
            // from the raw scale the first multiplicative step overshoots by orders of magnitude.
            const Eigen::MatrixXd MB = cp.M_times(s.B);
            const Eigen::MatrixXd G = s.B.transpose() * MB;
            const double num = G.trace();
            const double den = (G * (s.B.transpose() * cp.K_times(s.B))).trace();
            if (num > 0 && den > 0) s.B *= std::sqrt(std::sqrt(num / den));
            break;
        }
        case SchemeKind::PNNMF:
        case SchemeKind::SPNNMF: {
            std::uniform_int_distribution<Eigen::Index> pick(0, ns - 1);
            s.B.resize(nk, n_d);
            for (int j = 0; j < n_d; ++j) {
                Eigen::VectorXd acc = Eigen::VectorXd::Zero(nk);
                for (int k = 0; k < 5; ++k) acc += cp.Lt().col(pick(rng));
                s.B.col(j) = (acc / 5.0).cwiseMax(0.0);
            }
            s.C = Eigen::MatrixXd::Constant(n_d, ns, 1.0 / n_d);
            break;
        }
    }
    return s;
}

struct Trace {
    std::vector<double> objective;
    std::vector<double> seconds;
};

// Runs `iters` (optionally extrapolated) sweeps, recording the objective and
// wall time of each.
template <typename Products>
FactorState<double> optimize(SchemeKind kind, FactorState<double> state, const Products& cp, ResolvedParams params,
                             double x_norm_sq, ExtrapolationState<double>& ex, int iters, Trace* trace = nullptr) {
    using Clock = std::chrono::steady_clock;
    for (int it = 0; it < iters; ++it) {
        const auto t0 = Clock::now();
        state = extrapolate(ex, step(kind, state, cp, params.lambda, params.eta));
        const auto t1 = Clock::now();
        if (trace) {
            trace->seconds.push_back(std::chrono::duration<double>(t1 - t0).count());
            trace->objective.push_back(objective(kind, state, cp, params.lambda, x_norm_sq));
        }
    }
    return state;
}

struct MultistartResult {
    FactorState<double> best;
    int best_index = -1;
    // Final full objective per start; NaN where the start diverged.
    std::vector<double> objectives;
    std::vector<std::string> divergence_reports;
    Trace best_trace;
};

// Independent seeded starts run concurrently; returns the lowest-objective
// state (earliest start on ties).
MultistartResult multistart(const SchemeConfig& cfg, const CachedProducts<double>& cp, ResolvedParams params,
                            double x_norm_sq);
MultistartResult multistart(const SchemeConfig& cfg, const Eigen::MatrixXd& X, const DesignMatrix<double>& D);

struct RefinementLogEntry {
    int round = 0;
    std::vector<FaceRef> split;
    std::vector<FaceRef> skipped;
    std::vector<int> removed_columns;
    Eigen::Index n_k_after = 0;
};

struct RunResult {
    SchemeConfig config;
    ResolvedParams params;
    Trace trace;
    // Index into the trace where each refinement round starts.
    std::vector<std::size_t> round_starts;
    std::vector<RefinementLogEntry> refinement_log;
    std::vector<double> multistart_objectives;
    int best_start = -1;
    double l1_B = 0;
    double l1_C = 0;
    FactorState<double> factors;
    // C, or the projected loadings B^T L^T for PPNMF.
    Eigen::MatrixXd loadings;
    DesignMatrix<double> design;
};

// Coarse initial design, multistart, then refine_rounds rounds of
// (local error, split faces_per_round faces, iters_per_round sweeps).
RunResult run(const SchemeConfig& cfg, const Eigen::MatrixXd& X, const IcosphereHierarchy& hier);

// Entrywise absolute sums of B and C (C = 0 when absent).
std::pair<double, double> sparsity_report(const Eigen::MatrixXd& B, const std::optional<Eigen::MatrixXd>& C);

struct BenchmarkOptions {
    int coarse_warmup = 100;
    int coarse_iters = 1000;
    int fine_reps = 10;
};

struct BenchmarkResult {
    // Median seconds per sweep.
    double coarse_seconds = 0;
    double fine_seconds = 0;
    double speedup = 0;
};

// Per-sweep time with the 20-column initial design versus the identity
// design at data resolution.
BenchmarkResult benchmark_iteration_time(const SchemeConfig& cfg, const Eigen::MatrixXd& X,
                                         const IcosphereHierarchy& hier, BenchmarkOptions opts = {});

struct SyntheticData {
    Eigen::MatrixXd X;
    // Fine-resolution sources (n_f x n_sources) or coarse planted B
    // (n_k x n_sources), depending on the generator.
    Eigen::MatrixXd planted_B;
    Eigen::MatrixXd planted_C;
};

// X = F C* + noise clamped at 0, where F holds bump maps at random sphere
// points (sigma uniform in [0.02, 0.08]) and C* ~ U[0, 1].
SyntheticData synth_data(const IcosphereHierarchy& hier, int data_level, int n_s, int n_sources, double noise_sigma,
                         std::uint64_t seed);

// X = D B* C* + noise clamped at 0, with B* supported on disjoint groups of
// design columns, so B* is an exact coarse factorization of the clean data.
// Each C* entry is zero with probability c_zero_fraction, otherwise U[0, 1].
SyntheticData synth_planted_coarse(const DesignMatrix<double>& D, int n_s, int n_sources, double noise_sigma,
                                   std::uint64_t seed, double c_zero_fraction = 0.5);

struct ExtrapolationComparison {
    std::vector<std::string> labels;
    // iters x methods, median objective over repetitions.
    Eigen::MatrixXd median_objective;
};

// Method labels in comparison order: DL, E-DL, PNNMF, E-PNNMF, LE-PNNMF, ...
std::vector<std::pair<SchemeKind, ExtrapolationKind>> method_grid(const std::vector<SchemeKind>& schemes);
std::string method_label(SchemeKind kind, ExtrapolationKind ex);

// Every applicable scheme x extrapolation pair, `reps` seeded repetitions of
// `iters` sweeps on the initial design, per-scheme default lambda.
ExtrapolationComparison compare_extrapolation(const SchemeConfig& cfg, const Eigen::MatrixXd& X,
                                              const IcosphereHierarchy& hier, const std::vector<SchemeKind>& schemes,
                                              int reps = 10, int iters = 1000);

// JSON report (objective trace, timings, refinement log, sparsity).
std::string run_report_json(const RunResult& r);

}  // namespace icofact
