#include "icofact/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <numeric>
#include <thread>

namespace icofact {
namespace {

double median(std::vector<double> v) {
    v.erase(std::remove_if(v.begin(), v.end(), [](double x) { return std::isnan(x); }), v.end());
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double hi = v[mid];
    if (v.size() % 2 == 1) return hi;
    const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lo + hi);
}

void require_data_shape(const Eigen::MatrixXd& X, const IcosphereHierarchy& hier, int data_level) {
    if (data_level < 0 || data_level > hier.max_level()) {
        throw ConfigError("data level " + std::to_string(data_level) + " is not present in the hierarchy");
    }
    const auto expected = counts(data_level).faces;
    if (X.rows() != expected) {
        throw DimensionMismatch("data has " + std::to_string(X.rows()) + " rows but level " +
                                std::to_string(data_level) + " expects " + std::to_string(expected));
    }
    if (X.cols() < 1) throw DimensionMismatch("data has no subjects");
}

struct StartOutcome {
    std::optional<FactorState<double>> state;
    double objective = std::numeric_limits<double>::quiet_NaN();
    Trace trace;
    std::string error;
};

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
    // splitmix64 finalizer
    std::uint64_t z = (seed ^ index) + 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

MultistartResult multistart(const SchemeConfig& cfg, const CachedProducts<double>& cp, ResolvedParams params,
                            double x_norm_sq) {
    cfg.validate();
    const auto n = static_cast<std::size_t>(cfg.multistart_count);
    std::vector<StartOutcome> outcomes(n);
    std::atomic<std::size_t> next{0};

    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            StartOutcome& out = outcomes[i];
            try {
                Rng rng(derive_seed(cfg.seed, i));
                auto ex = make_extrapolation<double>(cfg.extrapolation, cfg.kind, cfg.warmup);
                FactorState<double> s = init_factors(cfg.kind, rng, cp, cfg.n_d);
                s = optimize(cfg.kind, std::move(s), cp, params, x_norm_sq, ex, cfg.multistart_iters, &out.trace);
                out.objective = objective(cfg.kind, s, cp, params.lambda, x_norm_sq);
                if (!std::isfinite(out.objective)) throw DivergenceError("objective", s.iteration);
                out.state = std::move(s);
            } catch (const DivergenceError& e) {
                out.error = "start " + std::to_string(i) + ": " + e.what();
                out.objective = std::numeric_limits<double>::quiet_NaN();
            }
        }
    };
    const std::size_t n_threads = std::clamp<std::size_t>(std::thread::hardware_concurrency(), 1, n);
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    }

    MultistartResult r;
    for (std::size_t i = 0; i < n; ++i) {
        r.objectives.push_back(outcomes[i].objective);
        if (!outcomes[i].error.empty()) r.divergence_reports.push_back(outcomes[i].error);
        if (!outcomes[i].state) continue;
        if (r.best_index < 0 || outcomes[i].objective < r.objectives[static_cast<std::size_t>(r.best_index)]) {
            r.best_index = static_cast<int>(i);
        }
    }
    if (r.best_index < 0) {
        std::string msg = "all " + std::to_string(n) + " starts diverged";
        for (const auto& e : r.divergence_reports) msg += "; " + e;
        throw DivergenceError(msg, cfg.multistart_iters);
    }
    r.best = std::move(*outcomes[static_cast<std::size_t>(r.best_index)].state);
    r.best_trace = std::move(outcomes[static_cast<std::size_t>(r.best_index)].trace);
    return r;
}

MultistartResult multistart(const SchemeConfig& cfg, const Eigen::MatrixXd& X, const DesignMatrix<double>& D) {
    const auto cp = precompute(X, D);
    return multistart(cfg, cp, resolve_params(cfg, cp), X.squaredNorm());
}

RunResult run(const SchemeConfig& cfg, const Eigen::MatrixXd& X, const IcosphereHierarchy& hier) {
    cfg.validate();
    require_data_shape(X, hier, cfg.data_level);

    RunResult r;
    r.config = cfg;
    DesignMatrix<double> D = initial_design<double>(hier, cfg.data_level, cfg.sigma0, cfg.tau);
    CachedProducts<double> cp = precompute(X, D);
    const double x_norm_sq = X.squaredNorm();
    r.params = resolve_params(cfg, cp);

    MultistartResult ms = multistart(cfg, cp, r.params, x_norm_sq);
    r.multistart_objectives = ms.objectives;
    r.best_start = ms.best_index;
    r.trace = std::move(ms.best_trace);
    FactorState<double> state = std::move(ms.best);

    for (int round = 1; round <= cfg.refine_rounds; ++round) {
        const Eigen::VectorXd e = local_error(cp, state.B, loadings(state, cp));
        Refinement<double> ref = refine(hier, D, state.B, cp, X, e, cfg.faces_per_round);
        D = std::move(ref.design);
        cp = std::move(ref.products);
        state.B = std::move(ref.B);

        RefinementLogEntry entry;
        entry.round = round;
        entry.split = ref.record.split;
        entry.skipped = ref.record.skipped;
        entry.removed_columns = ref.record.removed_columns;
        entry.n_k_after = D.n_k();
        r.refinement_log.push_back(std::move(entry));
        r.round_starts.push_back(r.trace.objective.size());

        auto ex = make_extrapolation<double>(cfg.extrapolation, cfg.kind, cfg.warmup);
        state = optimize(cfg.kind, std::move(state), cp, r.params, x_norm_sq, ex, cfg.iters_per_round, &r.trace);
    }

    r.loadings = loadings(state, cp);
    const auto [l1b, l1c] = sparsity_report(state.B, r.loadings);
    r.l1_B = l1b;
    r.l1_C = l1c;
    r.factors = std::move(state);
    r.design = std::move(D);
    return r;
}

std::pair<double, double> sparsity_report(const Eigen::MatrixXd& B, const std::optional<Eigen::MatrixXd>& C) {
    return {B.cwiseAbs().sum(), C ? C->cwiseAbs().sum() : 0.0};
}

BenchmarkResult benchmark_iteration_time(const SchemeConfig& cfg, const Eigen::MatrixXd& X,
                                         const IcosphereHierarchy& hier, BenchmarkOptions opts) {
    cfg.validate();
    require_data_shape(X, hier, cfg.data_level);
    using Clock = std::chrono::steady_clock;

    auto time_sweeps = [&](const auto& cp, int warmup, int reps) {
        const auto params = resolve_params(cfg, cp);
        Rng rng(derive_seed(cfg.seed, 0));
        FactorState<double> s = init_factors(cfg.kind, rng, cp, cfg.n_d);
        for (int i = 0; i < warmup; ++i) s = step(cfg.kind, s, cp, params.lambda, params.eta);
        std::vector<double> t;
        t.reserve(static_cast<std::size_t>(reps));
        for (int i = 0; i < reps; ++i) {
            const auto t0 = Clock::now();
            s = step(cfg.kind, s, cp, params.lambda, params.eta);
            t.push_back(std::chrono::duration<double>(Clock::now() - t0).count());
        }
        return median(std::move(t));
    };

    BenchmarkResult b;
    {
        const auto D = initial_design<double>(hier, cfg.data_level, cfg.sigma0, cfg.tau);
        b.coarse_seconds = time_sweeps(precompute(X, D), opts.coarse_warmup, opts.coarse_iters);
    }
    {
        const IdentityProducts<double> fine{X};
        b.fine_seconds = time_sweeps(fine, 1, opts.fine_reps);
    }
    b.speedup = b.fine_seconds / b.coarse_seconds;
    return b;
}

SyntheticData synth_data(const IcosphereHierarchy& hier, int data_level, int n_s, int n_sources, double noise_sigma,
                         std::uint64_t seed) {
    if (n_sources < 1) throw std::invalid_argument("synth_data: n_sources must be >= 1");
    if (n_s < 1) throw std::invalid_argument("synth_data: n_s must be >= 1");
    if (noise_sigma < 0) throw std::invalid_argument("synth_data: noise_sigma must be >= 0");
    if (data_level < 0 || data_level > hier.max_level()) throw std::out_of_range("synth_data: data level missing");

    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> width(0.02, 0.08);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    const PointSet centers = face_centers(hier.level(data_level));
    SyntheticData d;
    d.planted_B.resize(centers.rows(), n_sources);
    for (int j = 0; j < n_sources; ++j) {
        Point3 p;
        do {
            p = Point3(normal(rng), normal(rng), normal(rng));
        } while (p.norm() < 1e-9);
        p.normalize();
        d.planted_B.col(j) = bump_column(p, width(rng), kDefaultTau, centers);
    }
    d.planted_C.resize(n_sources, n_s);
    for (Eigen::Index j = 0; j < n_s; ++j)
        for (Eigen::Index i = 0; i < n_sources; ++i) d.planted_C(i, j) = unit(rng);

    d.X = d.planted_B * d.planted_C;
    if (noise_sigma > 0) {
        for (Eigen::Index j = 0; j < d.X.cols(); ++j)
            for (Eigen::Index i = 0; i < d.X.rows(); ++i) d.X(i, j) += noise_sigma * normal(rng);
        d.X = d.X.cwiseMax(0.0);
    }
    return d;
}

SyntheticData synth_planted_coarse(const DesignMatrix<double>& D, int n_s, int n_sources, double noise_sigma,
                                   std::uint64_t seed, double c_zero_fraction) {
    const Eigen::Index nk = D.n_k();
    if (n_sources < 1 || n_sources > nk) throw std::invalid_argument("synth_planted_coarse: need 1 <= n_sources <= n_k");
    if (n_s < 1) throw std::invalid_argument("synth_planted_coarse: n_s must be >= 1");
    if (noise_sigma < 0) throw std::invalid_argument("synth_planted_coarse: noise_sigma must be >= 0");
    if (!(c_zero_fraction >= 0 && c_zero_fraction < 1))
        throw std::invalid_argument("synth_planted_coarse: c_zero_fraction must be in [0, 1)");

    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> weight(0.5, 1.5);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::vector<Eigen::Index> rows(static_cast<std::size_t>(nk));
    std::iota(rows.begin(), rows.end(), Eigen::Index{0});
    std::shuffle(rows.begin(), rows.end(), rng);
    const Eigen::Index group = nk / n_sources;

    SyntheticData d;
    d.planted_B = Eigen::MatrixXd::Zero(nk, n_sources);
    for (Eigen::Index j = 0; j < n_sources; ++j)
        for (Eigen::Index k = 0; k < group; ++k) d.planted_B(rows[static_cast<std::size_t>(j * group + k)], j) = weight(rng);
    d.planted_C.resize(n_sources, n_s);
    for (Eigen::Index j = 0; j < n_s; ++j)
        for (Eigen::Index i = 0; i < n_sources; ++i) {
            const bool zero = unit(rng) < c_zero_fraction;
            const double v = unit(rng);
            d.planted_C(i, j) = zero ? 0.0 : v;
        }

    d.X = D.values * (d.planted_B * d.planted_C);
    if (noise_sigma > 0) {
        for (Eigen::Index j = 0; j < d.X.cols(); ++j)
            for (Eigen::Index i = 0; i < d.X.rows(); ++i) d.X(i, j) += noise_sigma * normal(rng);
        d.X = d.X.cwiseMax(0.0);
    }
    return d;
}

std::string method_label(SchemeKind kind, ExtrapolationKind ex) {
    std::string prefix;
    if (ex == ExtrapolationKind::Standard) prefix = "E-";
    if (ex == ExtrapolationKind::LogBounded) prefix = "LE-";
    return prefix + std::string(to_string(kind));
}

std::vector<std::pair<SchemeKind, ExtrapolationKind>> method_grid(const std::vector<SchemeKind>& schemes) {
    std::vector<std::pair<SchemeKind, ExtrapolationKind>> out;
    for (SchemeKind k : schemes) {
        out.emplace_back(k, ExtrapolationKind::None);
        out.emplace_back(k, ExtrapolationKind::Standard);
        if (is_nonnegative(k)) out.emplace_back(k, ExtrapolationKind::LogBounded);
    }
    return out;
}

ExtrapolationComparison compare_extrapolation(const SchemeConfig& cfg, const Eigen::MatrixXd& X,
                                              const IcosphereHierarchy& hier, const std::vector<SchemeKind>& schemes,
                                              int reps, int iters) {
    if (reps < 1 || iters < 1) throw ConfigError("compare_extrapolation: reps and iters must be >= 1");
    require_data_shape(X, hier, cfg.data_level);
    const auto D = initial_design<double>(hier, cfg.data_level, cfg.sigma0, cfg.tau);
    const auto cp = precompute(X, D);
    const double x_norm_sq = X.squaredNorm();

    const auto grid = method_grid(schemes);
    ExtrapolationComparison out;
    out.median_objective.resize(iters, static_cast<Eigen::Index>(grid.size()));
    for (std::size_t m = 0; m < grid.size(); ++m) {
        const auto [kind, ex_kind] = grid[m];
        out.labels.push_back(method_label(kind, ex_kind));
        SchemeConfig c = cfg;
        c.kind = kind;
        c.lambda.reset();
        const ResolvedParams params = resolve_params(c, cp);

        std::vector<std::vector<double>> per_iter(static_cast<std::size_t>(iters));
        for (int r = 0; r < reps; ++r) {
            Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(r)));
            auto ex = make_extrapolation<double>(ex_kind, kind, cfg.warmup);
            Trace t;
            try {
                optimize(kind, init_factors(kind, rng, cp, cfg.n_d), cp, params, x_norm_sq, ex, iters, &t);
            } catch (const DivergenceError&) {
                t.objective.resize(static_cast<std::size_t>(iters), std::numeric_limits<double>::quiet_NaN());
            }
            for (int i = 0; i < iters; ++i) per_iter[static_cast<std::size_t>(i)].push_back(t.objective[static_cast<std::size_t>(i)]);
        }
        for (int i = 0; i < iters; ++i) {
            out.median_objective(i, static_cast<Eigen::Index>(m)) = median(per_iter[static_cast<std::size_t>(i)]);
        }
    }
    return out;
}

}  // namespace icofact
