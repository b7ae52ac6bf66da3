#include "cli.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "icofact/errors.hpp"
#include "icofact/icosphere.hpp"
#include "icofact/io.hpp"
#include "icofact/pipeline.hpp"

namespace icofact::cli {
namespace {

namespace fs = std::filesystem;

// Raised for bad flag values the parser itself cannot catch.
struct UsageError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Scheme flags, kept as text so that set flags override config file keys.
struct SchemeFlags {
    std::optional<std::string> config;
    std::map<std::string, std::optional<std::string>> values;

    void attach(CLI::App* app) {
        app->add_option("--config", config, "key=value run config file");
        const std::vector<std::pair<const char*, const char*>> flags = {
            {"level", "data mesh level"},
            {"scheme", "dl|pnnmf|spnnmf|ppnmf"},
            {"lambda", "sparsity / penalty weight"},
            {"extrapolation", "none|standard|log"},
            {"warmup", "plain sweeps before extrapolation starts"},
            {"nd", "number of basis vectors"},
            {"multistarts", "random starts"},
            {"iters", "iterations per start"},
            {"refine-rounds", "refinement rounds"},
            {"faces-per-round", "faces split per round"},
            {"iters-per-round", "iterations after each split"},
            {"seed", "random seed"},
            {"sigma0", "root column width"},
            {"tau", "bump cutoff multiple"},
        };
        for (const auto& [name, help] : flags) {
            auto& slot = values[name];
            app->add_option(std::string("--") + name, slot, help);
        }
    }

    SchemeConfig resolve() const {
        SchemeConfig cfg = config ? load_config(*config) : SchemeConfig{};
        for (const auto& [key, value] : values) {
            if (value) {
                try {
                    set_config_key(cfg, key, *value);
                } catch (const ConfigError& e) {
                    throw UsageError("--" + key + ": " + e.what());
                }
            }
        }
        cfg.validate();
        return cfg;
    }
};

void ensure_parent(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

std::ofstream open_out(const fs::path& p) {
    ensure_parent(p);
    std::ofstream out(p, std::ios::binary);
    if (!out) throw IoError("cannot write " + p.string());
    return out;
}

Eigen::MatrixXd load_data(const fs::path& p, int level) {
    Eigen::MatrixXd X = read_matrix(p);
    const auto expected = counts(level).faces;
    if (X.rows() != expected) {
        throw DimensionMismatch("data has " + std::to_string(X.rows()) + " rows but level " + std::to_string(level) +
                                " expects " + std::to_string(expected));
    }
    if ((X.array() < 0).any()) throw DimensionMismatch("data matrix has negative entries");
    return X;
}

int cmd_mesh(int level, const fs::path& out_prefix, std::ostream& out) {
    if (level < 0 || level > IcosphereHierarchy::kDefaultLevelCap) {
        throw UsageError("--level must be in [0, " + std::to_string(IcosphereHierarchy::kDefaultLevelCap) + "], got " +
                         std::to_string(level));
    }
    const auto hier = IcosphereHierarchy::build(level);
    const Mesh& mesh = hier.level(level);
    const MeshCounts c = mesh.count();
    {
        auto f = open_out(fs::path(out_prefix).concat(".obj"));
        write_obj(f, mesh);
    }
    {
        auto f = open_out(fs::path(out_prefix).concat("_centers.csv"));
        write_face_centers_csv(f, face_centers(mesh));
    }
    out << "faces=" << c.faces << " edges=" << c.edges << " nodes=" << c.nodes << '\n';
    return kOk;
}

struct SynthArgs {
    int level = 3;
    int subjects = 20;
    int sources = 5;
    double noise = 0.0;
    std::uint64_t seed = 0;
    std::string mode = "bumps";
    double sigma0 = kDefaultRootSigma;
    std::string out;
    std::optional<std::string> planted;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
    if (a.level < 0 || a.level > IcosphereHierarchy::kDefaultLevelCap) throw UsageError("--level out of range");
    if (a.subjects < 1 || a.sources < 1) throw UsageError("--subjects and --sources must be >= 1");
    if (a.noise < 0) throw UsageError("--noise must be >= 0");
    const auto hier = IcosphereHierarchy::build(a.level);
    SyntheticData d;
    if (a.mode == "bumps") {
        d = synth_data(hier, a.level, a.subjects, a.sources, a.noise, a.seed);
    } else if (a.mode == "coarse") {
        d = synth_planted_coarse(initial_design<double>(hier, a.level, a.sigma0), a.subjects, a.sources, a.noise,
                                 a.seed);
    } else {
        throw UsageError("--mode must be bumps or coarse");
    }
    ensure_parent(a.out);
    write_matrix(a.out, d.X, "face_id", "s");
    if (a.planted) {
        write_matrix(fs::path(*a.planted).concat("_B.csv"), d.planted_B);
        write_matrix(fs::path(*a.planted).concat("_C.csv"), d.planted_C);
    }
    out << "rows=" << d.X.rows() << " subjects=" << d.X.cols() << '\n';
    return kOk;
}

int cmd_factorize(const SchemeConfig& cfg, const fs::path& data, const fs::path& out_dir, std::ostream& out) {
    const Eigen::MatrixXd X = load_data(data, cfg.data_level);
    const auto hier = IcosphereHierarchy::build(cfg.data_level);
    const RunResult r = run(cfg, X, hier);

    fs::create_directories(out_dir);
    write_matrix(out_dir / "B.csv", r.factors.B);
    write_matrix(out_dir / "C.csv", r.loadings);
    {
        auto f = open_out(out_dir / "design.csv");
        write_design_csv(f, r.design);
    }
    {
        auto f = open_out(out_dir / "report.json");
        f << run_report_json(r) << '\n';
    }
    out << "scheme=" << to_string(cfg.kind) << " n_k=" << r.design.n_k()
        << " objective=" << (r.trace.objective.empty() ? 0.0 : r.trace.objective.back()) << '\n';
    return kOk;
}

std::vector<SchemeKind> parse_scheme_list(const std::vector<std::string>& names) {
    std::vector<SchemeKind> out;
    if (names.empty()) return {SchemeKind::DL, SchemeKind::PNNMF, SchemeKind::SPNNMF, SchemeKind::PPNMF};
    for (const auto& n : names) {
        try {
            out.push_back(parse_scheme(n));
        } catch (const ConfigError& e) {
            throw UsageError(std::string("--schemes: ") + e.what());
        }
    }
    return out;
}

int cmd_compare(const SchemeConfig& cfg, const fs::path& data, const fs::path& out_csv,
                const std::vector<std::string>& schemes, int reps, int iters, std::ostream& out) {
    const Eigen::MatrixXd X = load_data(data, cfg.data_level);
    const auto hier = IcosphereHierarchy::build(cfg.data_level);
    const auto cmp = compare_extrapolation(cfg, X, hier, parse_scheme_list(schemes), reps, iters);

    auto f = open_out(out_csv);
    std::string line = "iteration";
    for (const auto& l : cmp.labels) line += "," + l;
    f << line << '\n';
    for (Eigen::Index i = 0; i < cmp.median_objective.rows(); ++i) {
        line = std::to_string(i + 1);
        for (Eigen::Index j = 0; j < cmp.median_objective.cols(); ++j) {
            std::ostringstream v;
            v.precision(17);
            v << cmp.median_objective(i, j);
            line += "," + v.str();
        }
        f << line << '\n';
    }
    for (std::size_t j = 0; j < cmp.labels.size(); ++j) {
        out << cmp.labels[j] << " final=" << cmp.median_objective(cmp.median_objective.rows() - 1, static_cast<Eigen::Index>(j))
            << '\n';
    }
    return kOk;
}

int cmd_benchmark(const SchemeConfig& cfg, const std::optional<std::string>& data, int subjects,
                  const BenchmarkOptions& opts, const std::optional<std::string>& out_json, std::ostream& out) {
    const auto hier = IcosphereHierarchy::build(cfg.data_level);
    const Eigen::MatrixXd X = data ? load_data(*data, cfg.data_level)
                                   : synth_data(hier, cfg.data_level, subjects, cfg.n_d, 0.0, cfg.seed).X;
    const BenchmarkResult b = benchmark_iteration_time(cfg, X, hier, opts);
    out << "scheme=" << to_string(cfg.kind) << " level=" << cfg.data_level << " coarse_seconds=" << b.coarse_seconds
        << " fine_seconds=" << b.fine_seconds << " speedup=" << b.speedup << '\n';
    if (out_json) {
        nlohmann::json j = {{"scheme", std::string(to_string(cfg.kind))},
                            {"level", cfg.data_level},
                            {"faces", X.rows()},
                            {"subjects", X.cols()},
                            {"nd", cfg.n_d},
                            {"coarse_seconds", b.coarse_seconds},
                            {"fine_seconds", b.fine_seconds},
                            {"speedup", b.speedup}};
        auto f = open_out(*out_json);
        f << j.dump(2) << '\n';
    }
    return kOk;
}

int cmd_export(const std::optional<std::string>& in, const std::optional<int>& level, double sigma0, double tau,
               const fs::path& out_path) {
    if (in && level) throw UsageError("export takes either --in or --level, not both");
    if (in) {
        const Eigen::MatrixXd A = read_matrix(*in);
        ensure_parent(out_path);
        write_matrix(out_path, A);
        return kOk;
    }
    if (!level) throw UsageError("export needs --in (matrix conversion) or --level (initial design)");
    if (*level < 0 || *level > IcosphereHierarchy::kDefaultLevelCap) throw UsageError("--level out of range");
    const auto hier = IcosphereHierarchy::build(*level);
    const auto D = initial_design<double>(hier, *level, sigma0, tau);
    if (out_path.extension() == ".bin") {
        ensure_parent(out_path);
        write_matrix(out_path, D.values);
    } else {
        auto f = open_out(out_path);
        write_design_csv(f, D);
    }
    return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Hierarchical factorization of icosphere surface data"};
    app.name("icofact");
    app.require_subcommand(1);

    int mesh_level = 0;
    std::string mesh_out = "mesh";
    auto* mesh = app.add_subcommand("mesh", "Write the level-n icosphere as OBJ plus face centers CSV");
    mesh->add_option("--level", mesh_level, "subdivision level")->required();
    mesh->add_option("--out", mesh_out, "output path prefix");

    SynthArgs synth_args;
    auto* synth = app.add_subcommand("synth", "Generate synthetic positive surface data");
    synth->add_option("--level", synth_args.level, "data mesh level");
    synth->add_option("--subjects", synth_args.subjects, "number of subjects (columns)");
    synth->add_option("--sources", synth_args.sources, "number of planted sources");
    synth->add_option("--noise", synth_args.noise, "Gaussian noise sigma");
    synth->add_option("--seed", synth_args.seed, "random seed");
    synth->add_option("--mode", synth_args.mode, "bumps | coarse");
    synth->add_option("--sigma0", synth_args.sigma0, "root column width (coarse mode)");
    synth->add_option("--out", synth_args.out, "data file (.csv or .bin)")->required();
    synth->add_option("--planted", synth_args.planted, "prefix for planted factor files");

    SchemeFlags fact_flags;
    std::string fact_data, fact_out = "out";
    auto* fact = app.add_subcommand("factorize", "Run multistart + adaptive refinement");
    fact_flags.attach(fact);
    fact->add_option("--data", fact_data, "data matrix (.csv or ICOD .bin)")->required();
    fact->add_option("--out", fact_out, "output directory");

    SchemeFlags cmp_flags;
    std::string cmp_data, cmp_out = "compare.csv";
    std::vector<std::string> cmp_schemes;
    int cmp_reps = 10, cmp_sweeps = 1000;
    auto* cmp = app.add_subcommand("compare-extrapolation", "Median objective traces per scheme and extrapolation");
    cmp_flags.attach(cmp);
    cmp->add_option("--data", cmp_data, "data matrix")->required();
    cmp->add_option("--out", cmp_out, "output CSV");
    cmp->add_option("--schemes", cmp_schemes, "restrict to these schemes");
    cmp->add_option("--reps", cmp_reps, "seeded repetitions");
    cmp->add_option("--sweeps", cmp_sweeps, "iterations per repetition");

    SchemeFlags bench_flags;
    std::optional<std::string> bench_data, bench_out;
    int bench_subjects = 100;
    BenchmarkOptions bench_opts;
    auto* bench = app.add_subcommand("benchmark", "Per-iteration time, coarse design vs identity design");
    bench_flags.attach(bench);
    bench->add_option("--data", bench_data, "data matrix (synthesized when absent)");
    bench->add_option("--subjects", bench_subjects, "subjects for synthesized data");
    bench->add_option("--coarse-iters", bench_opts.coarse_iters, "timed coarse sweeps");
    bench->add_option("--fine-reps", bench_opts.fine_reps, "timed identity-design sweeps");
    bench->add_option("--out", bench_out, "JSON result file");

    std::optional<std::string> exp_in;
    std::optional<int> exp_level;
    double exp_sigma0 = kDefaultRootSigma, exp_tau = kDefaultTau;
    std::string exp_out;
    auto* exp = app.add_subcommand("export", "Convert a matrix between CSV and ICOD, or dump the initial design");
    exp->add_option("--in", exp_in, "input matrix");
    exp->add_option("--level", exp_level, "dump the initial design at this level");
    exp->add_option("--sigma0", exp_sigma0, "root column width");
    exp->add_option("--tau", exp_tau, "bump cutoff multiple");
    exp->add_option("--out", exp_out, "output file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error[usage]: " << e.what() << '\n';
        return kUsageError;
    }

    try {
        if (*mesh) return cmd_mesh(mesh_level, mesh_out, out);
        if (*synth) return cmd_synth(synth_args, out);
        if (*fact) return cmd_factorize(fact_flags.resolve(), fact_data, fact_out, out);
        if (*cmp) {
            if (cmp_reps < 1 || cmp_sweeps < 1) throw UsageError("--reps and --sweeps must be >= 1");
            return cmd_compare(cmp_flags.resolve(), cmp_data, cmp_out, cmp_schemes, cmp_reps, cmp_sweeps, out);
        }
        if (*bench) {
            if (bench_opts.coarse_iters < 1 || bench_opts.fine_reps < 1) throw UsageError("timing counts must be >= 1");
            return cmd_benchmark(bench_flags.resolve(), bench_data, bench_subjects, bench_opts, bench_out, out);
        }
        if (*exp) return cmd_export(exp_in, exp_level, exp_sigma0, exp_tau, exp_out);
    } catch (const UsageError& e) {
        err << "error[usage]: " << e.what() << '\n';
        return kUsageError;
    } catch (const ConfigError& e) {
        err << "error[usage]: " << e.what() << '\n';
        return kUsageError;
    } catch (const DimensionMismatch& e) {
        err << "error[usage]: " << e.what() << '\n';
        return kUsageError;
    } catch (const std::exception& e) {
        err << "error[runtime]: " << e.what() << '\n';
        return kRuntimeError;
    }
    return kUsageError;
}

}  // namespace icofact::cli
