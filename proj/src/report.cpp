#include <string>

#include <json.hpp>

#include "icofact/pipeline.hpp"

namespace icofact {
namespace {

nlohmann::json faces_json(const std::vector<FaceRef>& faces) {
    auto arr = nlohmann::json::array();
    for (const auto& f : faces) arr.push_back({{"level", f.level}, {"index", f.index}});
    return arr;
}

}  // namespace

std::string run_report_json(const RunResult& r) {
    const SchemeConfig& c = r.config;
    nlohmann::json j;
    j["config"] = {
        {"scheme", std::string(to_string(c.kind))},
        {"extrapolation", std::string(to_string(c.extrapolation))},
        {"nd", c.n_d},
        {"multistarts", c.multistart_count},
        {"iters", c.multistart_iters},
        {"refine_rounds", c.refine_rounds},
        {"faces_per_round", c.faces_per_round},
        {"iters_per_round", c.iters_per_round},
        {"seed", c.seed},
        {"level", c.data_level},
        {"sigma0", c.sigma0},
        {"tau", c.tau},
    };
    if (c.warmup) j["config"]["warmup"] = *c.warmup;
    j["lambda"] = r.params.lambda;
    j["eta"] = r.params.eta;
    j["best_start"] = r.best_start;
    j["multistart_objectives"] = r.multistart_objectives;
    j["objective_trace"] = r.trace.objective;
    j["iteration_seconds"] = r.trace.seconds;
    j["round_starts"] = r.round_starts;
    auto log = nlohmann::json::array();
    for (const auto& e : r.refinement_log) {
        log.push_back({{"round", e.round},
                       {"split", faces_json(e.split)},
                       {"skipped", faces_json(e.skipped)},
                       {"removed_columns", e.removed_columns},
                       {"n_k", e.n_k_after}});
    }
    j["refinement_log"] = std::move(log);
    j["sparsity"] = {{"l1_B", r.l1_B}, {"l1_C", r.l1_C}};
    j["n_k"] = r.design.n_k();
    j["n_d"] = r.factors.B.cols();
    return j.dump(2);
}

}  // namespace icofact
