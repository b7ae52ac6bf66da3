#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string_view>
#include <utility>

#include <Eigen/Dense>

#include "icofact/schemes.hpp"

namespace icofact {

enum class ExtrapolationKind { None, Standard, LogBounded };

std::string_view to_string(ExtrapolationKind k);
// Accepts "none", "standard", "log".
ExtrapolationKind parse_extrapolation(std::string_view s);

inline constexpr double kGoldenRatio = 1.6180339887498949;  // (1 + sqrt 5) / 2
inline constexpr int kLogWarmup = 10;
inline constexpr double kLogClampLow = 0.1;
inline constexpr double kLogClampHigh = 10.0;

inline double tau_next(double tau) {
    if (tau < 1.0) throw std::invalid_argument("tau_next: tau must be >= 1");
    return (1.0 + std::sqrt(1.0 + 4.0 * tau * tau)) / 2.0;
}

inline double momentum(double tau) { return (tau - 1.0) / (tau + 1.0); }

// y + m (y - y_prev) with m = (tau-1)/(tau+1), projected onto y >= 0 unless
// `project` is false (signed factors).
template <typename DA, typename DB>
auto extrapolate_standard(const Eigen::MatrixBase<DA>& y, const Eigen::MatrixBase<DB>& y_prev, double tau,
                          bool project = true) {
    using Scalar = typename DA::Scalar;
    if (y.rows() != y_prev.rows() || y.cols() != y_prev.cols()) {
        throw std::invalid_argument("extrapolate_standard: shape mismatch");
    }
    const auto m = static_cast<Scalar>(momentum(tau));
    Mat<Scalar> out = y + m * (y - y_prev);
    if (project) out = out.cwiseMax(Scalar(0));
    return out;
}

// y * clamp((y / y_prev)^m, 0.1, 10), i.e. momentum on log(y) with the step
// bounded to one decade. 0/0 keeps the entry at 0; y > 0 over 0 takes the
// upper clamp.
template <typename DA, typename DB>
auto extrapolate_log(const Eigen::MatrixBase<DA>& y, const Eigen::MatrixBase<DB>& y_prev, double tau) {
    using Scalar = typename DA::Scalar;
    if (y.rows() != y_prev.rows() || y.cols() != y_prev.cols()) {
        throw std::invalid_argument("extrapolate_log: shape mismatch");
    }
    const auto m = static_cast<Scalar>(momentum(tau));
    const auto lo = static_cast<Scalar>(kLogClampLow), hi = static_cast<Scalar>(kLogClampHigh);
    return Mat<Scalar>(y.binaryExpr(y_prev, [=](Scalar cur, Scalar prev) {
        if (cur <= Scalar(0)) return Scalar(0);
        if (prev <= Scalar(0)) return cur * hi;
        return cur * std::clamp(std::pow(cur / prev, m), lo, hi);
    }));
}

template <typename Scalar = double>
struct ExtrapolationState {
    ExtrapolationKind kind = ExtrapolationKind::None;
    double tau = kGoldenRatio;
    int warmup_remaining = 0;
    bool signed_factors = false;
    std::optional<Mat<Scalar>> prev_B;
    std::optional<Mat<Scalar>> prev_C;
};

// Default warmup is 10 sweeps for LogBounded and 0 otherwise. LogBounded is
// rejected for DL, whose factors are signed.
template <typename Scalar = double>
ExtrapolationState<Scalar> make_extrapolation(ExtrapolationKind kind, SchemeKind scheme,
                                              std::optional<int> warmup = std::nullopt) {
    if (kind == ExtrapolationKind::LogBounded && scheme == SchemeKind::DL) {
        throw ConfigError("log extrapolation is undefined for DL (signed factors)");
    }
    ExtrapolationState<Scalar> s;
    s.kind = kind;
    s.signed_factors = !is_nonnegative(scheme);
    s.warmup_remaining = warmup.value_or(kind == ExtrapolationKind::LogBounded ? kLogWarmup : 0);
    if (s.warmup_remaining < 0) throw ConfigError("warmup must be >= 0");
    return s;
}

// Takes the raw post-step iterate y_t and returns the next iterate. tau
// advances once per call, i.e. once per full B + C sweep.
template <typename Scalar>
FactorState<Scalar> extrapolate(ExtrapolationState<Scalar>& ex, FactorState<Scalar> y) {
    if (ex.kind == ExtrapolationKind::None) return y;
    const bool active = ex.warmup_remaining == 0 && ex.prev_B.has_value();
    if (ex.warmup_remaining > 0) --ex.warmup_remaining;
    if (!active) {
        ex.prev_B = y.B;
        ex.prev_C = y.C;
        return y;
    }
    // A refinement between calls changes shapes; restart the momentum.
    if (ex.prev_B->rows() != y.B.rows() || ex.prev_B->cols() != y.B.cols()) {
        ex.prev_B = y.B;
        ex.prev_C = y.C;
        ex.tau = kGoldenRatio;
        return y;
    }
    auto apply = [&](const Mat<Scalar>& cur, const Mat<Scalar>& prev) {
        if (ex.kind == ExtrapolationKind::Standard) return extrapolate_standard(cur, prev, ex.tau, !ex.signed_factors);
        return extrapolate_log(cur, prev, ex.tau);
    };
    FactorState<Scalar> out;
    out.iteration = y.iteration;
    out.B = apply(y.B, *ex.prev_B);
    if (y.C && ex.prev_C) out.C = apply(*y.C, *ex.prev_C);
    ex.tau = tau_next(ex.tau);
    ex.prev_B = std::move(y.B);
    ex.prev_C = std::move(y.C);
    return out;
}

// Decorates a raw sweep `step(const FactorState&) -> FactorState` with the
// extrapolation carried by `ex`, which must outlive the returned callable.
template <typename Scalar, typename Step>
auto wrap_step(Step step, ExtrapolationState<Scalar>& ex) {
    return [step = std::move(step), &ex](const FactorState<Scalar>& s) {
        return extrapolate(ex, step(s));
    };
}

}  // namespace icofact
