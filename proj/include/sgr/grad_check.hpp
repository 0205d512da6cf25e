#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "sgr/error.hpp"
#include "sgr/params.hpp"
#include "sgr/tape.hpp"

namespace sgr {

// A differentiable scalar function of the parameters. The callable must be a
// pure function of the bound parameter values: the checker evaluates it many
// times and compares two baseline evaluations bit-for-bit to catch hidden
// state or fresh randomness before trusting any finite difference.
using LossFn = std::function<Tape::Val(Tape&, const BoundParams&)>;

struct GradCheckEntry {
    std::string param;
    double max_rel_err = 0.0;
    int worst_row = -1;
    int worst_col = -1;
    double analytic = 0.0;
    double numeric = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double max_rel_err = 0.0;
    double tolerance = 1e-4;
    bool passed = false;
};

namespace detail {

inline double eval_loss(const LossFn& fn, const ParamStore& params) {
    Tape tape;
    BoundParams bp = bind_params(tape, params, /*requires_grad=*/false);
    Tape::Val loss = fn(tape, bp);
    return tape.value(loss).item();
}

} // namespace detail

// Central finite-difference check of every parameter entry:
//   numeric = (f(p+eps) - f(p-eps)) / (2*eps)
//   rel_err = |analytic - numeric| / max(|analytic|, |numeric|, 1.0)
inline GradCheckReport grad_check(const LossFn& fn, const ParamStore& params,
                                  double tolerance = 1e-4, double eps = 1e-5) {
    GradCheckReport report;
    report.tolerance = tolerance;

    double base1 = detail::eval_loss(fn, params);
    double base2 = detail::eval_loss(fn, params);
    require(base1 == base2,
            "grad_check: two evaluations of the loss differ; the loss function "
            "must be deterministic in the parameters");

    Tape tape;
    BoundParams bp = bind_params(tape, params, /*requires_grad=*/true);
    Tape::Val loss = fn(tape, bp);
    tape.backward(loss);
    std::vector<Tensor> grads = collect_gradients(tape, bp);

    ParamStore probe;
    for (size_t i = 0; i < params.count(); ++i) probe.add(params.name(i), params.value(i));

    for (size_t pi = 0; pi < params.count(); ++pi) {
        GradCheckEntry entry;
        entry.param = params.name(pi);
        Tensor& pv = probe.value(pi);
        const Tensor& gv = grads[pi];
        for (int r = 0; r < pv.rows(); ++r) {
            for (int c = 0; c < pv.cols(); ++c) {
                double saved = pv.at(r, c);
                pv.at(r, c) = saved + eps;
                double up = detail::eval_loss(fn, probe);
                pv.at(r, c) = saved - eps;
                double down = detail::eval_loss(fn, probe);
                pv.at(r, c) = saved;
                double numeric = (up - down) / (2.0 * eps);
                double analytic = gv.at(r, c);
                double rel = std::abs(analytic - numeric) /
                             std::max({std::abs(analytic), std::abs(numeric), 1.0});
                if (rel > entry.max_rel_err) {
                    entry.max_rel_err = rel;
                    entry.worst_row = r;
                    entry.worst_col = c;
                    entry.analytic = analytic;
                    entry.numeric = numeric;
                }
            }
        }
        report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
        report.entries.push_back(std::move(entry));
    }
    report.passed = report.max_rel_err <= tolerance;
    return report;
}

} // namespace sgr
