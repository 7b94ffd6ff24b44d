#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "imhyb/errors.hpp"
#include "imhyb/numerics/dense.hpp"

namespace imhyb {

struct LmConfig {
    double lambda0 = 1e-2;
    double tol_F = 1e-8;
    double tol_R = 1e-4;
    int k_max = 1000;
    double lambda_up = 10.0;
    double lambda_down = 10.0;
    int max_rejections = 60;

    void validate() const {
        if (!(lambda0 > 0.0 && tol_F > 0.0 && tol_R > 0.0)) throw ConfigError("LM tolerances must be positive");
        if (k_max < 1) throw ConfigError("k_max must be >= 1");
        if (!(lambda_up > 1.0 && lambda_down > 1.0)) throw ConfigError("LM damping factors must exceed 1");
        if (max_rejections < 1) throw ConfigError("max_rejections must be >= 1");
    }
};

enum class StopReason { FunctionTol, StepTol, MaxIter };

inline const char* stop_reason_name(StopReason s) {
    switch (s) {
        case StopReason::FunctionTol: return "FunctionTol";
        case StopReason::StepTol: return "StepTol";
        case StopReason::MaxIter: return "MaxIter";
    }
    return "?";
}

inline StopReason stop_reason_from_name(const std::string& s) {
    if (s == "FunctionTol") return StopReason::FunctionTol;
    if (s == "StepTol") return StopReason::StepTol;
    if (s == "MaxIter") return StopReason::MaxIter;
    throw ModelFormatError("unknown stop reason '" + s + "'");
}

struct LmTraceEntry {
    int iteration = 0;
    double lambda = 0.0;
    double loss = 0.0;  // squared residual norm of the trial point
    bool accepted = false;
};

struct LmResult {
    numerics::Vector params;
    double final_loss = 0.0;
    int iterations = 0;
    StopReason stop = StopReason::MaxIter;
    std::vector<LmTraceEntry> trace;
};

namespace detail {

template <class Problem>
concept HasBlockedGram = requires(const Problem& p, const numerics::DenseMatrix& J) {
    { p.gram(J) } -> std::convertible_to<numerics::DenseMatrix>;
};

template <class Problem>
numerics::DenseMatrix gram_of(const Problem& prob, const numerics::DenseMatrix& J) {
    if constexpr (HasBlockedGram<Problem>) {
        return prob.gram(J);
    } else {
        numerics::DenseMatrix G = numerics::DenseMatrix::Zero(J.cols(), J.cols());
        G.selfadjointView<Eigen::Lower>().rankUpdate(J.transpose());
        G.triangularView<Eigen::StrictlyUpper>() = G.transpose();
        return G;
    }
}

}  // namespace detail

/// Levenberg-Marquardt on min ||F(R)||^2. Problem provides
///   Vector residuals(const Vector&) const;
///   DenseMatrix jacobian(const Vector&) const;
/// and optionally DenseMatrix gram(const DenseMatrix& J) const for a
/// structured J^T J.
///
/// Each trial step counts as one iteration. A step is accepted iff it
/// strictly lowers ||F||. The function and step tolerances are tested after
/// an accepted step; after a rejected step only the step tolerance is tested,
/// on the proposed step, since further damping can only shorten it.
template <class Problem>
LmResult lm_minimize(const Problem& prob, numerics::Vector R, const LmConfig& cfg,
                     bool record_trace = false) {
    using numerics::DenseMatrix;
    using numerics::Vector;
    cfg.validate();

    LmResult out;
    Vector F = prob.residuals(R);
    double normF = F.norm();
    if (!std::isfinite(normF)) throw SingularSystem("non-finite residual at the initial point");
    if (normF == 0.0) {
        out.params = std::move(R);
        out.iterations = 1;
        out.stop = StopReason::FunctionTol;
        return out;
    }

    double lambda = cfg.lambda0;
    int rejections = 0;
    bool fresh = true;
    DenseMatrix J;
    DenseMatrix G;
    Vector grad;

    for (int k = 1; k <= cfg.k_max; ++k) {
        out.iterations = k;
        if (fresh) {
            J = prob.jacobian(R);
            if (J.rows() != F.size() || J.cols() != R.size()) {
                throw DimensionMismatch("Jacobian shape does not match residuals/parameters");
            }
            G = detail::gram_of(prob, J);
            grad.noalias() = J.transpose() * F;
            fresh = false;
        }
        const Vector d = numerics::solve_damped_gram(G, grad, lambda, J, F);
        Vector Rn = R + d;
        Vector Fn = prob.residuals(Rn);
        const double normFn = Fn.norm();
        const bool accept = normFn < normF;
        if (record_trace) out.trace.push_back({k, lambda, normFn * normFn, accept});

        const double step = d.norm();
        if (accept) {
            const double dF = (Fn - F).norm();
            const double scaleF = 1.0 + normF;
            const double scaleR = 1.0 + R.norm();
            R = std::move(Rn);
            F = std::move(Fn);
            normF = normFn;
            lambda /= cfg.lambda_down;
            rejections = 0;
            fresh = true;
            if (normF == 0.0 || dF < cfg.tol_F * scaleF) {
                out.stop = StopReason::FunctionTol;
                break;
            }
            if (step < cfg.tol_R * scaleR) {
                out.stop = StopReason::StepTol;
                break;
            }
        } else {
            lambda *= cfg.lambda_up;
            if (++rejections >= cfg.max_rejections) {
                throw SingularSystem("damping escalated " + std::to_string(rejections) +
                                     " times without reducing the residual");
            }
            if (step < cfg.tol_R * (1.0 + R.norm())) {
                out.stop = StopReason::StepTol;
                break;
            }
        }
        if (k == cfg.k_max) out.stop = StopReason::MaxIter;
    }

    out.final_loss = normF * normF;
    out.params = std::move(R);
    return out;
}

}  // namespace imhyb
