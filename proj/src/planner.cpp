// SPDX-License-Identifier: Apache-2.0
#include "ttl/planner.hpp"

#include <cmath>
#include <sstream>

#include "ttl/errors.hpp"

namespace ttl {

void ScalingConstants::validate() const {
    if (!(A > 0.0) || !(B > 0.0) || !(E > 0.0))
        throw DomainError("scaling constants A, B, E must be positive");
    if (!(alpha > 0.0 && alpha < 1.0) || !(beta > 0.0 && beta < 1.0))
        throw DomainError("scaling exponents must lie in (0, 1)");
}

double predict_loss(double n_params, double n_tokens, const ScalingConstants& c) {
    c.validate();
    if (!(n_params > 0.0)) throw DomainError("predict_loss: n_params must be positive");
    if (!(n_tokens > 0.0)) throw DomainError("predict_loss: n_tokens must be positive");
    return c.A / std::pow(n_params, c.alpha) + c.B / std::pow(n_tokens, c.beta) + c.E;
}

uint64_t optimal_tokens(double n_params, double ratio) {
    if (!(n_params > 0.0)) throw DomainError("optimal_tokens: n_params must be positive");
    if (!(ratio > 0.0)) throw DomainError("optimal_tokens: ratio must be positive");
    return static_cast<uint64_t>(std::llround(ratio * n_params));
}

EpochEstimate epochs_required(double target_tokens, double unique_tokens) {
    if (!(target_tokens > 0.0)) throw DomainError("epochs_required: target_tokens must be positive");
    if (!(unique_tokens > 0.0)) throw DomainError("epochs_required: unique_tokens must be positive");
    EpochEstimate e;
    e.epochs = target_tokens / unique_tokens;
    e.warning = e.epochs > 4.0;
    return e;
}

PlanReport make_plan(double n_params, double unique_tokens, double ratio,
                     const ScalingConstants& constants) {
    PlanReport r;
    r.n_params = static_cast<uint64_t>(std::llround(n_params));
    r.optimal_tokens = optimal_tokens(n_params, ratio);
    double d = static_cast<double>(r.optimal_tokens);
    r.predicted_loss = predict_loss(n_params, d, constants);
    r.estimated_flops = 6.0 * n_params * d;
    if (unique_tokens > 0.0) {
        EpochEstimate e = epochs_required(d, unique_tokens);
        r.epochs = e.epochs;
        r.epoch_warning = e.warning;
    }
    return r;
}

std::string PlanReport::human_text() const {
    std::ostringstream os;
    os << "Compute plan\n";
    os << "  parameters:       " << n_params << "\n";
    os << "  optimal tokens:   " << optimal_tokens << "\n";
    os << "  predicted loss:   " << predicted_loss << " nats\n";
    os << "  estimated FLOPs:  " << estimated_flops << "\n";
    if (epochs > 0.0) {
        os << "  epochs over data: " << epochs;
        if (epoch_warning)
            os << "  (WARNING: more than 4 epochs of repeated data; "
                  "returns diminish beyond this point)";
        os << "\n";
    }
    return os.str();
}

std::string PlanReport::machine_text() const {
    std::ostringstream os;
    os << "n_params=" << n_params << "\n";
    os << "optimal_tokens=" << optimal_tokens << "\n";
    os << "predicted_loss=" << predicted_loss << "\n";
    os << "estimated_flops=" << estimated_flops << "\n";
    if (epochs > 0.0) {
        os << "epochs=" << epochs << "\n";
        os << "epoch_warning=" << (epoch_warning ? 1 : 0) << "\n";
    }
    return os.str();
}

} // namespace ttl
