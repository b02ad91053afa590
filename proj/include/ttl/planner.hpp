// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

namespace ttl {

// Fitted coefficients of the parametric loss surface
// L(N, D) = A / N^alpha + B / D^beta + E.
struct ScalingConstants {
    double A = 406.4;
    double B = 410.7;
    double E = 1.69;     // irreducible loss, nats
    double alpha = 0.32; // model-size exponent
    double beta = 0.28;  // data-size exponent

    void validate() const;
};

struct PlanReport {
    uint64_t n_params = 0;
    uint64_t optimal_tokens = 0;
    double predicted_loss = 0.0; // nats, at (n_params, optimal_tokens)
    double epochs = 0.0;         // optimal_tokens / unique_tokens, 0 if unknown
    bool epoch_warning = false;  // epochs > 4
    double estimated_flops = 0.0; // 6 * N * D

    std::string human_text() const;
    std::string machine_text() const; // key=value lines
};

// Predicted language-modeling loss in nats for a model of n_params
// parameters trained on n_tokens tokens.
double predict_loss(double n_params, double n_tokens,
                    const ScalingConstants& constants = {});

// Token budget at the compute-optimal ratio (default 20 tokens/parameter),
// rounded to the nearest integer.
uint64_t optimal_tokens(double n_params, double ratio = 20.0);

struct EpochEstimate {
    double epochs = 0.0;
    bool warning = false; // set iff epochs > 4
};

// How many passes over unique_tokens are needed to reach target_tokens.
// Past 4 epochs repeated data stops paying for itself, hence the warning.
EpochEstimate epochs_required(double target_tokens, double unique_tokens);

// Full sizing report for one model. unique_tokens == 0 means "unknown
// corpus size": the epoch columns are left unset.
PlanReport make_plan(double n_params, double unique_tokens = 0.0,
                     double ratio = 20.0, const ScalingConstants& constants = {});

} // namespace ttl
