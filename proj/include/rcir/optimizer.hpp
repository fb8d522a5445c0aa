#pragma once

#include "rcir/matrix.hpp"

namespace rcir {

enum class OptimizerKind { kSgd, kAdam };

// p <- p - lr * g elementwise. Rejects non-finite gradients.
void sgd_step(Vec& params, const Vec& grads, double learning_rate);

// Adaptive-moment variant with decoupled weight decay (standard constants).
struct AdamState {
    Vec m;
    Vec v;
    long t = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

void adam_step(Vec& params, const Vec& grads, double learning_rate, AdamState& state,
               double weight_decay = 0.0);

}  // namespace rcir
