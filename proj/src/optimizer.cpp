#include "rcir/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace rcir {

namespace {

void require_finite_grads(const Vec& params, const Vec& grads) {
    if (params.size() != grads.size())
        throw std::invalid_argument("optimizer: parameter/gradient size mismatch");
    for (double g : grads)
        if (!std::isfinite(g))
            throw std::invalid_argument("optimizer: non-finite gradient");
}

}  // namespace

void sgd_step(Vec& params, const Vec& grads, double learning_rate) {
    require_finite_grads(params, grads);
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= learning_rate * grads[i];
}

void adam_step(Vec& params, const Vec& grads, double learning_rate, AdamState& state,
               double weight_decay) {
    require_finite_grads(params, grads);
    if (state.m.empty()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
    }
    if (state.m.size() != params.size())
        throw std::invalid_argument("adam_step: state size mismatch");
    ++state.t;
    const double bc1 = 1.0 - std::pow(state.beta1, state.t);
    const double bc2 = 1.0 - std::pow(state.beta2, state.t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        params[i] -= learning_rate * (mhat / (std::sqrt(vhat) + state.eps) +
                                      weight_decay * params[i]);
    }
}

}  // namespace rcir
