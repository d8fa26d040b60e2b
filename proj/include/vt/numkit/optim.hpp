#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "vt/numkit/tensor.hpp"

namespace vt::numkit {

// Piecewise-constant decay: lr(epoch) = start_lr * gamma^(#milestones <= epoch).
// Computed by repeated multiplication so the decayed values land on the same
// doubles every call.
struct LrSchedule {
    double start_lr = 0.001;
    std::vector<int> milestones;  // sorted epoch indices
    double gamma = 0.1;
};

inline void validate(const LrSchedule& s) {
    if (s.start_lr <= 0.0) throw ValueError("LrSchedule: start_lr must be > 0");
    if (!(s.gamma > 0.0 && s.gamma < 1.0)) throw ValueError("LrSchedule: gamma must be in (0,1)");
    if (!std::is_sorted(s.milestones.begin(), s.milestones.end())) {
        throw ValueError("LrSchedule: milestones must be sorted");
    }
}

inline double lr_at(const LrSchedule& s, int epoch) {
    if (epoch < 0) throw ValueError("lr_at: epoch must be >= 0");
    double lr = s.start_lr;
    for (int m : s.milestones) {
        if (m <= epoch) lr *= s.gamma;
    }
    return lr;
}

// p <- p - lr * g for every parameter, then gradients are zeroed.
template <class T>
void sgd_step(std::vector<Tensor<T>>& params, double lr) {
    if (lr <= 0.0) throw ValueError("sgd_step: lr must be > 0");
    for (auto& p : params) {
        if (!p.has_grad()) {
            throw StateError("sgd_step: parameter " + shape_str(p.shape()) + " has no gradient");
        }
    }
    const T lrv = static_cast<T>(lr);
    for (auto& p : params) {
        auto& v = p.data();
        auto& g = p.grad();
        for (std::size_t i = 0; i < v.size(); ++i) v[i] -= lrv * g[i];
        p.zero_grad();
    }
}

}  // namespace vt::numkit
