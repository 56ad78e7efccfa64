#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <string>

#include "sgn/autodiff.hpp"

namespace sgn::testing {

// Central finite differences against tape gradients. `build` must construct
// a 1x1 loss from the bound parameters; it is re-run with perturbed entries
// for the numeric side. Samples up to `per_tensor` entries of each tensor.
inline double fd_max_rel_err(
    ad::ParamStore& params,
    const std::function<ad::Var(ad::Tape&, ad::ParamBinding&)>& build,
    double h = 1e-5, int per_tensor = 6) {
    ad::Tape tape;
    ad::ParamBinding bind(tape, params);
    ad::Var loss = build(tape, bind);
    tape.backward(loss);
    std::map<std::string, ad::Matrix> grads;
    bind.collect_grads(grads);

    auto eval = [&]() {
        ad::Tape t2;
        ad::ParamBinding b2(t2, params);
        return t2.val(build(t2, b2))(0, 0);
    };

    double worst = 0.0;
    for (auto& [name, g] : grads) {
        ad::Matrix& w = params.at(name);
        long n = w.size();
        long step = std::max<long>(1, n / per_tensor);
        for (long k = 0; k < n; k += step) {
            double orig = w.data()[k];
            w.data()[k] = orig + h;
            double up = eval();
            w.data()[k] = orig - h;
            double down = eval();
            w.data()[k] = orig;
            double fd = (up - down) / (2.0 * h);
            double an = g.data()[k];
            if (std::abs(fd) < 1e-8 && std::abs(an) < 1e-8) continue;
            double rel = std::abs(fd - an) /
                         std::max({std::abs(fd), std::abs(an), 1e-4});
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

}  // namespace sgn::testing
