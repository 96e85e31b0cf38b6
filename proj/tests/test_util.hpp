#ifndef PIXELDIFF_TEST_UTIL_HPP
#define PIXELDIFF_TEST_UTIL_HPP

#include <functional>
#include <utility>
#include <vector>

#include "pixeldiff/autograd.hpp"

namespace pxd::test {

using DGraph = GraphT<double>;
using DVar = ag::Var<double>;
using DTensor = TensorT<double>;

// Central-difference gradient check. build() must construct the whole forward
// from the given graph, register each tensor in `params` via g.param(), and
// return (scalar loss, param vars in the same order).
inline double max_grad_rel_err(std::vector<DTensor*> params,
                               const std::function<std::pair<DVar, std::vector<DVar>>(DGraph&)>& build,
                               double eps = 1e-5) {
    DGraph g;
    auto [loss, vars] = build(g);
    g.backward(loss);
    std::vector<DTensor> analytic;
    double gmax = 0;
    for (auto v : vars) {
        analytic.push_back(g.grad(v.id).clone());
        for (int64_t i = 0; i < analytic.back().numel(); i++)
            gmax = std::max(gmax, std::fabs(analytic.back().at(i)));
    }
    // near-zero entries are compared at the overall gradient scale; a pure
    // relative metric would amplify finite-difference noise without bound
    double floor = 1e-4 * std::max(gmax, 1e-8);

    auto eval = [&]() {
        DGraph g2;
        auto [l2, unused] = build(g2);
        (void)unused;
        return l2.val().at(0);
    };

    double worst = 0;
    for (size_t pi = 0; pi < params.size(); pi++) {
        DTensor& p = *params[pi];
        for (int64_t i = 0; i < p.numel(); i++) {
            double orig = p.at(i);
            p.at(i) = orig + eps;
            double fp = eval();
            p.at(i) = orig - eps;
            double fm = eval();
            p.at(i) = orig;
            double num = (fp - fm) / (2 * eps);
            double ana = analytic[pi].at(i);
            double denom = std::max({std::fabs(num), std::fabs(ana), floor});
            worst = std::max(worst, std::fabs(num - ana) / denom);
        }
    }
    return worst;
}

inline DTensor dt_randn(std::vector<int> shape, uint64_t seed, double std = 1.0) {
    Rng r(seed);
    return randn<double>(std::move(shape), r, std);
}

}  // namespace pxd::test

#endif
