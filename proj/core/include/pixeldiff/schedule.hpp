#ifndef PIXELDIFF_SCHEDULE_HPP
#define PIXELDIFF_SCHEDULE_HPP

#include <string>

#include "pixeldiff/tensor.hpp"

namespace pxd {

// Shifted-cosine logSNR schedule. The shift is a plain additive offset in
// logSNR units; resolution adaptation enters only through it.
struct NoiseSchedule {
    std::string kind = "shifted-cosine";
    double shift = 0.0;
    double t_min = 1e-4;
    double t_max = 1.0 - 1e-4;
    // escape hatch: "e" (default) or "10"; changes shift_for_resolution only
    std::string shift_log_base = "e";
};

struct AlphaSigma {
    double alpha;
    double sigma;
};

// 2*log(64/d) in the schedule's log base (natural by default)
double shift_for_resolution(int d, const std::string& log_base = "e");

// lambda(t) = -2*ln(tan(pi*t/2)) + shift, t clipped to [t_min, t_max]
double logsnr(const NoiseSchedule& s, double t);

// variance preserving: alpha^2 + sigma^2 = 1
AlphaSigma alpha_sigma(double lambda);

// z_t = alpha * x + sigma * eps
template <typename T>
TensorT<T> forward_diffuse(const TensorT<T>& x, double t, const TensorT<T>& eps,
                           const NoiseSchedule& s) {
    if (!x.same_shape(eps)) throw std::invalid_argument("forward_diffuse: x/eps shape mismatch");
    AlphaSigma as = alpha_sigma(logsnr(s, t));
    TensorT<T> z(x.shape);
    for (int64_t i = 0; i < z.numel(); i++)
        z.at(i) = (T)(as.alpha * (double)x.at(i) + as.sigma * (double)eps.at(i));
    return z;
}

}  // namespace pxd

#endif
