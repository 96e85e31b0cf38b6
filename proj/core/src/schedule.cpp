#include "pixeldiff/schedule.hpp"

#include <cmath>
#include <stdexcept>

namespace pxd {

double shift_for_resolution(int d, const std::string& log_base) {
    if (d <= 0) throw std::invalid_argument("shift_for_resolution: d must be >= 1");
    double r = 64.0 / (double)d;
    if (log_base == "10") return 2.0 * std::log10(r);
    return 2.0 * std::log(r);
}

double logsnr(const NoiseSchedule& s, double t) {
    double tc = std::min(std::max(t, s.t_min), s.t_max);
    return -2.0 * std::log(std::tan(M_PI * tc / 2.0)) + s.shift;
}

AlphaSigma alpha_sigma(double lambda) {
    // sqrt(sigmoid(+-lambda)), computed stably for large |lambda|
    auto sigmoid = [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        double e = std::exp(x);
        return e / (1.0 + e);
    };
    return AlphaSigma{std::sqrt(sigmoid(lambda)), std::sqrt(sigmoid(-lambda))};
}

}  // namespace pxd
