#include "ccd/assets.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ccd::assets {

double pv_power(double radiation, double area_m2, double efficiency, double cap_kw) {
    if (radiation < 0.0 || area_m2 < 0.0 || efficiency < 0.0)
        throw std::invalid_argument("pv_power: negative input");
    if (efficiency > 1.0) throw std::invalid_argument("pv_power: efficiency > 1");
    return std::min(radiation * area_m2 * efficiency, cap_kw);
}

double wind_power(double air_density, double swept_area_m2, double power_coeff,
                  double wind_speed_m_s) {
    if (air_density < 0.0 || swept_area_m2 < 0.0 || power_coeff < 0.0 ||
        wind_speed_m_s < 0.0)
        throw std::invalid_argument("wind_power: negative input");
    const double v3 = wind_speed_m_s * wind_speed_m_s * wind_speed_m_s;
    return 0.5 * air_density * swept_area_m2 * power_coeff * v3 / 1000.0;
}

double hvac_indoor_temp_step(double t_prev_c, double t_out_c, double p_hvac_kw,
                             double inertia, double cop, double conductivity_kw_c) {
    if (inertia < 0.0 || inertia > 1.0)
        throw std::invalid_argument("hvac_indoor_temp_step: inertia outside [0,1]");
    if (conductivity_kw_c <= 0.0)
        throw std::invalid_argument("hvac_indoor_temp_step: conductivity must be > 0");
    return inertia * t_prev_c +
           (1.0 - inertia) * (t_out_c - (cop / conductivity_kw_c) * p_hvac_kw);
}

PowerRange hvac_power_range(double t_prev_c, double t_out_c, double t_min_c,
                            double t_max_c, double inertia, double cop,
                            double conductivity_kw_c, double p_max_kw) {
    if (conductivity_kw_c <= 0.0 || cop <= 0.0)
        throw std::invalid_argument("hvac_power_range: cop and conductivity must be > 0");
    if (inertia >= 1.0) {
        // temperature insensitive to power; any admissible power works
        return {0.0, p_max_kw};
    }
    // Invert the temperature step: higher cooling power gives lower T, so the
    // comfort band [t_min, t_max] maps to [P(t_max), P(t_min)].
    const auto power_for = [&](double t) {
        return (t_out_c - (t - inertia * t_prev_c) / (1.0 - inertia)) *
               (conductivity_kw_c / cop);
    };
    double lo = std::max(0.0, power_for(t_max_c));
    double hi = std::min(p_max_kw, power_for(t_min_c));
    if (hi < lo) hi = lo;
    return {lo, hi};
}

double ess_soc_step(double soc, double p_charge_kw, double p_discharge_kw, double eta_c,
                    double eta_d, double dt_h, double capacity_kwh) {
    if (capacity_kwh <= 0.0) throw std::invalid_argument("ess_soc_step: capacity must be > 0");
    if (eta_c <= 0.0 || eta_c > 1.0 || eta_d <= 0.0 || eta_d > 1.0)
        throw std::invalid_argument("ess_soc_step: efficiencies must lie in (0,1]");
    if (p_charge_kw < 0.0 || p_discharge_kw < 0.0)
        throw std::invalid_argument("ess_soc_step: negative power");
    return soc + (p_charge_kw * eta_c - p_discharge_kw / eta_d) * dt_h / capacity_kwh;
}

PowerRange ess_charge_range(double soc, double soc_max, double eta_c, double dt_h,
                            double capacity_kwh, double p_max_kw) {
    if (capacity_kwh <= 0.0 || dt_h <= 0.0 || eta_c <= 0.0)
        throw std::invalid_argument("ess_charge_range: bad parameters");
    const double headroom = std::max(0.0, soc_max - soc) * capacity_kwh / (eta_c * dt_h);
    return {0.0, std::min(p_max_kw, headroom)};
}

bool pev_energy_feasible(const std::vector<double>& p_pev_kw, double p_min_kw,
                         double p_max_kw, double e_req_kwh) {
    if (p_min_kw > p_max_kw)
        throw std::invalid_argument("pev_energy_feasible: p_min > p_max");
    double total = 0.0;
    for (double p : p_pev_kw) {
        if (p < p_min_kw || p > p_max_kw) return false;
        total += p;
    }
    return total >= e_req_kwh;
}

}  // namespace ccd::assets
