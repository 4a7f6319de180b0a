#pragma once

#include <vector>

namespace ccd::assets {

// Photovoltaic conversion: radiation * area * efficiency, capped at `cap_kw`.
// Inputs must be unit-consistent with the kW output (irradiance in kW/m^2 for
// an area in m^2). Negative inputs or efficiency > 1 throw.
double pv_power(double radiation, double area_m2, double efficiency, double cap_kw = 50.0);

// Wind turbine output in kW from SI inputs: 0.5 * rho * A * C * V^3 / 1000.
// Returns the raw cubic-law value; operating-range clamping is the caller's
// concern (profile sampling clamps to its configured range).
double wind_power(double air_density, double swept_area_m2, double power_coeff,
                  double wind_speed_m_s);

// One-step indoor temperature update for an inverter HVAC:
//   T = inertia*T_prev + (1-inertia)*(T_out - (cop/conductivity)*P)
// conductivity in kW/degC; throws if conductivity <= 0 or inertia outside [0,1].
double hvac_indoor_temp_step(double t_prev_c, double t_out_c, double p_hvac_kw,
                             double inertia, double cop, double conductivity_kw_c);

// Single-step HVAC power range keeping the next indoor temperature inside
// [t_min, t_max], intersected with [0, p_max]. Empty intersection collapses
// to [lo, lo].
struct PowerRange {
    double lo;
    double hi;
};
PowerRange hvac_power_range(double t_prev_c, double t_out_c, double t_min_c,
                            double t_max_c, double inertia, double cop,
                            double conductivity_kw_c, double p_max_kw);

// Storage state-of-charge update:
//   soc + (p_charge*eta_c - p_discharge/eta_d)*dt / capacity
double ess_soc_step(double soc, double p_charge_kw, double p_discharge_kw, double eta_c,
                    double eta_d, double dt_h, double capacity_kwh);

// Largest single-step charging power keeping SoC at or below soc_max,
// intersected with [0, p_max].
PowerRange ess_charge_range(double soc, double soc_max, double eta_c, double dt_h,
                            double capacity_kwh, double p_max_kw);

// True iff every entry lies in [p_min, p_max] and the summed charging power
// covers the required energy (unit time steps).
bool pev_energy_feasible(const std::vector<double>& p_pev_kw, double p_min_kw,
                         double p_max_kw, double e_req_kwh);

}  // namespace ccd::assets
