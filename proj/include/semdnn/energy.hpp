#pragma once
#include <stdexcept>
#include <string>

#include "semdnn/ops.hpp"

namespace semdnn {

// Per-operation energies in pJ. Defaults of zero force explicit calibration;
// see calibrate_constants.
struct EnergyConstants {
  double pj_cim_mac = 0.0;
  double pj_cam_compare = 0.0;
  double pj_cim_adc = 0.0;
  double pj_cam_adc = 0.0;
  double pj_digital = 0.0;
  double pj_sort = 0.0;
  // reference-processor baseline, calibrated separately for the static and
  // dynamic totals so both published endpoints reproduce exactly
  double pj_baseline_static_mac = 0.0;
  double pj_baseline_dynamic_mac = 0.0;

  void validate() const {
    const double vals[] = {pj_cim_mac, pj_cam_compare, pj_cim_adc, pj_cam_adc,
                           pj_digital, pj_sort, pj_baseline_static_mac,
                           pj_baseline_dynamic_mac};
    for (double v : vals)
      if (v < 0) throw std::invalid_argument("EnergyConstants: negative constant");
  }
};

// Published component totals for a 100-sample reference run. Order:
// CIM memristor, CAM memristor, CIM ADC, CAM ADC, digital act/pool, sorting.
struct ReferenceTotals {
  double cim_mac_pj = 1.21e4;
  double cam_compare_pj = 77.1;
  double cim_adc_pj = 1.57e6;
  double cam_adc_pj = 4.55e4;
  double digital_pj = 3.73e5;
  double sort_pj = 6.63e4;
  double baseline_static_pj = 1.83e7;
  double baseline_dynamic_pj = 9.19e6;
};

struct EnergyReport {
  // component totals, pJ
  double cim_mac = 0, cam_compare = 0, cim_adc = 0, cam_adc = 0, digital = 0, sort = 0;
  double total = 0;
  double baseline_static = 0, baseline_dynamic = 0;
  double reduction_vs_static = 0;   // 1 - total / baseline_static
  double reduction_vs_dynamic = 0;  // 1 - total / baseline_dynamic
};

// Category totals = event count x per-op constant.
inline EnergyReport accumulate(const OpCounts& dynamic_ops, long long dynamic_macs,
                               long long static_macs, const EnergyConstants& k) {
  k.validate();
  EnergyReport r;
  r.cim_mac = dynamic_ops.cim_mac * k.pj_cim_mac;
  r.cam_compare = dynamic_ops.cam_compare * k.pj_cam_compare;
  r.cim_adc = dynamic_ops.cim_adc * k.pj_cim_adc;
  r.cam_adc = dynamic_ops.cam_adc * k.pj_cam_adc;
  r.digital = dynamic_ops.digital * k.pj_digital;
  r.sort = dynamic_ops.sort * k.pj_sort;
  r.total = r.cim_mac + r.cam_compare + r.cim_adc + r.cam_adc + r.digital + r.sort;
  r.baseline_static = static_macs * k.pj_baseline_static_mac;
  r.baseline_dynamic = dynamic_macs * k.pj_baseline_dynamic_mac;
  if (r.baseline_static > 0) r.reduction_vs_static = 1.0 - r.total / r.baseline_static;
  if (r.baseline_dynamic > 0) r.reduction_vs_dynamic = 1.0 - r.total / r.baseline_dynamic;
  return r;
}

// Back-derive per-op constants from the published totals and a completed
// reference trace. This is calibration to the published breakdown, not an
// independent measurement; reports carry that label.
inline EnergyConstants calibrate_constants(const OpCounts& ref_ops, long long ref_dynamic_macs,
                                           long long ref_static_macs,
                                           const ReferenceTotals& totals = {}) {
  auto div = [](double pj, long long count, const char* what) {
    if (count <= 0)
      throw std::runtime_error(std::string("calibrate_constants: zero op count for ") + what);
    return pj / static_cast<double>(count);
  };
  EnergyConstants k;
  k.pj_cim_mac = div(totals.cim_mac_pj, ref_ops.cim_mac, "cim_mac");
  k.pj_cam_compare = div(totals.cam_compare_pj, ref_ops.cam_compare, "cam_compare");
  k.pj_cim_adc = div(totals.cim_adc_pj, ref_ops.cim_adc, "cim_adc");
  k.pj_cam_adc = div(totals.cam_adc_pj, ref_ops.cam_adc, "cam_adc");
  k.pj_digital = div(totals.digital_pj, ref_ops.digital, "digital");
  k.pj_sort = div(totals.sort_pj, ref_ops.sort, "sort");
  k.pj_baseline_static_mac =
      div(totals.baseline_static_pj, ref_static_macs, "baseline static MACs");
  k.pj_baseline_dynamic_mac =
      div(totals.baseline_dynamic_pj, ref_dynamic_macs, "baseline dynamic MACs");
  return k;
}

}  // namespace semdnn
