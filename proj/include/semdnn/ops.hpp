#pragma once

namespace semdnn {

// Operation counts by energy category, accumulated along an inference path.
struct OpCounts {
  long long cim_mac = 0;      // analog multiply-accumulates in the conv arrays
  long long cim_adc = 0;      // column conversions after conv MVMs
  long long cam_compare = 0;  // CAM cell comparisons (n_classes * dim per search)
  long long cam_adc = 0;      // match-line conversions (n_classes per search)
  long long digital = 0;      // activation / pooling / partial-sum adds
  long long sort = 0;         // argmax scan over per-class confidences
  long long adc_saturations = 0;

  OpCounts& operator+=(const OpCounts& o) {
    cim_mac += o.cim_mac;
    cim_adc += o.cim_adc;
    cam_compare += o.cam_compare;
    cam_adc += o.cam_adc;
    digital += o.digital;
    sort += o.sort;
    adc_saturations += o.adc_saturations;
    return *this;
  }
};

}  // namespace semdnn
