#pragma once

#include <vector>

#include "dvs/core/dataset.hpp"

namespace dvs {

struct CharacterizationReport {
  double global_dispersion = 0.0;
  double dimensional_dispersion = 0.0;
  double global_entropy = 0.0;    // bits per byte
  double columnar_entropy = 0.0;  // bits per byte
  std::vector<double> per_dimension_stddev;
  std::vector<double> per_byte_entropy;
};

/// Value dispersion and byte entropy of a dataset: the global figures span
/// every value (or byte), the dimensional/columnar figures average per
/// dimension (or byte position).
CharacterizationReport characterize(const Dataset& dataset);

}  // namespace dvs
