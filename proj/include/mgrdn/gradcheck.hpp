#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mgrdn/mask_conv.hpp"

namespace mgr {

/// One layer checked against central differences in double precision.
struct GradcheckCase {
  ConvKind kind = ConvKind::vanilla;
  int config = 0;
  std::string shape;    // human-readable layer and input description
  double params = 0.0;  // max relative error over all parameter entries
  double feature = 0.0;
  double mask = 0.0;    // 0 when the layer routes no mask gradient
  int redraws = 0;      // inputs rejected for sitting near a kink
  double worst() const;
};

struct GradcheckOptions {
  int configs = 20;
  std::uint64_t seed = 0;
  double eps = 1e-5;
  double tolerance = 1e-5;
  /// Configurations whose leaky/ReLU pre-activations come closer than this
  /// to 0 are redrawn (10x this for the x^0.8 mask power, whose curvature
  /// near 0 also biases central differences).
  double kink_margin = 1e-3;
};

struct GradcheckReport {
  std::vector<GradcheckCase> cases;
  double tolerance = 0.0;
  double seconds = 0.0;
  double worst() const;
  bool passed() const { return worst() < tolerance; }
};

/// For each random configuration, builds every layer kind with those
/// channel counts, kernel and input size, and compares analytic gradients of
/// a random linear objective over the outputs with central differences.
GradcheckReport run_gradcheck(const GradcheckOptions& options);

}  // namespace mgr
