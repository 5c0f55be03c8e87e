#include "cloudtomo/core/grid.hpp"

#include <cmath>

namespace cloudtomo {

void LwcGrid::validate() const {
  require(rho.size() == spec.num_voxels(), ErrorCode::invalid_argument,
          "LwcGrid payload size does not match spec dims");
  for (double v : rho)
    require(std::isfinite(v) && v >= 0.0, ErrorCode::invalid_argument,
            "LwcGrid values must be finite and nonnegative");
}

}  // namespace cloudtomo
