#include "rpnr/training.hpp"

#include "strings.hpp"

namespace rpnr {

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument(detail::cat("epochs must be >= 1, got ", epochs));
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw std::invalid_argument("validation_fraction must lie in (0,1)");
  }
}

}  // namespace rpnr
