#pragma once

#include <Eigen/Dense>
#include <stdexcept>

#include "vrank/core.hpp"

namespace vrank {

inline int feature_dim(int catalog_size) { return 2 * catalog_size; }

/**
 * Fixed (non-learned) state representation: a decay-weighted bag of the
 * history items concatenated with a one-hot of the most recent item. The
 * most recent click has bag weight 1, the one before `decay`, and so on;
 * the empty history maps to the zero vector.
 */
inline Eigen::VectorXd featurize(const SessionState& state, int catalog_size, double decay) {
  if (decay < 0.0 || decay >= 1.0) {
    throw std::invalid_argument("featurize: decay outside [0, 1)");
  }
  Eigen::VectorXd phi = Eigen::VectorXd::Zero(feature_dim(catalog_size));
  const int len = static_cast<int>(state.history.size());
  double weight = 1.0;
  for (int k = len - 1; k >= 0; --k) {
    const ItemId item = state.history[k];
    if (item < 0 || item >= catalog_size) {
      throw std::out_of_range("featurize: item id outside catalog");
    }
    phi[item] += weight;
    weight *= decay;
  }
  if (len > 0) {
    phi[catalog_size + state.history.back()] = 1.0;
  }
  return phi;
}

}  // namespace vrank
