// Copyright 2026 The EMaaS Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace emaas {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using VectorXd = Vector<double>;
using MatrixXd = Matrix<double>;

/// Raised when a caller breaks an operation's precondition (dimension
/// mismatch, non-positive duration, non-finite input). State passed by const
/// reference is never modified when this is thrown.
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Recursive least-squares state for an affine regressor.
///
/// `weights` has the intercept first. `covariance` is the running inverse of
/// the (forgetting-weighted, ridge-seeded) information matrix; it starts at
/// `initial_covariance * I`, so the online solution equals the batch
/// least-squares fit up to a ridge term of 1 / initial_covariance.
template <typename Scalar>
struct RlsState {
  Vector<Scalar> weights;
  Matrix<Scalar> covariance;
  std::uint64_t samples = 0;
  Scalar forgetting = Scalar(1);
};

template <typename Scalar>
RlsState<Scalar> make_rls(Eigen::Index dim, Scalar initial_covariance,
                          Scalar forgetting) {
  if (dim <= 0) throw ContractViolation("rls dimension must be positive");
  if (!(initial_covariance > Scalar(0)))
    throw ContractViolation("rls initial covariance must be positive");
  if (!(forgetting > Scalar(0) && forgetting <= Scalar(1)))
    throw ContractViolation("rls forgetting factor must lie in (0, 1]");
  RlsState<Scalar> state;
  state.weights = Vector<Scalar>::Zero(dim);
  state.covariance = Matrix<Scalar>::Identity(dim, dim) * initial_covariance;
  state.forgetting = forgetting;
  return state;
}

/// Builds the affine regressor [1, x].
template <typename Derived>
Vector<typename Derived::Scalar> affine_regressor(
    const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  Vector<Scalar> phi(x.size() + 1);
  phi(0) = Scalar(1);
  phi.tail(x.size()) = x;
  return phi;
}

/// w . [1, x] without materialising the regressor.
template <typename Scalar, typename Derived>
Scalar affine_predict(const Vector<Scalar>& weights,
                      const Eigen::MatrixBase<Derived>& x) {
  if (weights.size() != x.size() + 1)
    throw ContractViolation("feature dimension " + std::to_string(x.size()) +
                            " does not match model dimension " +
                            std::to_string(weights.size() - 1));
  return weights(0) + weights.tail(x.size()).dot(x);
}

/// One exponentially-weighted RLS step on regressor `phi` and target `y`.
/// Returns the new state; `state` is left untouched, including on error.
template <typename Scalar, typename Derived>
RlsState<Scalar> rls_update(const RlsState<Scalar>& state,
                            const Eigen::MatrixBase<Derived>& phi, Scalar y) {
  if (phi.size() != state.weights.size())
    throw ContractViolation("regressor dimension mismatch");
  if (!std::isfinite(y) || !phi.allFinite())
    throw ContractViolation("rls update rejected: non-finite input");

  const Vector<Scalar> p_phi = state.covariance * phi;
  const Scalar denom = state.forgetting + phi.dot(p_phi);
  const Vector<Scalar> gain = p_phi / denom;
  const Scalar residual = y - state.weights.dot(phi);

  RlsState<Scalar> next;
  next.forgetting = state.forgetting;
  next.samples = state.samples + 1;
  next.weights = state.weights + gain * residual;
  next.covariance =
      (state.covariance - gain * p_phi.transpose()) / state.forgetting;
  // Rounding drifts P off symmetry; project back.
  next.covariance = (0.5 * (next.covariance + next.covariance.transpose())).eval();

  if (!next.weights.allFinite() || !next.covariance.allFinite())
    throw ContractViolation("rls update rejected: state became non-finite");
  return next;
}

}  // namespace emaas
