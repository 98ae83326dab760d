#pragma once

#include <vector>

#include <Eigen/Dense>

#include "unmix/stats.hpp"
#include "unmix/types.hpp"

namespace unmix {

struct WhiteningResult {
  Eigen::MatrixXcd whitener;    // W with W * R * W' = I
  Eigen::MatrixXcd covariance;  // the R it whitens
};

// Whitening from the eigendecomposition R = E diag(l) E'; eigenvalues below
// rank_eps times the largest raise RankError. Eigenvalues are taken in
// descending order and eigenvector phases are fixed so the result is
// deterministic (identity covariance maps to the identity whitener).
WhiteningResult whiten(const Eigen::MatrixXcd& covariance, double rank_eps = 1e-12);

// Cumulants of Z = M*y from the cumulants of y, using multilinearity: one
// factor of M per plain index and conj(M) per conjugated index. The covariance
// becomes M * R * M'.
CumulantSet transform_cumulants(const CumulantSet& c, const Eigen::Matrix2cd& m);

// The n^2 Hermitian matrices spanning the cumulant matrix set of whitened
// 2-channel data. Off-diagonal basis choices are paired into Hermitian
// combinations B + B' and J*(B - B').
std::vector<Eigen::Matrix2cd> cumulant_matrices(const CumulantSet& whitened);

struct JointDiagResult {
  Eigen::MatrixXcd rotation;  // unitary U maximizing the summed diagonal energy
  double off_diag_norm = 0.0;
  int sweeps = 0;
  bool converged = true;
  std::vector<double> objective_per_sweep;
};

// Joint approximate diagonalization of Hermitian matrices by closed-form
// complex Givens rotations. Stops when every rotation sine magnitude in a
// sweep falls below min_rotation, or after max_sweeps (then converged=false).
// A unitary initial_rotation seeds the sweeps; successive calls on slowly
// varying matrix sets then stay on one solution branch.
JointDiagResult joint_diagonalize(const std::vector<Eigen::MatrixXcd>& matrices,
                                  double min_rotation = 1e-12, int max_sweeps = 100,
                                  const Eigen::MatrixXcd* initial_rotation = nullptr);

struct MixingEstimate {
  Eigen::Matrix2cd mixing;    // H = W^{-1} * U
  Eigen::Matrix2cd rotation;  // U
  Eigen::Matrix2cd whitener;  // W
  double off_diag_norm = 0.0;
  int sweeps = 0;
  bool converged = true;
  // All cumulant matrices nearly vanished: fewer than n-1 kurtic sources, so
  // the rotation is poorly determined.
  bool weak_identifiability = false;
};

// Whiten, transform the raw cumulants to the whitened coordinates, and
// jointly diagonalize. Propagates RankError from whitening. A previous
// window's mixing estimate can seed the rotation so sliding-window estimates
// deform continuously instead of re-rolling sign/order noise.
MixingEstimate estimate_mixing(const CumulantSet& c, const Eigen::Matrix2cd& covariance,
                               const Eigen::Matrix2cd* previous_mixing = nullptr);

}  // namespace unmix
