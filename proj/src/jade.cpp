#include "unmix/jade.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace unmix {

namespace {

// Rotate every column so its largest-magnitude entry is real positive; makes
// unitary factors deterministic for tests and downstream code.
void fix_column_phases(Eigen::MatrixXcd& m) {
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    Eigen::Index best = 0;
    double best_mag = -1.0;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      const double mag = std::abs(m(r, c));
      if (mag > best_mag) {
        best_mag = mag;
        best = r;
      }
    }
    if (best_mag > 0.0) m.col(c) *= std::conj(m(best, c)) / best_mag;
  }
}

double sum_diag_sq(const std::vector<Eigen::MatrixXcd>& mats) {
  double acc = 0.0;
  for (const auto& m : mats)
    for (Eigen::Index i = 0; i < m.rows(); ++i) acc += std::norm(m(i, i));
  return acc;
}

}  // namespace

WhiteningResult whiten(const Eigen::MatrixXcd& covariance, double rank_eps) {
  if (covariance.rows() == 0 || covariance.rows() != covariance.cols())
    throw std::invalid_argument("covariance must be square and non-empty");
  const Eigen::Index n = covariance.rows();
  const Eigen::MatrixXcd herm = 0.5 * (covariance + covariance.adjoint());

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(herm);
  if (es.info() != Eigen::Success) throw std::runtime_error("eigendecomposition failed");
  const Eigen::VectorXd evals = es.eigenvalues();
  const double lmax = evals.maxCoeff();
  if (!(lmax > 0.0)) throw RankError("covariance has no positive eigenvalue");
  for (Eigen::Index i = 0; i < n; ++i)
    if (evals(i) < rank_eps * lmax)
      throw RankError("covariance is rank deficient: eigenvalue " + std::to_string(evals(i)) +
                      " below " + std::to_string(rank_eps * lmax));

  // descending eigenvalue order, stable under ties
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return evals(a) > evals(b); });

  Eigen::MatrixXcd basis(n, n);
  Eigen::VectorXd sorted(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    basis.col(i) = es.eigenvectors().col(order[static_cast<std::size_t>(i)]);
    sorted(i) = evals(order[static_cast<std::size_t>(i)]);
  }
  fix_column_phases(basis);

  WhiteningResult out;
  out.covariance = herm;
  out.whitener = sorted.cwiseSqrt().cwiseInverse().asDiagonal() * basis.adjoint();
  return out;
}

CumulantSet transform_cumulants(const CumulantSet& c, const Eigen::Matrix2cd& m) {
  CumulantSet out;
  out.sample_count = c.sample_count;
  out.covariance = m * c.covariance * m.adjoint();
  // one factor of m per plain index, conj(m) per conjugated index
  auto transformed = [&](int p, int q, int r, int s) {
    cplx acc = 0.0;
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b)
        for (int cc = 0; cc < 2; ++cc)
          for (int d = 0; d < 2; ++d)
            acc += m(p, a) * std::conj(m(q, b)) * std::conj(m(r, cc)) * m(s, d) *
                   c.cum_table(a, b, cc, d);
    return acc;
  };
  out.q[0] = transformed(0, 0, 0, 0);
  out.q[1] = transformed(0, 0, 0, 1);
  out.q[2] = transformed(0, 0, 1, 1);
  out.q[3] = transformed(0, 1, 1, 0);
  out.q[4] = transformed(0, 1, 1, 1);
  out.q[5] = transformed(1, 1, 1, 1);
  return out;
}

std::vector<Eigen::Matrix2cd> cumulant_matrices(const CumulantSet& whitened) {
  auto basis = [&](int l, int k) {
    Eigen::Matrix2cd b;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) b(i, j) = whitened.cum4(i, j, k, l);
    return b;
  };
  std::vector<Eigen::Matrix2cd> out;
  out.reserve(4);
  out.push_back(basis(0, 0));
  out.push_back(basis(1, 1));
  const Eigen::Matrix2cd b01 = basis(0, 1);
  const Eigen::Matrix2cd b10 = basis(1, 0);
  out.push_back(b01 + b10);
  out.push_back(cplx(0.0, 1.0) * (b01 - b10));
  return out;
}

JointDiagResult joint_diagonalize(const std::vector<Eigen::MatrixXcd>& matrices,
                                  double min_rotation, int max_sweeps,
                                  const Eigen::MatrixXcd* initial_rotation) {
  if (matrices.empty()) throw std::invalid_argument("joint diagonalization needs matrices");
  const Eigen::Index n = matrices.front().rows();
  for (const auto& m : matrices) {
    if (m.rows() != n || m.cols() != n)
      throw std::invalid_argument("matrices must share one square size");
    if ((m - m.adjoint()).cwiseAbs().maxCoeff() > 1e-8)
      throw std::invalid_argument("matrices must be Hermitian");
  }

  std::vector<Eigen::MatrixXcd> work = matrices;
  JointDiagResult res;
  res.rotation = Eigen::MatrixXcd::Identity(n, n);
  if (initial_rotation != nullptr) {
    if (initial_rotation->rows() != n || initial_rotation->cols() != n)
      throw std::invalid_argument("initial rotation has the wrong size");
    if ((initial_rotation->adjoint() * *initial_rotation - Eigen::MatrixXcd::Identity(n, n))
            .cwiseAbs()
            .maxCoeff() > 1e-6)
      throw std::invalid_argument("initial rotation must be unitary");
    res.rotation = *initial_rotation;
    for (auto& m : work) m = (initial_rotation->adjoint() * m * *initial_rotation).eval();
  }
  res.converged = false;

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    bool rotated = false;
    for (Eigen::Index p = 0; p + 1 < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        // closed-form rotation from the dominant eigenvector of the 3x3
        // pair-interaction matrix
        Eigen::Matrix3d g = Eigen::Matrix3d::Zero();
        for (const auto& m : work) {
          Eigen::Vector3d h;
          h(0) = (m(p, p) - m(q, q)).real();
          h(1) = (m(p, q) + m(q, p)).real();
          h(2) = (cplx(0.0, 1.0) * (m(q, p) - m(p, q))).real();
          g += h * h.transpose();
        }
        if (!(g.norm() > 0.0)) continue;
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(g);
        Eigen::Vector3d v = es.eigenvectors().col(2);
        if (v(0) < 0.0) v = -v;
        const double c = std::sqrt(0.5 + 0.5 * v(0));
        const cplx s = 0.5 * cplx(v(1), -v(2)) / c;
        if (std::abs(s) <= min_rotation) continue;
        rotated = true;
        for (auto& m : work) {
          const Eigen::RowVectorXcd row_p = m.row(p);
          const Eigen::RowVectorXcd row_q = m.row(q);
          m.row(p) = c * row_p + std::conj(s) * row_q;
          m.row(q) = -s * row_p + c * row_q;
          const Eigen::VectorXcd col_p = m.col(p);
          const Eigen::VectorXcd col_q = m.col(q);
          m.col(p) = c * col_p + s * col_q;
          m.col(q) = -std::conj(s) * col_p + c * col_q;
        }
        const Eigen::VectorXcd u_p = res.rotation.col(p);
        const Eigen::VectorXcd u_q = res.rotation.col(q);
        res.rotation.col(p) = c * u_p + s * u_q;
        res.rotation.col(q) = -std::conj(s) * u_p + c * u_q;
      }
    }
    res.sweeps = sweep + 1;
    res.objective_per_sweep.push_back(sum_diag_sq(work));
    if (!rotated) {
      res.converged = true;
      break;
    }
  }

  // the phase convention makes cold starts deterministic; a warm start keeps
  // the seed's phases so the solution branch deforms continuously
  if (initial_rotation == nullptr) fix_column_phases(res.rotation);
  double off = 0.0;
  for (const auto& m : work)
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        if (i != j) off += std::norm(m(i, j));
  res.off_diag_norm = std::sqrt(off);
  return res;
}

MixingEstimate estimate_mixing(const CumulantSet& c, const Eigen::Matrix2cd& covariance,
                               const Eigen::Matrix2cd* previous_mixing) {
  const WhiteningResult wh = whiten(covariance);
  const Eigen::Matrix2cd w = wh.whitener;
  const CumulantSet whitened = transform_cumulants(c, w);
  const std::vector<Eigen::Matrix2cd> mats2 = cumulant_matrices(whitened);

  std::vector<Eigen::MatrixXcd> mats;
  mats.reserve(mats2.size());
  double max_norm = 0.0;
  for (const auto& m : mats2) {
    // estimated cumulants carry small Hermitian defects; symmetrize
    mats.emplace_back(0.5 * (m + m.adjoint()));
    max_norm = std::max(max_norm, mats.back().norm());
  }

  const double samples = static_cast<double>(std::max<std::size_t>(1, c.sample_count));
  const double min_rotation = 1e-8 / std::sqrt(samples);

  // seed from the previous estimate seen through the fresh whitener
  Eigen::MatrixXcd seed;
  const Eigen::MatrixXcd* seed_ptr = nullptr;
  if (previous_mixing != nullptr) {
    const Eigen::Matrix2cd carried = w * (*previous_mixing);
    Eigen::JacobiSVD<Eigen::Matrix2cd> svd(carried, Eigen::ComputeFullU | Eigen::ComputeFullV);
    seed = svd.matrixU() * svd.matrixV().adjoint();
    seed_ptr = &seed;
  }
  const JointDiagResult jd = joint_diagonalize(mats, min_rotation, 100, seed_ptr);

  MixingEstimate out;
  out.rotation = jd.rotation;
  out.whitener = w;
  out.mixing = w.inverse() * jd.rotation;
  out.off_diag_norm = jd.off_diag_norm;
  out.sweeps = jd.sweeps;
  out.converged = jd.converged;
  out.weak_identifiability = max_norm < 0.1;
  return out;
}

}  // namespace unmix
