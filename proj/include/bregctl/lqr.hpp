#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>

#include "bregctl/linear_system.hpp"

namespace bregctl {

inline constexpr int kMaxDareIter = 100000;

inline double spectral_radius(const Matrix& A) {
  Eigen::EigenSolver<Matrix> es(A, false);
  if (es.info() != Eigen::Success) throw LinearAlgebraError("eigenvalue computation failed");
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// One application of the Riccati map K ↦ Q + Aᵀ(K − KB(BᵀKB + R)⁻¹BᵀK)A.
inline Matrix riccati_map(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R,
                          const Matrix& K) {
  Matrix S = B.transpose() * K * B + R;
  Eigen::LDLT<Matrix> ldlt(S);
  if (ldlt.info() != Eigen::Success) throw LinearAlgebraError("BᵀKB + R is singular");
  Matrix KB = K * B;
  Matrix next = Q + A.transpose() * (K - KB * ldlt.solve(KB.transpose())) * A;
  return 0.5 * (next + next.transpose());
}

inline double dare_residual(const LinearSystem& sys, const Matrix& Q, const Matrix& R, const Matrix& K) {
  return (K - riccati_map(sys.A(), sys.B(), Q, R, K)).norm();
}

/// Solves the discrete algebraic Riccati equation by fixed-point iteration of
/// the Riccati map from K₀ = Q. Divergence or a stalled iteration is reported
/// as DareDivergenceError, which for Q ⪰ 0, R ≻ 0 signals a non-stabilizable pair.
inline Matrix solve_dare(const LinearSystem& sys, const Matrix& Q, const Matrix& R,
                         int max_iter = kMaxDareIter) {
  const int n = sys.n(), m = sys.m();
  if (Q.rows() != n || Q.cols() != n) throw ConfigError("Q must be n x n");
  if (R.rows() != m || R.cols() != m) throw ConfigError("R must be m x m");
  Eigen::LLT<Matrix> r_llt(0.5 * (R + R.transpose()));
  if (r_llt.info() != Eigen::Success) throw LinearAlgebraError("R must be positive definite");

  Matrix K = 0.5 * (Q + Q.transpose());
  for (int it = 0; it < max_iter; ++it) {
    Matrix next = riccati_map(sys.A(), sys.B(), Q, R, K);
    const double step = (next - K).norm();
    K = std::move(next);
    if (!K.allFinite() || K.norm() > 1e150)
      throw DareDivergenceError("DARE iteration diverged; (A, B) is likely not stabilizable");
    if (step <= 1e-12 * (1.0 + K.norm())) return K;
  }
  throw DareDivergenceError("DARE iteration did not converge in " + std::to_string(max_iter) +
                            " iterations; (A, B) is likely not stabilizable");
}

/// F = (BᵀKB + R)⁻¹BᵀKA, used as u = −Fx.
inline Matrix lqr_gain(const LinearSystem& sys, const Matrix& K, const Matrix& R) {
  const Matrix& B = sys.B();
  Matrix S = B.transpose() * K * B + R;
  Eigen::FullPivLU<Matrix> lu(S);
  if (!lu.isInvertible()) throw LinearAlgebraError("BᵀKB + R is singular");
  return lu.solve(B.transpose() * K * sys.A());
}

}  // namespace bregctl
