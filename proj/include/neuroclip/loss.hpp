#pragma once

#include "neuroclip/tensor.hpp"

namespace neuroclip {

// Weights of the combined objective mu*L_clip + alpha*L_soft + lambda*L_rel.
// The temperature itself is a model parameter (see NeuroClip::temperature).
struct LossWeights {
  double mu = 0.6;
  double alpha = 0.3;
  double lambda = 0.1;
  double beta = 0.3;
  // Soft targets and the intra-modal negative distributions act as constants.
  bool detach_targets = true;

  // Throws DomainError unless mu, alpha, lambda >= 0 and beta in [0, 1].
  void validate() const;
};

// S[i][j] = <z_e_i, z_i_j> after (idempotent) row normalization. [B, B].
Tensor cosine_sim_matrix(const Tensor& z_eeg, const Tensor& z_img);

// Symmetric InfoNCE with the 1/(2B) prefactor. `tau` is a scalar tensor.
Tensor infonce(const Tensor& similarity, const Tensor& tau);
Tensor infonce(const Tensor& similarity, double tau);

struct SoftTargets {
  Tensor t_eeg;  // (1 - beta) I + beta P_EE
  Tensor t_img;  // (1 - beta) I + beta P_II
  Tensor p_ee;   // softmax(Z_E Z_E^T / tau)
  Tensor p_ii;   // softmax(Z_I Z_I^T / tau)
};

SoftTargets soft_targets(const Tensor& z_eeg, const Tensor& z_img, const Tensor& tau, double beta);

// 1/2 [KL(T_E||P_EI) + KL(P_EI||T_E)] + 1/2 [KL(T_I||P_IE) + KL(P_IE||T_I)].
// All inputs must be row-stochastic within 1e-9 (ContractError otherwise).
Tensor soft_loss(const Tensor& t_eeg, const Tensor& t_img, const Tensor& p_ei, const Tensor& p_ie);

// Diagonal removed, rows renormalized. Requires B >= 2.
Tensor negatives(const Tensor& p);

// 1/2 [KL(neg(P_EE)||neg(P_EI)) + KL(neg(P_II)||neg(P_IE))]. Requires B >= 2.
Tensor relation_loss(const Tensor& p_ee, const Tensor& p_ii, const Tensor& p_ei, const Tensor& p_ie);

struct LossBreakdown {
  Tensor total;  // differentiable
  double clip = 0.0;
  double soft = 0.0;
  double rel = 0.0;
  double total_value = 0.0;
};

// Terms with zero weight are skipped (and reported as 0).
LossBreakdown total_loss(const Tensor& z_eeg, const Tensor& z_img, const Tensor& tau, const LossWeights& weights);

// Throws ContractError when any row of a 2-D tensor sums away from 1 by more than tol.
void require_row_stochastic(const Tensor& p, const char* what, double tol = 1e-9);

}  // namespace neuroclip
