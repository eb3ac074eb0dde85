#include "neuroclip/loss.hpp"

#include <cmath>

#include "neuroclip/errors.hpp"
#include "neuroclip/ops.hpp"

namespace neuroclip {

namespace {

void require_square(const Tensor& s, const char* what) {
  if (s.rank() != 2 || s.shape()[0] != s.shape()[1]) {
    throw DimensionError(std::string(what) + ": expected a square matrix, got " + to_string(s.shape()));
  }
}

Tensor logits(const Tensor& s, const Tensor& tau) {
  if (tau.size() != 1) throw DimensionError("temperature must be a scalar, got " + to_string(tau.shape()));
  if (!(tau.data()[0] > 0.0)) throw DomainError("temperature must be positive");
  return div(s, reshape(tau, {}));
}

Tensor blend_identity(const Tensor& p, double beta) {
  const Tensor eye = Tensor::eye(p.shape()[0]);
  return add(scale(eye, 1.0 - beta), scale(p, beta));
}

}  // namespace

void LossWeights::validate() const {
  if (!(mu >= 0.0) || !(alpha >= 0.0) || !(lambda >= 0.0)) throw DomainError("loss weights must be nonnegative");
  if (!(beta >= 0.0 && beta <= 1.0)) throw DomainError("loss.beta must lie in [0, 1]");
}

void require_row_stochastic(const Tensor& p, const char* what, double tol) {
  if (p.rank() != 2) throw DimensionError(std::string(what) + ": expected a matrix, got " + to_string(p.shape()));
  const std::size_t n = p.shape()[1];
  for (std::size_t r = 0; r < p.shape()[0]; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double v = p.data()[r * n + j];
      if (v < -tol) throw ContractError(std::string(what) + ": negative probability in row " + std::to_string(r));
      s += v;
    }
    if (std::abs(s - 1.0) > tol) {
      throw ContractError(std::string(what) + ": row " + std::to_string(r) + " sums to " + std::to_string(s));
    }
  }
}

Tensor cosine_sim_matrix(const Tensor& z_eeg, const Tensor& z_img) {
  if (z_eeg.rank() != 2 || z_img.rank() != 2 || z_eeg.shape()[1] != z_img.shape()[1]) {
    throw DimensionError("cosine_sim_matrix: embedding shapes " + to_string(z_eeg.shape()) + " and " +
                         to_string(z_img.shape()) + " disagree");
  }
  return matmul(l2_normalize(z_eeg), transpose(l2_normalize(z_img)));
}

Tensor infonce(const Tensor& similarity, const Tensor& tau) {
  require_square(similarity, "infonce");
  const std::size_t b = similarity.shape()[0];
  const Tensor l = logits(similarity, tau);
  const Tensor eye = Tensor::eye(b);
  Tensor matched = add(sum(mul(log_softmax_rows(l), eye)), sum(mul(log_softmax_rows(transpose(l)), eye)));
  return scale(matched, -1.0 / (2.0 * double(b)));
}

Tensor infonce(const Tensor& similarity, double tau) { return infonce(similarity, Tensor::scalar(tau)); }

SoftTargets soft_targets(const Tensor& z_eeg, const Tensor& z_img, const Tensor& tau, double beta) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw DomainError("soft_targets: beta must lie in [0, 1]");
  const Tensor ze = l2_normalize(z_eeg);
  const Tensor zi = l2_normalize(z_img);
  SoftTargets t;
  t.p_ee = softmax_rows(logits(matmul(ze, transpose(ze)), tau));
  t.p_ii = softmax_rows(logits(matmul(zi, transpose(zi)), tau));
  t.t_eeg = blend_identity(t.p_ee, beta);
  t.t_img = blend_identity(t.p_ii, beta);
  return t;
}

Tensor soft_loss(const Tensor& t_eeg, const Tensor& t_img, const Tensor& p_ei, const Tensor& p_ie) {
  require_row_stochastic(t_eeg, "soft_loss T_E");
  require_row_stochastic(t_img, "soft_loss T_I");
  require_row_stochastic(p_ei, "soft_loss P_EI");
  require_row_stochastic(p_ie, "soft_loss P_IE");
  Tensor eeg_side = add(kl_div_rows(t_eeg, p_ei), kl_div_rows(p_ei, t_eeg));
  Tensor img_side = add(kl_div_rows(t_img, p_ie), kl_div_rows(p_ie, t_img));
  return scale(add(eeg_side, img_side), 0.5);
}

Tensor negatives(const Tensor& p) {
  require_square(p, "negatives");
  const std::size_t b = p.shape()[0];
  if (b < 2) throw ContractError("negatives: a batch of " + std::to_string(b) + " has no negatives");
  const Tensor off_diagonal = add_scalar(neg(Tensor::eye(b)), 1.0);
  Tensor masked = mul(p, off_diagonal);
  return div(masked, sum_axis(masked, 1, true));
}

Tensor relation_loss(const Tensor& p_ee, const Tensor& p_ii, const Tensor& p_ei, const Tensor& p_ie) {
  if (p_ee.rank() == 2 && p_ee.shape()[0] < 2) throw ContractError("relation_loss requires a batch of at least 2");
  return scale(add(kl_div_rows(negatives(p_ee), negatives(p_ei)), kl_div_rows(negatives(p_ii), negatives(p_ie))),
               0.5);
}

LossBreakdown total_loss(const Tensor& z_eeg, const Tensor& z_img, const Tensor& tau, const LossWeights& weights) {
  weights.validate();
  if (z_eeg.shape() != z_img.shape()) {
    throw DimensionError("total_loss: embedding shapes " + to_string(z_eeg.shape()) + " and " +
                         to_string(z_img.shape()) + " disagree");
  }
  const Tensor s = cosine_sim_matrix(z_eeg, z_img);
  LossBreakdown out;
  Tensor total = Tensor::scalar(0.0);
  if (weights.mu > 0.0) {
    Tensor clip = infonce(s, tau);
    out.clip = clip.item();
    total = add(total, scale(clip, weights.mu));
  }
  if (weights.alpha > 0.0 || weights.lambda > 0.0) {
    const Tensor l = logits(s, tau);
    const Tensor p_ei = softmax_rows(l);
    const Tensor p_ie = softmax_rows(transpose(l));
    SoftTargets t = soft_targets(z_eeg, z_img, tau, weights.beta);
    if (weights.detach_targets) {
      t.t_eeg = t.t_eeg.detach();
      t.t_img = t.t_img.detach();
      t.p_ee = t.p_ee.detach();
      t.p_ii = t.p_ii.detach();
    }
    if (weights.alpha > 0.0) {
      Tensor soft = soft_loss(t.t_eeg, t.t_img, p_ei, p_ie);
      out.soft = soft.item();
      total = add(total, scale(soft, weights.alpha));
    }
    if (weights.lambda > 0.0) {
      Tensor rel = relation_loss(t.p_ee, t.p_ii, p_ei, p_ie);
      out.rel = rel.item();
      total = add(total, scale(rel, weights.lambda));
    }
  }
  out.total_value = total.item();
  out.total = std::move(total);
  return out;
}

}  // namespace neuroclip
