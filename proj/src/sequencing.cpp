#include "eegd3/sequencing.hpp"

#include <cmath>

namespace eegd3::sequencing {

double mgu(double x, double gamma) {
  return gamma * (1.0 - std::exp(-std::abs(x))) +
         (1.0 - gamma) * (1.0 - std::exp(-x * x));
}

double mgu_grad(double x, double gamma) {
  if (x == 0.0) return 0.0; // subgradient at the |x| kink
  const double sign = x > 0.0 ? 1.0 : -1.0;
  return gamma * sign * std::exp(-std::abs(x)) + (1.0 - gamma) * 2.0 * x * std::exp(-x * x);
}

Vector mgu(const Vector& x, double gamma) {
  Vector out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) out[i] = mgu(x[i], gamma);
  return out;
}

Vector seminormalize_row(const Vector& m, double gamma) {
  Vector mhat = mgu(m, gamma);
  const double denom = std::max(mhat.sum() - 1.0, 0.0) + 1.0;
  return mhat / denom;
}

Matrix seminormalize(const Matrix& m, double gamma) {
  Matrix out(m.rows(), m.cols());
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    out.row(r) = seminormalize_row(m.row(r).transpose(), gamma).transpose();
  return out;
}

Vector seminormalize_row_backward(const Vector& m, double gamma, const Vector& grad_out) {
  const Vector mhat = mgu(m, gamma);
  const double s = mhat.sum();
  Vector grad_mhat(m.size());
  if (s <= 1.0) {
    grad_mhat = grad_out;
  } else {
    const double dot = grad_out.dot(mhat);
    grad_mhat = grad_out / s - Vector::Constant(m.size(), dot / (s * s));
  }
  Vector grad(m.size());
  for (Eigen::Index i = 0; i < m.size(); ++i) grad[i] = grad_mhat[i] * mgu_grad(m[i], gamma);
  return grad;
}

namespace {
inline double clip_p(double p) { return std::clamp(p, 1e-7, 1.0 - 1e-7); }
} // namespace

double bin_loss(const Vector& p, int target, double smoothing) {
  const Eigen::Index Y = p.size();
  double loss = 0.0;
  for (Eigen::Index j = 0; j < Y; ++j) {
    const double y = (j == target ? 1.0 : 0.0) * (1.0 - smoothing) + smoothing / 2.0;
    const double pj = clip_p(p[j]);
    loss += -y * std::log(pj) - (1.0 - y) * std::log(1.0 - pj);
  }
  return loss / static_cast<double>(Y);
}

Vector bin_loss_grad(const Vector& p, int target, double smoothing) {
  const Eigen::Index Y = p.size();
  Vector grad(Y);
  for (Eigen::Index j = 0; j < Y; ++j) {
    const double y = (j == target ? 1.0 : 0.0) * (1.0 - smoothing) + smoothing / 2.0;
    const double pj = clip_p(p[j]);
    grad[j] = (-y / pj + (1.0 - y) / (1.0 - pj)) / static_cast<double>(Y);
  }
  return grad;
}

void SequenceMappingSet::register_dataset(const std::string& dataset_id, Rng& rng,
                                          double init_sigma) {
  Matrix m(bins, components);
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = gaussian(rng, 0.0, init_sigma);
  raw[dataset_id] = std::move(m);
}

const Matrix& SequenceMappingSet::raw_for(const std::string& dataset_id) const {
  auto it = raw.find(dataset_id);
  if (it == raw.end()) throw UnknownDataset("no mapping for dataset: " + dataset_id);
  return it->second;
}

Matrix SequenceMappingSet::effective(const std::string& dataset_id) const {
  return seminormalize(raw_for(dataset_id), gamma);
}

} // namespace eegd3::sequencing
