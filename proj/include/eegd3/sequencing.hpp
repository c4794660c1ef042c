#pragma once

#include "eegd3/rng.hpp"
#include "eegd3/types.hpp"

#include <map>
#include <string>

namespace eegd3::sequencing {

// Inverted mixed Gaussian unit: interpolates a Laplacian- and a
// Gaussian-shaped saturation, even in x, 0 at 0, approaching 1.
double mgu(double x, double gamma);
double mgu_grad(double x, double gamma);
Vector mgu(const Vector& x, double gamma);

// MGU followed by division of the row by its sum when the sum exceeds 1.
Vector seminormalize_row(const Vector& m, double gamma);
Matrix seminormalize(const Matrix& m, double gamma);

// dL/d(raw row) given dL/d(seminormalized row).
Vector seminormalize_row_backward(const Vector& m, double gamma, const Vector& grad_out);

// Mean binary cross-entropy over bins against a label-smoothed one-hot target.
double bin_loss(const Vector& p, int target, double smoothing);
Vector bin_loss_grad(const Vector& p, int target, double smoothing);

// One trainable raw mapping matrix [Y x C] per dataset.
struct SequenceMappingSet {
  double gamma = 0.5;
  int bins = 16;
  int components = 16;
  std::map<std::string, Matrix> raw;

  void register_dataset(const std::string& dataset_id, Rng& rng, double init_sigma = 0.1);
  const Matrix& raw_for(const std::string& dataset_id) const;
  Matrix effective(const std::string& dataset_id) const; // seminormalized
};

} // namespace eegd3::sequencing
