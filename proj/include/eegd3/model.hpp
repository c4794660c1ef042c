#pragma once

#include "eegd3/filterbank.hpp"
#include "eegd3/rng.hpp"
#include "eegd3/sequencing.hpp"
#include "eegd3/types.hpp"

#include <string>
#include <vector>

namespace eegd3::model {

struct ModelConfig {
  int components = 16;      // C
  int spatial_filters = 2;  // D
  int f1 = 2;
  int f2 = 2;
  int kernel1 = 81;
  int pad1 = 40;
  int pool1 = 4;
  int kernel2 = 21;
  int pad2 = 10;
  double dropout_p = 0.25;
  double leaky_slope = 0.01;
  int electrodes = 28;      // E
  int window_samples = 240; // T
  double fs = 160.0;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;
  double filter_mu_init = 24.0;
  double filter_h_init = 48.0;
  double filter_beta_init = 2.0;

  int ch1() const { return spatial_filters; }                 // per group after spatial
  int ch2() const { return spatial_filters * f1; }            // after first separable conv
  int ch3() const { return spatial_filters * f1 * f2; }       // after second separable conv
  int pooled_len() const { return window_samples / pool1; }   // floor semantics
};

// All trainable state of one component sub-network. Parameters of different
// groups never mix, which is what makes the latent components independent.
struct Group {
  Matrix filter;  // 1x3: mu, h, beta
  Matrix spatial; // D x E
  Vector bn1_g, bn1_b, bn1_rm, bn1_rv;
  Matrix dw1;     // D x k1
  Matrix pw1;     // (D*F1) x D
  Vector bn2_g, bn2_b, bn2_rm, bn2_rv;
  Matrix dw2;     // (D*F1) x k2
  Matrix pw2;     // (D*F1*F2) x (D*F1)
  Vector bn3_g, bn3_b, bn3_rm, bn3_rv;
  Vector red_w;   // D*F1*F2
  Vector red_b;   // scalar kept as length-1 vector for uniform handling

  Matrix g_filter, g_spatial, g_dw1, g_pw1, g_dw2, g_pw2;
  Vector g_bn1_g, g_bn1_b, g_bn2_g, g_bn2_b, g_bn3_g, g_bn3_b, g_red_w, g_red_b;
};

struct GroupCache {
  std::vector<Matrix> filtered, bn1_xhat, act1, dw1_out, bn2_xhat, act2, pooled,
      drop1_mask, drop1_out, dw2_out, bn3_xhat, act3;
  Vector bn1_istd, bn2_istd, bn3_istd;
  std::vector<Vector> gap, drop2_mask, drop2_out;
  Vector z; // per sample
};

struct BatchCache {
  bool train = false;
  long batch = 0;
  std::vector<std::vector<CVector>> input_fft; // [sample][electrode]
  Array freqs_full;
  std::vector<GroupCache> comps;
};

// View into one trainable tensor, used by the optimizer and checkpoints.
struct ParamRef {
  std::string name;
  double* value = nullptr;
  double* grad = nullptr;
  long size = 0;
  bool decay = true; // excluded for BN affine, biases and filter params
};

class Model {
 public:
  ModelConfig cfg;
  std::vector<Group> groups;

  Model() = default;
  Model(const ModelConfig& config, std::uint64_t seed);

  // windows: [B] matrices [E x T], already preprocessed.
  Matrix forward(const std::vector<Matrix>& windows, bool train, Rng* dropout_rng,
                 BatchCache* cache);
  Vector forward_one(const Matrix& window); // eval mode convenience

  // grad_z: [B x C]; accumulates into g_* members.
  void backward(const BatchCache& cache, const Matrix& grad_z);
  void zero_grad();

  std::vector<ParamRef> param_refs();
  void project_filter_params(); // clamp mu/h/beta boxes after an optimizer step

  filterbank::GaussianFilterParams filter_params(int c) const;
  Matrix spatial_relevance() const; // [C x E], mean |spatial weight| over D
};

// p = M* z for the dataset's seminormalized mapping.
Vector forward_bins(const Vector& z, const Matrix& mstar);

struct Checkpoint {
  ModelConfig config;
  Model model;
  sequencing::SequenceMappingSet mappings;
  std::vector<std::pair<double, double>> loss_curve; // (mean loss, bin accuracy) per epoch
  std::string metadata_json;                         // free-form training metadata
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& dir);
Checkpoint load_checkpoint(const std::string& dir);

// FNV-1a over all trainable values; cheap frozen-extractor guarantee.
std::uint64_t param_checksum(Model& m);

} // namespace eegd3::model
