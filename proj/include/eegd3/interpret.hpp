#pragma once

#include "eegd3/model.hpp"
#include "eegd3/store.hpp"
#include "eegd3/training.hpp"

#include <vector>

namespace eegd3::interpret {

// Component activations at sliding-window centres over one trial.
struct LatentTimecourse {
  Matrix values;  // [C x S], sigmoid range
  Vector centers; // S window-centre times in seconds (relative to trial start)
};

LatentTimecourse timecourse(model::Model& m, const store::TrialData& trial, double fs,
                            const training::TrainConfig& prep, long stride_samples);

// Concordance correlation coefficient, population moments; 0 when either
// series is constant.
double ccc(const Vector& x, const Vector& y);

// Mean of pairwise CCCs over the lower triangle, diagonal excluded.
double timecourse_consistency(const std::vector<Vector>& series);

// One-sided one-sample t-test per electrode: fold-wise relevance greater than
// the given reference mean. fold_values: [folds x E].
Vector electrode_significance(const Matrix& fold_values, double reference_mean);

struct SurrogateResult {
  double r = 0.0;
  double p = 1.0;
};

// Pearson r between the series plus a random-phase surrogate null: p is the
// plus-one-corrected fraction of surrogates with |r| at least as large.
SurrogateResult surrogate_correlation(const Vector& component, const Vector& indicator,
                                      int n_surrogates, Rng& rng);

// Single random-phase surrogate: amplitude spectrum kept, phases randomized.
Vector phase_surrogate(const Vector& x, Rng& rng);

// Match each fold's components to the reference fold by maximizing summed
// Pearson correlation of mean condition timecourses. mean_timecourses[f] is
// [C x S]. Returns perm[f][c] = reference component for fold f's component c.
std::vector<std::vector<int>> match_components(const std::vector<Matrix>& mean_timecourses,
                                               int reference_fold = 0);

} // namespace eegd3::interpret
