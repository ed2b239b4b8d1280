#pragma once

#include <span>
#include <utility>
#include <vector>

#include "stablehte/matrix.hpp"
#include "stablehte/rff.hpp"
#include "stablehte/rng.hpp"

namespace stablehte {

// Root mean squared error of the per-unit effect estimates against the
// ground-truth potential outcomes.
double pehe(std::span<const double> ite_hat, std::span<const double> y1,
            std::span<const double> y0);

// Absolute gap between the true and the estimated average effect.
double eps_ate(std::span<const double> ite_hat, std::span<const double> y1,
               std::span<const double> y0);

// F1 of predictions thresholded at `threshold`, positive class 1. Returns 0
// when there is no positive ground truth and no positive prediction.
double f1_score(std::span<const double> y_hat_prob, std::span<const double> y_true,
                double threshold = 0.5);

// Mean and spread over environments. The spread is the mean of squared
// deviations, without a square root or small-sample correction; that exact
// quantity is what the reported stability numbers use.
std::pair<double, double> stability_aggregate(std::span<const double> per_env_values);

struct HeatmapResult {
  Matrix pairwise;                 // dims x dims dependence scores
  std::vector<int> chosen_cols;    // which representation columns were sampled
  double off_diagonal_mean = 0.0;
};

// Pairwise dependence between `dims` randomly sampled representation columns
// (all columns when there are fewer), with unit observation weights. Column
// slot i keeps its own frozen feature map pair, so repeated calls with the
// same rng seed are comparable across models.
HeatmapResult decorrelation_heatmap(const Matrix& z_rep, int dims, int rff_a, int rff_b,
                                    RngState& rng);

}  // namespace stablehte
