#include "stablehte/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "stablehte/errors.hpp"
#include "stablehte/losses.hpp"

namespace stablehte {

namespace {

void require_matched(std::span<const double> ite_hat, std::span<const double> y1,
                     std::span<const double> y0) {
  if (ite_hat.empty()) throw ContractError("effect metrics: empty inputs");
  if (ite_hat.size() != y1.size() || y1.size() != y0.size())
    throw DimensionError("effect metrics: length mismatch");
}

}  // namespace

double pehe(std::span<const double> ite_hat, std::span<const double> y1,
            std::span<const double> y0) {
  require_matched(ite_hat, y1, y0);
  double acc = 0.0;
  for (std::size_t i = 0; i < ite_hat.size(); ++i) {
    const double d = ite_hat[i] - (y1[i] - y0[i]);
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(ite_hat.size()));
}

double eps_ate(std::span<const double> ite_hat, std::span<const double> y1,
               std::span<const double> y0) {
  require_matched(ite_hat, y1, y0);
  double true_ate = 0.0;
  double est_ate = 0.0;
  for (std::size_t i = 0; i < ite_hat.size(); ++i) {
    true_ate += y1[i] - y0[i];
    est_ate += ite_hat[i];
  }
  const double n = static_cast<double>(ite_hat.size());
  return std::abs(true_ate / n - est_ate / n);
}

double f1_score(std::span<const double> y_hat_prob, std::span<const double> y_true,
                double threshold) {
  if (y_hat_prob.size() != y_true.size()) throw DimensionError("f1: length mismatch");
  if (y_hat_prob.empty()) throw ContractError("f1: empty inputs");
  long tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < y_hat_prob.size(); ++i) {
    if (y_true[i] != 0.0 && y_true[i] != 1.0) throw ContractError("f1: ground truth must be 0/1");
    const bool pred = y_hat_prob[i] > threshold;
    const bool truth = y_true[i] == 1.0;
    if (pred && truth) ++tp;
    else if (pred && !truth) ++fp;
    else if (!pred && truth) ++fn;
  }
  if (tp == 0 && fp == 0 && fn == 0) return 0.0;  // no positives anywhere
  const double denom = 2.0 * tp + fp + fn;
  return denom == 0.0 ? 0.0 : 2.0 * tp / denom;
}

std::pair<double, double> stability_aggregate(std::span<const double> per_env_values) {
  if (per_env_values.empty()) throw ContractError("stability: need at least one environment");
  double mean = 0.0;
  for (double v : per_env_values) mean += v;
  mean /= static_cast<double>(per_env_values.size());
  // spread as the mean squared deviation; see header
  double spread = 0.0;
  for (double v : per_env_values) spread += (v - mean) * (v - mean);
  spread /= static_cast<double>(per_env_values.size());
  return {mean, spread};
}

HeatmapResult decorrelation_heatmap(const Matrix& z_rep, int dims, int rff_a, int rff_b,
                                    RngState& rng) {
  if (z_rep.rows() < 2) throw ContractError("heatmap: need at least two rows");
  if (dims < 1) throw ConfigError("heatmap: dims must be at least 1");
  const int take = std::min(dims, z_rep.cols());

  HeatmapResult out;
  RngState col_rng = rng.fork("columns");
  std::vector<int> order = col_rng.permutation(z_rep.cols());
  out.chosen_cols.assign(order.begin(), order.begin() + take);
  std::sort(out.chosen_cols.begin(), out.chosen_cols.end());

  RngState bank_rng = rng.fork("bank");
  RffBank bank = RffBank::draw(take, rff_a, rff_b, bank_rng);

  const int n = z_rep.rows();
  std::vector<double> w(static_cast<std::size_t>(n), 1.0);
  std::vector<std::vector<double>> cols(static_cast<std::size_t>(take));
  for (int s = 0; s < take; ++s) {
    cols[static_cast<std::size_t>(s)].resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) cols[static_cast<std::size_t>(s)][static_cast<std::size_t>(i)] =
        z_rep(i, out.chosen_cols[static_cast<std::size_t>(s)]);
  }

  out.pairwise = Matrix(take, take);
  double acc = 0.0;
  for (int i = 0; i < take; ++i) {
    for (int j = i; j < take; ++j) {
      const double score =
          hsic_rff_weighted(cols[static_cast<std::size_t>(i)], cols[static_cast<std::size_t>(j)],
                            w, bank.a_side[static_cast<std::size_t>(i)],
                            bank.b_side[static_cast<std::size_t>(j)]);
      out.pairwise(i, j) = score;
      out.pairwise(j, i) = score;
      if (i != j) acc += 2.0 * score;
    }
  }
  const long off = static_cast<long>(take) * (take - 1);
  out.off_diagonal_mean = off == 0 ? 0.0 : acc / static_cast<double>(off);
  return out;
}

}  // namespace stablehte
