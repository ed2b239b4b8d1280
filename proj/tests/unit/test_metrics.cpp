#include <doctest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "stablehte/errors.hpp"
#include "stablehte/metrics.hpp"
#include "stablehte/rng.hpp"

using namespace stablehte;

TEST_CASE("pehe definitional cases") {
  std::vector<double> truth1 = {1.0, 2.0, 0.0};
  std::vector<double> truth0 = {0.0, 1.0, 0.5};
  std::vector<double> perfect = {1.0, 1.0, -0.5};
  CHECK(pehe(perfect, truth1, truth0) == 0.0);

  std::vector<double> y1 = {0.0, 0.0};
  std::vector<double> y0 = {0.0, 0.0};
  std::vector<double> est = {1.0, 0.0};
  CHECK(pehe(est, y1, y0) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-15));

  std::vector<double> shorter = {1.0};
  CHECK_THROWS_AS(pehe(shorter, y1, y0), DimensionError);
  CHECK_THROWS_AS(pehe({}, {}, {}), ContractError);
}

TEST_CASE("eps_ate definitional cases") {
  std::vector<double> y1 = {1.0, 0.5, 0.25, 0.0};
  std::vector<double> y0 = {0.0, 0.0, 0.25, 0.5};
  std::vector<double> exact(4);
  for (int i = 0; i < 4; ++i) exact[static_cast<std::size_t>(i)] = y1[static_cast<std::size_t>(i)] - y0[static_cast<std::size_t>(i)];
  CHECK(eps_ate(exact, y1, y0) == 0.0);

  std::vector<double> offset = exact;
  for (double& v : offset) v += 0.1;
  CHECK(eps_ate(offset, y1, y0) == doctest::Approx(0.1).epsilon(1e-12));

  // anti-symmetric errors cancel in the ATE but not in PEHE
  std::vector<double> anti = exact;
  anti[0] += 0.3;
  anti[1] -= 0.3;
  CHECK(eps_ate(anti, y1, y0) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(pehe(anti, y1, y0) == doctest::Approx(0.3 / std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("f1 definitional cases") {
  std::vector<double> truth = {1.0, 1.0, 0.0, 0.0};
  std::vector<double> perfect = {0.9, 0.8, 0.1, 0.2};
  CHECK(f1_score(perfect, truth) == 1.0);

  std::vector<double> all_neg = {0.1, 0.2, 0.3, 0.4};
  CHECK(f1_score(all_neg, truth) == 0.0);

  // TP=2, FP=1, FN=1 -> 2/3
  std::vector<double> truth2 = {1.0, 1.0, 1.0, 0.0, 0.0};
  std::vector<double> pred2 = {0.9, 0.7, 0.2, 0.8, 0.1};
  CHECK(f1_score(pred2, truth2) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));

  std::vector<double> no_pos_truth = {0.0, 0.0};
  std::vector<double> no_pos_pred = {0.1, 0.2};
  CHECK(f1_score(no_pos_pred, no_pos_truth) == 0.0);

  std::vector<double> bad_truth = {0.5, 1.0};
  CHECK_THROWS_AS(f1_score(no_pos_pred, bad_truth), ContractError);

  // threshold is strict: a probability equal to the threshold is negative
  std::vector<double> border = {0.5, 0.6};
  std::vector<double> border_truth = {1.0, 1.0};
  CHECK(f1_score(border, border_truth, 0.5) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("stability aggregate uses the mean squared deviation") {
  std::vector<double> single = {0.7};
  auto [m1, s1] = stability_aggregate(single);
  CHECK(m1 == 0.7);
  CHECK(s1 == 0.0);

  std::vector<double> pair = {0.4, 0.6};
  auto [m2, s2] = stability_aggregate(pair);
  CHECK(m2 == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(s2 == doctest::Approx(0.01).epsilon(1e-15));

  std::vector<double> constant = {0.3, 0.3, 0.3};
  auto [m3, s3] = stability_aggregate(constant);
  CHECK(m3 == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(s3 == 0.0);

  CHECK_THROWS_AS(stability_aggregate({}), ContractError);
}

TEST_CASE("heatmap flags duplicated columns and stays symmetric") {
  const int n = 160;
  RngState data_rng(31);
  Matrix z(n, 6);
  data_rng.fill_normal(z);
  for (int i = 0; i < n; ++i) z(i, 5) = z(i, 4);  // exact duplicate pair

  RngState rng(32);
  HeatmapResult res = decorrelation_heatmap(z, 6, 5, 5, rng);
  REQUIRE(res.pairwise.rows() == 6);
  REQUIRE(static_cast<int>(res.chosen_cols.size()) == 6);

  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) {
      CHECK(res.pairwise(i, j) == res.pairwise(j, i));
      CHECK(res.pairwise(i, j) >= 0.0);
    }

  // locate the slots holding the duplicated columns
  int s4 = -1, s5 = -1;
  for (int s = 0; s < 6; ++s) {
    if (res.chosen_cols[static_cast<std::size_t>(s)] == 4) s4 = s;
    if (res.chosen_cols[static_cast<std::size_t>(s)] == 5) s5 = s;
  }
  REQUIRE(s4 >= 0);
  REQUIRE(s5 >= 0);
  const double dup_score = res.pairwise(s4, s5);
  double max_other = 0.0;
  for (int i = 0; i < 6; ++i)
    for (int j = i + 1; j < 6; ++j) {
      if ((i == s4 && j == s5) || (i == s5 && j == s4)) continue;
      max_other = std::max(max_other, res.pairwise(i, j));
    }
  CHECK(dup_score > max_other);
}

TEST_CASE("heatmap off-diagonal mean is small for independent columns") {
  const int n = 200;
  RngState data_rng(41);
  Matrix z(n, 8);
  data_rng.fill_normal(z);

  RngState rng(42);
  HeatmapResult res = decorrelation_heatmap(z, 25, 5, 5, rng);
  // fewer columns than requested -> all are used
  CHECK(res.pairwise.rows() == 8);

  // permutation null: break dependence by shuffling one independent draw and
  // record the typical off-diagonal mean under independence
  RngState null_rng(43);
  std::vector<double> null_means;
  for (int rep = 0; rep < 20; ++rep) {
    Matrix zn(n, 8);
    null_rng.fill_normal(zn);
    RngState hm_rng(42);
    null_means.push_back(decorrelation_heatmap(zn, 25, 5, 5, hm_rng).off_diagonal_mean);
  }
  const double cutoff = testsupport::percentile(null_means, 97.5) * 3.0;
  CHECK(res.off_diagonal_mean < cutoff);

  // strongly coupled columns push the mean far above that threshold
  Matrix zc(n, 8);
  RngState couple_rng(44);
  for (int i = 0; i < n; ++i) {
    const double base = couple_rng.normal();
    for (int j = 0; j < 8; ++j) zc(i, j) = base + 0.05 * couple_rng.normal();
  }
  RngState hm_rng(42);
  const double coupled = decorrelation_heatmap(zc, 25, 5, 5, hm_rng).off_diagonal_mean;
  CHECK(coupled > 5.0 * res.off_diagonal_mean);
}

TEST_CASE("heatmap respects the requested dimension count") {
  const int n = 120;
  RngState data_rng(51);
  Matrix z(n, 30);
  data_rng.fill_normal(z);
  RngState rng(52);
  HeatmapResult res = decorrelation_heatmap(z, 25, 5, 5, rng);
  CHECK(res.pairwise.rows() == 25);
  CHECK(res.pairwise.cols() == 25);
  CHECK(static_cast<int>(res.chosen_cols.size()) == 25);
  for (std::size_t i = 1; i < res.chosen_cols.size(); ++i)
    CHECK(res.chosen_cols[i] > res.chosen_cols[i - 1]);
  for (int c : res.chosen_cols) {
    CHECK(c >= 0);
    CHECK(c < 30);
  }

  // same rng seed, same data -> identical heatmap
  RngState rng2(52);
  HeatmapResult res2 = decorrelation_heatmap(z, 25, 5, 5, rng2);
  for (int i = 0; i < 25; ++i)
    for (int j = 0; j < 25; ++j) CHECK(res.pairwise(i, j) == res2.pairwise(i, j));
}
