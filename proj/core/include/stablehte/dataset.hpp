#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stablehte/matrix.hpp"

namespace stablehte {

// Structural role of a covariate column. Instruments drive treatment only,
// confounders drive both treatment and outcome, adjustments drive outcome
// only, unstable columns drive neither but the environment shifts on them.
// Raw marks observational columns whose role is unknown.
enum class ColumnRole { Instrument, Confounder, Adjustment, Unstable, Raw };

enum class OutcomeKind { Binary, Continuous };

ColumnRole role_from_string(const std::string& s);
std::string to_string(ColumnRole role);
OutcomeKind outcome_from_string(const std::string& s);
std::string to_string(OutcomeKind kind);

// One observational table: covariates, a binary treatment flag, the factual
// outcome, and (when the source provides them) counterfactual ground truth.
struct Dataset {
  Matrix X;
  std::vector<int> t;
  std::vector<double> yf;
  std::vector<double> ycf;  // empty when unknown
  std::vector<double> y0;   // empty when unknown
  std::vector<double> y1;
  OutcomeKind outcome = OutcomeKind::Binary;
  std::vector<ColumnRole> roles;  // one per covariate column

  int n() const { return X.rows(); }
  int m() const { return X.cols(); }
  bool has_potentials() const { return !y0.empty() && !y1.empty(); }
  bool has_counterfactuals() const { return !ycf.empty(); }

  std::vector<int> treated_indices() const;
  std::vector<int> control_indices() const;
  std::vector<int> columns_with_role(ColumnRole role) const;

  Dataset subset(const std::vector<int>& rows) const;
  void append_rows(const Dataset& other);

  // Checks internal consistency: shapes align, t is 0/1, binary outcomes are
  // 0/1, role list matches the column count. Throws DataError on violation.
  void validate() const;
};

// CSV layout: header x1..xm,t,yf[,ycf][,y0][,y1]; one record per row.
// Comment lines starting with '#' before the header carry provenance
// (seed, config digest) and are ignored on read.
void write_dataset_csv(const Dataset& ds, const std::string& path,
                       const std::vector<std::string>& comment_lines = {});
Dataset read_dataset_csv(const std::string& path);

// Sidecar mapping column name -> role, stored as a flat JSON object.
using RoleMap = std::map<std::string, std::string>;
void write_roles_json(const Dataset& ds, const std::string& path);
std::vector<ColumnRole> read_roles_json(const std::string& path, int columns);

// Applies a role sidecar onto a dataset loaded from CSV.
void apply_roles(Dataset& ds, const std::vector<ColumnRole>& roles);

}  // namespace stablehte
