#include "stablehte/dataset.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "stablehte/errors.hpp"
#include "stablehte/text.hpp"

namespace stablehte {

ColumnRole role_from_string(const std::string& s) {
  if (s == "instrument") return ColumnRole::Instrument;
  if (s == "confounder") return ColumnRole::Confounder;
  if (s == "adjustment") return ColumnRole::Adjustment;
  if (s == "unstable") return ColumnRole::Unstable;
  if (s == "raw") return ColumnRole::Raw;
  throw DataError("unknown column role '" + s + "'");
}

std::string to_string(ColumnRole role) {
  switch (role) {
    case ColumnRole::Instrument: return "instrument";
    case ColumnRole::Confounder: return "confounder";
    case ColumnRole::Adjustment: return "adjustment";
    case ColumnRole::Unstable: return "unstable";
    case ColumnRole::Raw: return "raw";
  }
  return "raw";
}

OutcomeKind outcome_from_string(const std::string& s) {
  if (s == "binary") return OutcomeKind::Binary;
  if (s == "continuous") return OutcomeKind::Continuous;
  throw ConfigError("unknown outcome kind '" + s + "'");
}

std::string to_string(OutcomeKind kind) {
  return kind == OutcomeKind::Binary ? "binary" : "continuous";
}

std::vector<int> Dataset::treated_indices() const {
  std::vector<int> idx;
  for (int i = 0; i < n(); ++i)
    if (t[static_cast<std::size_t>(i)] == 1) idx.push_back(i);
  return idx;
}

std::vector<int> Dataset::control_indices() const {
  std::vector<int> idx;
  for (int i = 0; i < n(); ++i)
    if (t[static_cast<std::size_t>(i)] == 0) idx.push_back(i);
  return idx;
}

std::vector<int> Dataset::columns_with_role(ColumnRole role) const {
  std::vector<int> idx;
  for (int j = 0; j < static_cast<int>(roles.size()); ++j)
    if (roles[static_cast<std::size_t>(j)] == role) idx.push_back(j);
  return idx;
}

Dataset Dataset::subset(const std::vector<int>& rows) const {
  Dataset out;
  out.outcome = outcome;
  out.roles = roles;
  out.X = Matrix(static_cast<int>(rows.size()), m());
  auto pick = [&](const std::vector<double>& src, std::vector<double>& dst) {
    if (src.empty()) return;
    dst.reserve(rows.size());
    for (int r : rows) dst.push_back(src[static_cast<std::size_t>(r)]);
  };
  for (std::size_t k = 0; k < rows.size(); ++k) {
    int r = rows[k];
    if (r < 0 || r >= n()) throw DataError("subset: row index out of range");
    auto dst = out.X.row(static_cast<int>(k));
    auto src = X.row(r);
    for (int j = 0; j < m(); ++j) dst[j] = src[j];
    out.t.push_back(t[static_cast<std::size_t>(r)]);
  }
  pick(yf, out.yf);
  pick(ycf, out.ycf);
  pick(y0, out.y0);
  pick(y1, out.y1);
  return out;
}

void Dataset::append_rows(const Dataset& other) {
  if (m() != other.m() && n() != 0) throw DataError("append_rows: column counts differ");
  if (n() == 0) {
    *this = other;
    return;
  }
  Matrix merged(n() + other.n(), m());
  for (int i = 0; i < n(); ++i) {
    auto dst = merged.row(i);
    auto src = X.row(i);
    for (int j = 0; j < m(); ++j) dst[j] = src[j];
  }
  for (int i = 0; i < other.n(); ++i) {
    auto dst = merged.row(n() + i);
    auto src = other.X.row(i);
    for (int j = 0; j < m(); ++j) dst[j] = src[j];
  }
  X = std::move(merged);
  auto extend = [](std::vector<double>& dst, const std::vector<double>& src) {
    dst.insert(dst.end(), src.begin(), src.end());
  };
  t.insert(t.end(), other.t.begin(), other.t.end());
  extend(yf, other.yf);
  extend(ycf, other.ycf);
  extend(y0, other.y0);
  extend(y1, other.y1);
}

void Dataset::validate() const {
  const auto count = static_cast<std::size_t>(n());
  if (t.size() != count) throw DataError("dataset: t length does not match row count");
  if (yf.size() != count) throw DataError("dataset: yf length does not match row count");
  auto check_optional = [&](const std::vector<double>& v, const char* name) {
    if (!v.empty() && v.size() != count)
      throw DataError(std::string("dataset: ") + name + " length does not match row count");
  };
  check_optional(ycf, "ycf");
  check_optional(y0, "y0");
  check_optional(y1, "y1");
  if (y0.empty() != y1.empty()) throw DataError("dataset: y0 and y1 must be present together");
  if (!roles.empty() && roles.size() != static_cast<std::size_t>(m()))
    throw DataError("dataset: role list does not match column count");
  for (int v : t)
    if (v != 0 && v != 1) throw DataError("dataset: treatment values must be 0 or 1");
  if (outcome == OutcomeKind::Binary) {
    auto check_binary = [](const std::vector<double>& v, const char* name) {
      for (double y : v)
        if (y != 0.0 && y != 1.0)
          throw DataError(std::string("dataset: binary outcome column ") + name +
                          " contains a value other than 0 or 1");
    };
    check_binary(yf, "yf");
    check_binary(ycf, "ycf");
    check_binary(y0, "y0");
    check_binary(y1, "y1");
  }
  if (!X.all_finite()) throw DataError("dataset: covariates contain non-finite values");
}

void write_dataset_csv(const Dataset& ds, const std::string& path,
                       const std::vector<std::string>& comment_lines) {
  std::ofstream out(path);
  if (!out) throw LoadError("cannot open '" + path + "' for writing");
  for (const auto& line : comment_lines) out << "# " << line << "\n";
  for (int j = 0; j < ds.m(); ++j) out << "x" << (j + 1) << ",";
  out << "t,yf";
  if (ds.has_counterfactuals()) out << ",ycf";
  if (ds.has_potentials()) out << ",y0,y1";
  out << "\n";
  for (int i = 0; i < ds.n(); ++i) {
    auto row = ds.X.row(i);
    for (int j = 0; j < ds.m(); ++j) out << g17(row[j]) << ",";
    out << ds.t[static_cast<std::size_t>(i)] << "," << g17(ds.yf[static_cast<std::size_t>(i)]);
    if (ds.has_counterfactuals()) out << "," << g17(ds.ycf[static_cast<std::size_t>(i)]);
    if (ds.has_potentials())
      out << "," << g17(ds.y0[static_cast<std::size_t>(i)]) << ","
          << g17(ds.y1[static_cast<std::size_t>(i)]);
    out << "\n";
  }
  if (!out) throw LoadError("failed while writing '" + path + "'");
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

double parse_double(const std::string& s, const std::string& path, int line_no) {
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0')
    throw LoadError(path + ":" + std::to_string(line_no) + ": cannot parse number '" + s + "'");
  return v;
}

}  // namespace

Dataset read_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open '" + path + "'");
  std::string line;
  int line_no = 0;
  do {
    if (!std::getline(in, line)) throw LoadError(path + ": empty file");
    ++line_no;
  } while (!line.empty() && line[0] == '#');
  if (!line.empty() && line.back() == '\r') line.pop_back();

  auto header = split_csv_line(line);
  int m = 0;
  while (m < static_cast<int>(header.size()) && header[static_cast<std::size_t>(m)] == "x" + std::to_string(m + 1))
    ++m;
  if (m == 0) throw LoadError(path + ": header must start with covariate columns x1,x2,...");
  std::size_t pos = static_cast<std::size_t>(m);
  auto expect = [&](const char* name) {
    if (pos >= header.size() || header[pos] != name)
      throw LoadError(path + ": expected column '" + name + "' after covariates");
    ++pos;
  };
  expect("t");
  expect("yf");
  bool has_ycf = pos < header.size() && header[pos] == "ycf";
  if (has_ycf) ++pos;
  bool has_pot = pos < header.size() && header[pos] == "y0";
  if (has_pot) {
    ++pos;
    expect("y1");
  }
  if (pos != header.size())
    throw LoadError(path + ": unexpected trailing column '" + header[pos] + "'");

  std::vector<double> xs;
  Dataset ds;
  int rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw LoadError(path + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(header.size()) + " fields, found " +
                      std::to_string(fields.size()));
    for (int j = 0; j < m; ++j)
      xs.push_back(parse_double(fields[static_cast<std::size_t>(j)], path, line_no));
    double tv = parse_double(fields[static_cast<std::size_t>(m)], path, line_no);
    if (tv != 0.0 && tv != 1.0)
      throw LoadError(path + ":" + std::to_string(line_no) + ": treatment must be 0 or 1");
    ds.t.push_back(static_cast<int>(tv));
    std::size_t k = static_cast<std::size_t>(m) + 1;
    ds.yf.push_back(parse_double(fields[k++], path, line_no));
    if (has_ycf) ds.ycf.push_back(parse_double(fields[k++], path, line_no));
    if (has_pot) {
      ds.y0.push_back(parse_double(fields[k++], path, line_no));
      ds.y1.push_back(parse_double(fields[k++], path, line_no));
    }
    ++rows;
  }
  ds.X = Matrix(rows, m, std::move(xs));
  // Outcome kind is not stored in the file; infer binary when every outcome
  // value is 0/1, which matches how the generators label their outputs.
  bool binary = true;
  auto scan = [&](const std::vector<double>& v) {
    for (double y : v)
      if (y != 0.0 && y != 1.0) binary = false;
  };
  scan(ds.yf);
  scan(ds.ycf);
  scan(ds.y0);
  scan(ds.y1);
  ds.outcome = binary ? OutcomeKind::Binary : OutcomeKind::Continuous;
  ds.roles.assign(static_cast<std::size_t>(m), ColumnRole::Raw);
  ds.validate();
  return ds;
}

void write_roles_json(const Dataset& ds, const std::string& path) {
  nlohmann::json j;
  for (int c = 0; c < ds.m(); ++c)
    j["x" + std::to_string(c + 1)] = to_string(ds.roles[static_cast<std::size_t>(c)]);
  std::ofstream out(path);
  if (!out) throw LoadError("cannot open '" + path + "' for writing");
  out << j.dump(2) << "\n";
}

std::vector<ColumnRole> read_roles_json(const std::string& path, int columns) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(path + ": " + e.what());
  }
  if (!j.is_object()) throw LoadError(path + ": role sidecar must be a JSON object");
  std::vector<ColumnRole> roles(static_cast<std::size_t>(columns), ColumnRole::Raw);
  for (auto& [key, value] : j.items()) {
    if (key.size() < 2 || key[0] != 'x')
      throw LoadError(path + ": unexpected key '" + key + "'");
    int idx = std::atoi(key.c_str() + 1);
    if (idx < 1 || idx > columns)
      throw LoadError(path + ": column '" + key + "' outside 1.." + std::to_string(columns));
    roles[static_cast<std::size_t>(idx - 1)] = role_from_string(value.get<std::string>());
  }
  return roles;
}

void apply_roles(Dataset& ds, const std::vector<ColumnRole>& roles) {
  if (static_cast<int>(roles.size()) != ds.m())
    throw DataError("role list does not match dataset column count");
  ds.roles = roles;
}

}  // namespace stablehte
