#include "asd/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "asd/errors.hpp"
#include "asd/rng.hpp"

namespace asd {

namespace {

std::vector<std::string> SplitCsvLine(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  fields.push_back(cur);
  return fields;
}

// Parses "<prefix><k>" into k, or -1 when the column is not a week column.
int WeekIndex(const std::string& column, const std::string& prefix) {
  if (column.size() <= prefix.size() || column.compare(0, prefix.size(), prefix) != 0)
    return -1;
  int idx = 0;
  for (size_t i = prefix.size(); i < column.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(column[i]))) return -1;
    idx = idx * 10 + (column[i] - '0');
  }
  return idx;
}

double ParseCell(const std::string& raw, const std::string& geo_id,
                 const std::string& column) {
  try {
    size_t pos = 0;
    double v = std::stod(raw, &pos);
    while (pos < raw.size() &&
           std::isspace(static_cast<unsigned char>(raw[pos])))
      ++pos;
    if (pos != raw.size()) throw std::invalid_argument(raw);
    if (!std::isfinite(v)) throw std::invalid_argument(raw);
    return v;
  } catch (const std::exception&) {
    throw DataError("non-numeric value \"" + raw + "\" at (" + geo_id + ", " +
                    column + ")");
  }
}

}  // namespace

GeoPanel LoadGeoPanel(const std::string& path, const PanelSchema& schema) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open panel file " + path);

  std::string header_line;
  if (!std::getline(in, header_line))
    throw SchemaError("panel file " + path + " is empty");
  std::vector<std::string> header = SplitCsvLine(header_line);

  int geo_col = -1;
  // column index -> (kind, week) with kind 0 = revenue, 1 = spend.
  std::vector<std::pair<int, int>> rev_cols, spend_cols;
  std::vector<int> cov_cols;
  for (size_t c = 0; c < header.size(); ++c) {
    const std::string& name = header[c];
    if (name == schema.geo_id_column) {
      geo_col = static_cast<int>(c);
      continue;
    }
    int w = WeekIndex(name, schema.revenue_prefix);
    if (w > 0) {
      rev_cols.emplace_back(static_cast<int>(c), w);
      continue;
    }
    w = WeekIndex(name, schema.spend_prefix);
    if (w > 0) {
      spend_cols.emplace_back(static_cast<int>(c), w);
      continue;
    }
    cov_cols.push_back(static_cast<int>(c));
  }
  if (geo_col < 0)
    throw SchemaError("missing column " + schema.geo_id_column + " in " + path);
  if (rev_cols.empty())
    throw SchemaError("no revenue columns (" + schema.revenue_prefix +
                      "*) in " + path);
  if (spend_cols.empty())
    throw SchemaError("no spend columns (" + schema.spend_prefix + "*) in " +
                      path);

  auto by_week = [](const std::pair<int, int>& a, const std::pair<int, int>& b) {
    return a.second < b.second;
  };
  std::sort(rev_cols.begin(), rev_cols.end(), by_week);
  std::sort(spend_cols.begin(), spend_cols.end(), by_week);
  if (rev_cols.size() != spend_cols.size())
    throw SchemaError("revenue and spend week counts differ in " + path);
  for (size_t t = 0; t < rev_cols.size(); ++t) {
    if (rev_cols[t].second != static_cast<int>(t) + 1 ||
        spend_cols[t].second != static_cast<int>(t) + 1)
      throw SchemaError("week columns are not consecutive from 1 in " + path);
  }
  int weeks = static_cast<int>(rev_cols.size());
  if (weeks < 2) throw SchemaError("panel needs at least 2 weeks");

  GeoPanel panel;
  for (int c : cov_cols) panel.covariate_names.push_back(header[static_cast<size_t>(c)]);

  std::vector<std::vector<double>> rev_rows, spend_rows, cov_rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields = SplitCsvLine(line);
    if (fields.size() != header.size())
      throw DataError("row for geo \"" +
                      (static_cast<size_t>(geo_col) < fields.size()
                           ? fields[static_cast<size_t>(geo_col)]
                           : std::string("?")) +
                      "\" has " + std::to_string(fields.size()) +
                      " fields, header has " + std::to_string(header.size()));
    std::string geo_id = fields[static_cast<size_t>(geo_col)];
    if (std::find(panel.geo_ids.begin(), panel.geo_ids.end(), geo_id) !=
        panel.geo_ids.end())
      throw DataError("duplicate geo id \"" + geo_id + "\"");
    panel.geo_ids.push_back(geo_id);

    auto read_series = [&](const std::vector<std::pair<int, int>>& cols) {
      std::vector<double> row;
      row.reserve(cols.size());
      for (const auto& [c, w] : cols) {
        double v = ParseCell(fields[static_cast<size_t>(c)], geo_id,
                             header[static_cast<size_t>(c)]);
        if (v < 0.0)
          throw DataError("negative value at (" + geo_id + ", " +
                          header[static_cast<size_t>(c)] + ")");
        row.push_back(v);
      }
      return row;
    };
    rev_rows.push_back(read_series(rev_cols));
    spend_rows.push_back(read_series(spend_cols));

    std::vector<double> cov_row;
    cov_row.reserve(cov_cols.size());
    for (int c : cov_cols)
      cov_row.push_back(ParseCell(fields[static_cast<size_t>(c)], geo_id,
                                  header[static_cast<size_t>(c)]));
    cov_rows.push_back(cov_row);
  }
  int n = static_cast<int>(panel.geo_ids.size());
  if (n == 0) throw DataError("panel file " + path + " has no geo rows");

  panel.revenue.resize(n, weeks);
  panel.spend.resize(n, weeks);
  panel.static_covariates.resize(n, static_cast<int>(cov_cols.size()));
  for (int i = 0; i < n; ++i) {
    for (int t = 0; t < weeks; ++t) {
      panel.revenue(i, t) = rev_rows[static_cast<size_t>(i)][static_cast<size_t>(t)];
      panel.spend(i, t) = spend_rows[static_cast<size_t>(i)][static_cast<size_t>(t)];
    }
    for (size_t c = 0; c < cov_cols.size(); ++c)
      panel.static_covariates(i, static_cast<int>(c)) =
          cov_rows[static_cast<size_t>(i)][c];
  }
  return panel;
}

std::vector<SyntheticGeo> GenerateSynthetic(const DgpConfig& cfg) {
  if (cfg.n_geos < 4) throw ParamError("synthetic draw needs at least 4 geos");
  if (!(cfg.sigma > 0.0)) throw ParamError("sigma must be positive");
  if (!(cfg.spend_ratio > 0.0)) throw ParamError("spend_ratio must be positive");

  Rng rng(cfg.seed);
  size_t n = static_cast<size_t>(cfg.n_geos);

  std::vector<double> revenue(n);
  for (size_t i = 0; i < n; ++i)
    revenue[i] = std::exp(rng.normal(cfg.mu, cfg.sigma));

  std::vector<double> spend(n);
  for (size_t i = 0; i < n; ++i) {
    double s = 0.0;
    int attempts = 0;
    do {
      s = cfg.spend_ratio * revenue[i] * (1.0 + rng.normal(0.0, cfg.spend_noise_sd));
    } while (s <= 0.0 && ++attempts < 100);
    if (s <= 0.0)
      throw DataError("spend draw stayed non-positive after bounded redraws");
    spend[i] = s;
  }

  double mean_rev = 0.0;
  for (double r : revenue) mean_rev += r;
  mean_rev /= static_cast<double>(n);

  std::vector<SyntheticGeo> geos(n);
  for (size_t i = 0; i < n; ++i) {
    SyntheticGeo& g = geos[i];
    g.baseline_revenue = revenue[i];
    g.spend = spend[i];
    g.true_effect = cfg.rho_star * spend[i] *
                    (1.0 + cfg.het_scale * (revenue[i] / mean_rev - 1.0));
    g.potential_outcomes = {revenue[i], revenue[i] + g.true_effect};
  }
  return geos;
}

namespace {

void Standardize(Matrix& m) {
  for (int c = 0; c < m.cols(); ++c) {
    double mean = m.col(c).mean();
    double ss = (m.col(c).array() - mean).square().sum();
    double sd = m.rows() > 1
                    ? std::sqrt(ss / static_cast<double>(m.rows() - 1))
                    : 0.0;
    // Columns whose spread is at rounding-noise scale count as constant.
    if (sd > 1e-12 * std::max(1.0, std::fabs(mean)))
      m.col(c) = (m.col(c).array() - mean) / sd;
    else
      m.col(c).setZero();
  }
}

}  // namespace

Matrix EngineerFeatures(const GeoPanel& panel, const FeatureSpec& spec) {
  if (spec.fourier_order < 0) throw ParamError("fourier_order must be >= 0");
  int t_len = panel.weeks();
  if (spec.include_fourier && t_len < 2 * spec.fourier_order + 1)
    throw ParamError("need at least " +
                     std::to_string(2 * spec.fourier_order + 1) +
                     " weeks for " + std::to_string(spec.fourier_order) +
                     " fourier pairs, have " + std::to_string(t_len));

  int n = panel.n_geos();
  int cols = (spec.include_mean ? 1 : 0) + (spec.include_variance ? 1 : 0) +
             (spec.include_trend ? 1 : 0) +
             (spec.include_fourier ? spec.fourier_order : 0) +
             (spec.include_static ? static_cast<int>(panel.static_covariates.cols()) : 0);
  Matrix feats(n, cols);

  double t_mean = 0.5 * static_cast<double>(t_len - 1);
  double t_ss = 0.0;
  for (int t = 0; t < t_len; ++t) {
    double d = static_cast<double>(t) - t_mean;
    t_ss += d * d;
  }

  for (int i = 0; i < n; ++i) {
    int c = 0;
    double mean = panel.revenue.row(i).mean();
    double var = (panel.revenue.row(i).array() - mean).square().sum() /
                 static_cast<double>(std::max(1, t_len - 1));
    if (spec.include_mean) feats(i, c++) = mean;
    if (spec.include_variance) feats(i, c++) = var;
    if (spec.include_trend) {
      double cross = 0.0;
      for (int t = 0; t < t_len; ++t)
        cross += (static_cast<double>(t) - t_mean) * (panel.revenue(i, t) - mean);
      feats(i, c++) = t_ss > 0.0 ? cross / t_ss : 0.0;
    }
    if (spec.include_fourier) {
      for (int k = 1; k <= spec.fourier_order; ++k) {
        double re = 0.0, im = 0.0;
        for (int t = 0; t < t_len; ++t) {
          double centered = panel.revenue(i, t) - mean;
          double angle = 2.0 * std::numbers::pi * k * t / static_cast<double>(t_len);
          re += centered * std::cos(angle);
          im += centered * std::sin(angle);
        }
        feats(i, c++) = 2.0 / static_cast<double>(t_len) *
                        std::sqrt(re * re + im * im);
      }
    }
    if (spec.include_static) {
      for (int p = 0; p < panel.static_covariates.cols(); ++p)
        feats(i, c++) = panel.static_covariates(i, p);
    }
  }
  Standardize(feats);
  return feats;
}

GeoGraph BuildGeoGraph(const Matrix& features, int k_neighbors) {
  int n = static_cast<int>(features.rows());
  if (features.cols() < 1) throw ParamError("features must have at least one column");
  if (k_neighbors < 1 || k_neighbors >= n)
    throw ParamError("k_neighbors must lie in [1, n_geos - 1]");

  // Squared distances once; the kernel bandwidth is the median over the
  // selected directed edges.
  Matrix d2(n, n);
  for (int i = 0; i < n; ++i) {
    d2(i, i) = 0.0;
    for (int j = i + 1; j < n; ++j) {
      double d = (features.row(i) - features.row(j)).squaredNorm();
      d2(i, j) = d;
      d2(j, i) = d;
    }
  }

  std::vector<std::vector<int>> knn(static_cast<size_t>(n));
  std::vector<double> edge_d2;
  for (int i = 0; i < n; ++i) {
    std::vector<int> order;
    order.reserve(static_cast<size_t>(n - 1));
    for (int j = 0; j < n; ++j)
      if (j != i) order.push_back(j);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      if (d2(i, a) != d2(i, b)) return d2(i, a) < d2(i, b);
      return a < b;
    });
    order.resize(static_cast<size_t>(k_neighbors));
    for (int j : order) edge_d2.push_back(d2(i, j));
    knn[static_cast<size_t>(i)] = std::move(order);
  }

  std::sort(edge_d2.begin(), edge_d2.end());
  size_t mid = edge_d2.size() / 2;
  double med = edge_d2.size() % 2 == 1
                   ? edge_d2[mid]
                   : 0.5 * (edge_d2[mid - 1] + edge_d2[mid]);
  if (med <= 0.0) med = 1.0;  // all-coincident degenerate case: weights 1

  GeoGraph graph;
  graph.n = n;
  graph.neighbors.assign(static_cast<size_t>(n), {});
  Matrix weight = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j : knn[static_cast<size_t>(i)]) {
      double w = std::exp(-d2(i, j) / med);
      weight(i, j) = std::max(weight(i, j), w);
      weight(j, i) = weight(i, j);
    }
  }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (weight(i, j) > 0.0)
        graph.neighbors[static_cast<size_t>(i)].emplace_back(j, weight(i, j));
  return graph;
}

}  // namespace asd
