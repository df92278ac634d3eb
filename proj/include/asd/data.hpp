#ifndef ASD_DATA_HPP_
#define ASD_DATA_HPP_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace asd {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Weekly revenue and spend per geo plus named static covariates.
struct GeoPanel {
  std::vector<std::string> geo_ids;
  Matrix revenue;             // geo x week
  Matrix spend;               // geo x week
  Matrix static_covariates;   // geo x p (p may be 0)
  std::vector<std::string> covariate_names;

  int n_geos() const { return static_cast<int>(revenue.rows()); }
  int weeks() const { return static_cast<int>(revenue.cols()); }
};

// Column naming for panel CSVs: one row per geo, header required.
// Week columns are "<prefix><week index>" with 1-based consecutive indices;
// every remaining column is treated as a static covariate.
struct PanelSchema {
  std::string geo_id_column = "geo_id";
  std::string revenue_prefix = "rev_w";
  std::string spend_prefix = "spend_w";
};

// Loads and validates a panel CSV. Throws SchemaError for missing columns,
// DataError for non-numeric or negative cells (naming row and column) and
// for duplicate geo ids, IoError when the file cannot be read.
GeoPanel LoadGeoPanel(const std::string& path, const PanelSchema& schema = {});

// One simulated geo with both potential outcomes retained for scoring.
struct SyntheticGeo {
  double baseline_revenue = 0.0;  // R_i
  double spend = 0.0;             // S_i
  double true_effect = 0.0;       // tau_i
  std::pair<double, double> potential_outcomes;  // {Y_i(0), Y_i(1)}
};

struct DgpConfig {
  int n_geos = 200;
  double mu = 10.0;            // log-scale location of baseline revenue
  double sigma = 0.5;          // log-scale spread
  double spend_ratio = 0.12;   // spend as a fraction of revenue
  double spend_noise_sd = 0.10;
  double rho_star = 2.0;       // true incremental return on spend
  double het_scale = 0.5;      // effect-heterogeneity coefficient
  std::uint64_t seed = 0;
};

// Draws n_geos geos: log R ~ Normal(mu, sigma^2), S = spend_ratio * R * (1+e)
// with e ~ Normal(0, spend_noise_sd^2), and true effect
// tau = rho_star * S * (1 + het_scale * (R / mean(R) - 1)) using the realised
// sample mean. All R draws precede all noise draws so any geo's values are
// reproducible from the seed alone. Non-positive spend triggers a bounded
// redraw of that geo's noise.
std::vector<SyntheticGeo> GenerateSynthetic(const DgpConfig& cfg);

struct FeatureSpec {
  int fourier_order = 3;
  bool include_mean = true;
  bool include_variance = true;
  bool include_trend = true;
  bool include_fourier = true;
  bool include_static = true;
};

// Per-geo feature matrix: revenue series mean, variance, least-squares trend
// slope, magnitudes of the first fourier_order harmonic pairs of the
// mean-removed series, then static covariates. Every column is z-scored
// across geos; constant columns map to zeros. Throws ParamError when
// weeks < 2 * fourier_order + 1.
Matrix EngineerFeatures(const GeoPanel& panel, const FeatureSpec& spec = {});

// Undirected weighted graph over geos, stored as sorted adjacency lists.
struct GeoGraph {
  int n = 0;
  std::vector<std::vector<std::pair<int, double>>> neighbors;

  bool has_edge(int i, int j) const {
    for (const auto& [k, w] : neighbors[static_cast<size_t>(i)])
      if (k == j) return true;
    return false;
  }
  int degree(int i) const {
    return static_cast<int>(neighbors[static_cast<size_t>(i)].size());
  }
};

// Symmetric k-nearest-neighbour graph in feature space with Gaussian kernel
// weights exp(-d^2 / median(d^2)) over the selected edges; self-loops
// excluded; directed edges symmetrised by taking the max weight. Throws
// ParamError when k_neighbors is outside [1, n-1].
GeoGraph BuildGeoGraph(const Matrix& features, int k_neighbors);

}  // namespace asd

#endif  // ASD_DATA_HPP_
