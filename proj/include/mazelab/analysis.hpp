#pragma once

#include <Eigen/Core>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace mazelab {

// Rows are agents (keyed by training seed), columns are features named
// "<scenario>/pref" or "<scenario>/mean_len". NaN marks a missing cell.
struct AgentFeatureMatrix {
  std::vector<std::uint64_t> agents;
  std::vector<std::string> features;
  Eigen::MatrixXd values;

  AgentFeatureMatrix() = default;
  AgentFeatureMatrix(std::vector<std::uint64_t> agent_seeds, std::vector<std::string> feature_names);

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
  std::optional<Eigen::Index> column(std::string_view feature) const;
  bool missing(Eigen::Index r, Eigen::Index c) const { return std::isnan(values(r, c)); }
};

inline std::string pref_feature(std::string_view scenario) { return std::string(scenario) + "/pref"; }
inline std::string len_feature(std::string_view scenario) { return std::string(scenario) + "/mean_len"; }
inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

// CSV: header "agent_seed,<feature>...", one row per agent, empty cell = missing.
void write_matrix_csv(const std::filesystem::path& path, const AgentFeatureMatrix& m);
std::string matrix_to_csv(const AgentFeatureMatrix& m);
// Throws ParseError with the 1-based line and column of the first bad cell.
AgentFeatureMatrix parse_matrix_csv(std::string_view text);
AgentFeatureMatrix read_matrix_csv(const std::filesystem::path& path);

struct RegressionResult {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  std::size_t n = 0;
};

// Closed-form least squares of y on x. Throws DegenerateRegressor for
// constant x and InsufficientData for fewer than 2 points.
RegressionResult ols_fit(std::span<const double> x, std::span<const double> y);

struct CorrelationResult {
  RegressionResult fit;
  std::size_t dropped = 0;  // agents with a missing cell in either column
};

// Regresses <scenario_y>/pref on <scenario_x>/pref across agents.
CorrelationResult channel_correlation(const AgentFeatureMatrix& m, std::string_view scenario_x,
                                      std::string_view scenario_y);

inline constexpr double kRandomPolicyMeanLength = 96.0;

struct OutlierFlag {
  enum class Kind { ZScore, WorseThanRandom, TransitivityViolation, UniquePreference };
  Kind kind = Kind::ZScore;
  std::string feature;  // or cycle description
  nlohmann::json evidence;
};
std::string_view flag_name(OutlierFlag::Kind k);

struct AgentOutliers {
  std::uint64_t agent_seed = 0;
  std::vector<OutlierFlag> flags;
};

struct OutlierReport {
  double z_threshold = 3.0;
  double random_reference = kRandomPolicyMeanLength;
  std::optional<double> measured_random_mean;
  std::vector<AgentOutliers> agents;  // only agents with at least one flag, ordered by seed

  bool flagged(std::uint64_t agent_seed) const;
  std::size_t flag_count() const;
};

struct OutlierOptions {
  double z_threshold = 3.0;
  double worse_than_random = kRandomPolicyMeanLength;
  double unique_side_fraction = 0.95;
  std::optional<double> measured_random_mean;
};

// Flags z-score extremes per feature, mean lengths at or beyond the random
// reference, and agents alone on their side of 0.5 for a preference feature.
// Throws InsufficientData with fewer than 3 agents.
OutlierReport detect_outliers(const AgentFeatureMatrix& m, const OutlierOptions& options = {});

// Three scenarios whose first-object preferences read "a over b", "b over c"
// and "c over a".
struct PreferenceTriple {
  std::string label;
  std::string ab;
  std::string bc;
  std::string ca;
};

struct TransitivityViolation {
  std::uint64_t agent_seed = 0;
  std::string label;
  std::array<double, 3> prefs{};
  bool reverse = false;  // b > a, c > b, a > c
};

struct TransitivityResult {
  std::vector<TransitivityViolation> violations;
  std::vector<std::string> skipped;  // triples with a missing scenario
};

TransitivityResult transitivity_check(const AgentFeatureMatrix& m, std::span<const PreferenceTriple> triples);

// Appends TransitivityViolation flags to the report.
void merge_transitivity(OutlierReport& report, const TransitivityResult& t);

nlohmann::json outlier_report_json(const OutlierReport& report);

struct ScatterPoint {
  std::uint64_t agent_seed = 0;
  double pref = 0.0;
  double mean_len = 0.0;
};

// Points for agents with both cells present.
std::vector<ScatterPoint> scatter_points(const AgentFeatureMatrix& m, std::string_view scenario);

// Writes <stem>.csv (agent_seed,pref,mean_len) and <stem>.svg. Returns the
// number of points; zero points still produce both files.
std::size_t emit_scatter(const AgentFeatureMatrix& m, std::string_view scenario, const std::filesystem::path& stem);
std::string scatter_svg(std::span<const ScatterPoint> points, std::string_view title);

}  // namespace mazelab
