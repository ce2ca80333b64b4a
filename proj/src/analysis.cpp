#include "mazelab/analysis.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "mazelab/errors.hpp"
#include "mazelab/serialization.hpp"

namespace mazelab {

namespace {

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

struct Stats {
  double mean = 0.0;
  double sd = 0.0;
  std::size_t n = 0;
};

Stats column_stats(const AgentFeatureMatrix& m, Eigen::Index c) {
  Stats s;
  double sum = 0.0;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    if (!m.missing(r, c)) {
      sum += m.values(r, c);
      ++s.n;
    }
  if (s.n == 0) return s;
  s.mean = sum / static_cast<double>(s.n);
  double ss = 0.0;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    if (!m.missing(r, c)) ss += (m.values(r, c) - s.mean) * (m.values(r, c) - s.mean);
  s.sd = std::sqrt(ss / static_cast<double>(s.n));
  return s;
}

}  // namespace

AgentFeatureMatrix::AgentFeatureMatrix(std::vector<std::uint64_t> agent_seeds, std::vector<std::string> feature_names)
    : agents(std::move(agent_seeds)), features(std::move(feature_names)),
      values(Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(agents.size()),
                                       static_cast<Eigen::Index>(features.size()), kMissing)) {}

std::optional<Eigen::Index> AgentFeatureMatrix::column(std::string_view feature) const {
  for (std::size_t i = 0; i < features.size(); ++i)
    if (features[i] == feature) return static_cast<Eigen::Index>(i);
  return std::nullopt;
}

std::string matrix_to_csv(const AgentFeatureMatrix& m) {
  std::ostringstream os;
  os << "agent_seed";
  for (const auto& f : m.features) os << ',' << f;
  os << '\n';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    os << m.agents[static_cast<std::size_t>(r)];
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      os << ',';
      if (!m.missing(r, c)) os << format_double(m.values(r, c));
    }
    os << '\n';
  }
  return os.str();
}

void write_matrix_csv(const std::filesystem::path& path, const AgentFeatureMatrix& m) {
  write_file_atomic(path, matrix_to_csv(m));
}

AgentFeatureMatrix parse_matrix_csv(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    auto nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    auto line = text.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = nl + 1;
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) throw ParseError("matrix CSV is empty (line 1)");

  const auto header = split_csv_line(lines[0]);
  if (header.empty() || header[0] != "agent_seed") throw ParseError("line 1, column 1: expected 'agent_seed'");
  std::vector<std::string> features;
  for (std::size_t i = 1; i < header.size(); ++i) {
    if (header[i].empty()) throw ParseError("line 1, column " + std::to_string(i + 1) + ": empty feature name");
    features.emplace_back(header[i]);
  }

  std::vector<std::uint64_t> agents;
  std::vector<std::vector<double>> rows;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto cells = split_csv_line(lines[li]);
    const std::string where = "line " + std::to_string(li + 1);
    if (cells.size() != header.size())
      throw ParseError(where + ": expected " + std::to_string(header.size()) + " columns, found " +
                       std::to_string(cells.size()));
    std::uint64_t seed = 0;
    auto [p, ec] = std::from_chars(cells[0].data(), cells[0].data() + cells[0].size(), seed);
    if (ec != std::errc() || p != cells[0].data() + cells[0].size())
      throw ParseError(where + ", column 1: bad agent seed '" + std::string(cells[0]) + "'");
    agents.push_back(seed);
    std::vector<double> row;
    for (std::size_t c = 1; c < cells.size(); ++c) {
      if (cells[c].empty()) {
        row.push_back(kMissing);
        continue;
      }
      double v = 0.0;
      auto [q, ec2] = std::from_chars(cells[c].data(), cells[c].data() + cells[c].size(), v);
      if (ec2 != std::errc() || q != cells[c].data() + cells[c].size() || !std::isfinite(v))
        throw ParseError(where + ", column " + std::to_string(c + 1) + ": bad number '" + std::string(cells[c]) + "'");
      row.push_back(v);
    }
    rows.push_back(std::move(row));
  }

  AgentFeatureMatrix m(std::move(agents), std::move(features));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      m.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return m;
}

AgentFeatureMatrix read_matrix_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_matrix_csv(ss.str());
}

RegressionResult ols_fit(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw InvalidArgument("ols_fit: x and y differ in length");
  if (x.size() < 2) throw InsufficientData("ols_fit needs at least 2 points");
  const auto [xmin, xmax] = std::minmax_element(x.begin(), x.end());
  if (*xmin == *xmax) throw DegenerateRegressor("ols_fit: x is constant");

  const double n = static_cast<double>(x.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0;
  double sxy = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  RegressionResult r;
  r.n = x.size();
  r.slope = sxy / sxx;
  r.intercept = my - r.slope * mx;
  r.r_squared = syy > 0.0 ? std::clamp(sxy * sxy / (sxx * syy), 0.0, 1.0) : 0.0;
  return r;
}

CorrelationResult channel_correlation(const AgentFeatureMatrix& m, std::string_view scenario_x,
                                      std::string_view scenario_y) {
  const auto cx = m.column(pref_feature(scenario_x));
  const auto cy = m.column(pref_feature(scenario_y));
  if (!cx) throw InvalidArgument("matrix has no column " + pref_feature(scenario_x));
  if (!cy) throw InvalidArgument("matrix has no column " + pref_feature(scenario_y));
  std::vector<double> xs;
  std::vector<double> ys;
  CorrelationResult out;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    if (m.missing(r, *cx) || m.missing(r, *cy)) {
      ++out.dropped;
      continue;
    }
    xs.push_back(m.values(r, *cx));
    ys.push_back(m.values(r, *cy));
  }
  out.fit = ols_fit(xs, ys);
  return out;
}

std::string_view flag_name(OutlierFlag::Kind k) {
  switch (k) {
    case OutlierFlag::Kind::ZScore: return "z_score";
    case OutlierFlag::Kind::WorseThanRandom: return "worse_than_random";
    case OutlierFlag::Kind::TransitivityViolation: return "transitivity_violation";
    case OutlierFlag::Kind::UniquePreference: return "unique_preference";
  }
  return "?";
}

bool OutlierReport::flagged(std::uint64_t agent_seed) const {
  return std::any_of(agents.begin(), agents.end(), [&](const auto& a) { return a.agent_seed == agent_seed; });
}

std::size_t OutlierReport::flag_count() const {
  std::size_t n = 0;
  for (const auto& a : agents) n += a.flags.size();
  return n;
}

OutlierReport detect_outliers(const AgentFeatureMatrix& m, const OutlierOptions& options) {
  if (m.rows() < 3) throw InsufficientData("outlier detection needs at least 3 agents");
  OutlierReport report;
  report.z_threshold = options.z_threshold;
  report.random_reference = options.worse_than_random;
  report.measured_random_mean = options.measured_random_mean;

  std::map<std::uint64_t, std::vector<OutlierFlag>> flags;
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    const std::string& name = m.features[static_cast<std::size_t>(c)];
    const Stats s = column_stats(m, c);
    const bool is_len = name.ends_with("/mean_len");
    const bool is_pref = name.ends_with("/pref");

    std::size_t above = 0;
    std::size_t below = 0;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      if (m.missing(r, c)) continue;
      above += m.values(r, c) > 0.5;
      below += m.values(r, c) < 0.5;
    }

    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      if (m.missing(r, c)) continue;
      const double v = m.values(r, c);
      const std::uint64_t agent = m.agents[static_cast<std::size_t>(r)];
      if (s.sd > 0.0) {
        const double z = (v - s.mean) / s.sd;
        if (std::abs(z) > options.z_threshold)
          flags[agent].push_back({OutlierFlag::Kind::ZScore, name,
                                  {{"value", v}, {"z", z}, {"mean", s.mean}, {"sd", s.sd}}});
      }
      if (is_len && v >= options.worse_than_random) {
        nlohmann::json ev = {{"mean_len", v}, {"random_reference", options.worse_than_random}};
        if (options.measured_random_mean) ev["measured_random_mean"] = *options.measured_random_mean;
        flags[agent].push_back({OutlierFlag::Kind::WorseThanRandom, name, ev});
      }
      if (is_pref && s.n >= 2) {
        const bool high = v > 0.5;
        const bool low = v < 0.5;
        const std::size_t mine = high ? above : below;
        const std::size_t other = high ? below : above;
        const double other_frac = static_cast<double>(other) / static_cast<double>(s.n - 1);
        if ((high || low) && mine == 1 && other_frac >= options.unique_side_fraction)
          flags[agent].push_back({OutlierFlag::Kind::UniquePreference, name,
                                  {{"value", v},
                                   {"side", high ? "above_0.5" : "below_0.5"},
                                   {"others_on_other_side", other},
                                   {"others", s.n - 1}}});
      }
    }
  }
  for (auto& [agent, f] : flags) report.agents.push_back({agent, std::move(f)});
  return report;
}

TransitivityResult transitivity_check(const AgentFeatureMatrix& m, std::span<const PreferenceTriple> triples) {
  TransitivityResult out;
  for (const auto& t : triples) {
    const auto ab = m.column(pref_feature(t.ab));
    const auto bc = m.column(pref_feature(t.bc));
    const auto ca = m.column(pref_feature(t.ca));
    if (!ab || !bc || !ca) {
      out.skipped.push_back(t.label);
      continue;
    }
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      if (m.missing(r, *ab) || m.missing(r, *bc) || m.missing(r, *ca)) continue;
      const std::array<double, 3> p{m.values(r, *ab), m.values(r, *bc), m.values(r, *ca)};
      const bool forward = p[0] > 0.5 && p[1] > 0.5 && p[2] > 0.5;
      const bool reverse = p[0] < 0.5 && p[1] < 0.5 && p[2] < 0.5;
      if (forward || reverse) out.violations.push_back({m.agents[static_cast<std::size_t>(r)], t.label, p, reverse});
    }
  }
  return out;
}

void merge_transitivity(OutlierReport& report, const TransitivityResult& t) {
  for (const auto& v : t.violations) {
    auto it = std::find_if(report.agents.begin(), report.agents.end(),
                           [&](const auto& a) { return a.agent_seed == v.agent_seed; });
    if (it == report.agents.end()) {
      report.agents.push_back({v.agent_seed, {}});
      it = std::prev(report.agents.end());
    }
    it->flags.push_back({OutlierFlag::Kind::TransitivityViolation, v.label,
                         {{"prefs", v.prefs}, {"direction", v.reverse ? "reverse" : "forward"}}});
  }
  std::sort(report.agents.begin(), report.agents.end(),
            [](const auto& a, const auto& b) { return a.agent_seed < b.agent_seed; });
}

nlohmann::json outlier_report_json(const OutlierReport& report) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& a : report.agents)
    for (const auto& f : a.flags) {
      nlohmann::json ev = f.evidence;
      ev["feature"] = f.feature;
      out.push_back({{"agent_seed", a.agent_seed}, {"flag_type", flag_name(f.kind)}, {"evidence", ev}});
    }
  return out;
}

std::vector<ScatterPoint> scatter_points(const AgentFeatureMatrix& m, std::string_view scenario) {
  const auto cp = m.column(pref_feature(scenario));
  const auto cl = m.column(len_feature(scenario));
  std::vector<ScatterPoint> pts;
  if (!cp || !cl) return pts;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    if (m.missing(r, *cp) || m.missing(r, *cl)) continue;
    pts.push_back({m.agents[static_cast<std::size_t>(r)], m.values(r, *cp), m.values(r, *cl)});
  }
  return pts;
}

std::string scatter_svg(std::span<const ScatterPoint> points, std::string_view title) {
  constexpr double kSize = 600.0;
  constexpr double kLeft = 60.0;
  constexpr double kRight = 570.0;
  constexpr double kTop = 40.0;
  constexpr double kBottom = 540.0;
  auto px = [&](double len) { return kLeft + std::min(len, 100.0) / 100.0 * (kRight - kLeft); };
  auto py = [&](double pref) { return kBottom - pref * (kBottom - kTop); };

  std::ostringstream os;
  os << std::setprecision(10);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"600\" height=\"600\" viewBox=\"0 0 " << kSize << ' '
     << kSize << "\">\n";
  os << "<rect width=\"600\" height=\"600\" fill=\"white\"/>\n";
  os << "<text x=\"300\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
  os << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << kRight - kLeft << "\" height=\""
     << kBottom - kTop << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double len = 20.0 * i;
    const double pref = 0.2 * i;
    os << "<line x1=\"" << px(len) << "\" y1=\"" << kBottom << "\" x2=\"" << px(len) << "\" y2=\"" << kBottom + 5
       << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << px(len) << "\" y=\"" << kBottom + 20 << "\" text-anchor=\"middle\" font-size=\"11\">"
       << len << "</text>\n";
    os << "<line x1=\"" << kLeft - 5 << "\" y1=\"" << py(pref) << "\" x2=\"" << kLeft << "\" y2=\"" << py(pref)
       << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << kLeft - 8 << "\" y=\"" << py(pref) + 4 << "\" text-anchor=\"end\" font-size=\"11\">"
       << std::fixed << std::setprecision(1) << pref << std::defaultfloat << std::setprecision(10) << "</text>\n";
  }
  for (double ref : {0.2, 0.8})
    os << "<line class=\"reference\" x1=\"" << kLeft << "\" y1=\"" << py(ref) << "\" x2=\"" << kRight << "\" y2=\""
       << py(ref) << "\" stroke=\"grey\" stroke-dasharray=\"4 4\"/>\n";
  os << "<text x=\"" << (kLeft + kRight) / 2 << "\" y=\"" << kBottom + 45
     << "\" text-anchor=\"middle\" font-size=\"12\">mean episode length</text>\n";
  os << "<text x=\"16\" y=\"" << (kTop + kBottom) / 2 << "\" transform=\"rotate(-90 16 " << (kTop + kBottom) / 2
     << ")\" text-anchor=\"middle\" font-size=\"12\">fraction choosing first object</text>\n";
  for (const auto& p : points)
    os << "<circle data-agent=\"" << p.agent_seed << "\" cx=\"" << px(p.mean_len) << "\" cy=\"" << py(p.pref)
       << "\" r=\"4\" fill=\"steelblue\" fill-opacity=\"0.7\"/>\n";
  os << "</svg>\n";
  return os.str();
}

std::size_t emit_scatter(const AgentFeatureMatrix& m, std::string_view scenario, const std::filesystem::path& stem) {
  const auto pts = scatter_points(m, scenario);
  std::ostringstream csv;
  csv << "agent_seed,pref,mean_len\n";
  for (const auto& p : pts) csv << p.agent_seed << ',' << format_double(p.pref) << ',' << format_double(p.mean_len) << '\n';
  write_file_atomic(stem.string() + ".csv", csv.str());
  write_file_atomic(stem.string() + ".svg", scatter_svg(pts, scenario));
  return pts.size();
}

}  // namespace mazelab
