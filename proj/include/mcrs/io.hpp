#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mcrs/errors.hpp"
#include "mcrs/likelihood.hpp"
#include "mcrs/linalg.hpp"
#include "mcrs/model.hpp"

namespace mcrs {

inline constexpr int kModelFormatVersion = 1;

/// A delimited series: numeric columns, an optional regime column (1-based
/// labels in the file) and an optional date column passed through untouched.
struct SeriesData {
  std::vector<std::string> names;
  Matrix x;
  std::optional<RegimeSequence> regimes;
  std::optional<std::string> date_name;
  std::vector<std::string> dates;
};

namespace detail {

inline std::string trim(std::string s) {
  auto issp = [](unsigned char c) { return std::isspace(c) != 0; };
  s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), issp));
  s.erase(std::find_if_not(s.rbegin(), s.rend(), issp).base(), s.end());
  return s;
}

inline std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_number(const std::string& cell, std::size_t row, const std::string& column) {
  double v = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (cell.empty() || ec != std::errc() || ptr != last || !std::isfinite(v)) {
    throw DataError("row " + std::to_string(row) + ", column '" + column + "': '" + cell + "' is not a finite number");
  }
  return v;
}

inline bool is_date_column(const std::string& name) {
  const std::string n = lower(name);
  return n == "date" || n == "observation_date" || n == "sasdate" || n == "time";
}

inline std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace detail

inline SeriesData parse_series_csv(std::istream& in) {
  std::string line;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    if (!detail::trim(line).empty()) {
      header = detail::split_csv_line(line);
      break;
    }
  }
  if (header.empty()) throw DataError("series file: missing header row");
  SeriesData sd;
  std::optional<std::size_t> regime_col, date_col;
  std::vector<std::size_t> value_cols;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (detail::lower(header[c]) == "regime") {
      regime_col = c;
    } else if (!date_col && detail::is_date_column(header[c])) {
      date_col = c;
      sd.date_name = header[c];
    } else {
      value_cols.push_back(c);
      sd.names.push_back(header[c]);
    }
  }
  if (value_cols.empty()) throw DataError("series file: no value columns");
  std::vector<std::vector<double>> rows;
  std::vector<std::size_t> labels;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size()) {
      throw DataError("row " + std::to_string(row) + ": expected " + std::to_string(header.size()) + " cells, found " +
                      std::to_string(cells.size()));
    }
    std::vector<double> vals;
    for (std::size_t c : value_cols) vals.push_back(detail::parse_number(cells[c], row, header[c]));
    rows.push_back(std::move(vals));
    if (date_col) sd.dates.push_back(cells[*date_col]);
    if (regime_col) {
      const double g = detail::parse_number(cells[*regime_col], row, header[*regime_col]);
      if (g < 1.0 || g != std::floor(g)) throw DataError("row " + std::to_string(row) + ": regime labels must be integers >= 1");
      labels.push_back(static_cast<std::size_t>(g) - 1);
    }
  }
  if (rows.empty()) throw DataError("series file: no data rows");
  sd.x.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(value_cols.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < value_cols.size(); ++c) {
      sd.x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
  }
  if (regime_col) sd.regimes = RegimeSequence{labels};
  return sd;
}

inline SeriesData read_series_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  return parse_series_csv(in);
}

inline void write_series_csv(std::ostream& out, const SeriesData& sd) {
  std::vector<std::string> head;
  if (sd.date_name) head.push_back(*sd.date_name);
  head.insert(head.end(), sd.names.begin(), sd.names.end());
  if (sd.regimes) head.emplace_back("regime");
  for (std::size_t c = 0; c < head.size(); ++c) out << (c ? "," : "") << head[c];
  out << "\n";
  for (Eigen::Index t = 0; t < sd.x.rows(); ++t) {
    bool first = true;
    auto sep = [&] {
      if (!first) out << ",";
      first = false;
    };
    if (sd.date_name) {
      sep();
      out << sd.dates[static_cast<std::size_t>(t)];
    }
    for (Eigen::Index c = 0; c < sd.x.cols(); ++c) {
      sep();
      out << detail::format_double(sd.x(t, c));
    }
    if (sd.regimes) {
      sep();
      out << sd.regimes->labels[static_cast<std::size_t>(t)] + 1;
    }
    out << "\n";
  }
}

/// Regimes file: one 1-based label per row, optional header; a column named
/// "regime" is used when several columns are present.
inline RegimeSequence read_regimes_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::string line;
  std::vector<std::size_t> labels;
  std::optional<std::size_t> col;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (!col) {
      const auto it = std::find_if(cells.begin(), cells.end(), [](const std::string& c) { return detail::lower(c) == "regime"; });
      if (it != cells.end()) {
        col = static_cast<std::size_t>(it - cells.begin());
        continue;
      }
      if (cells.size() != 1) throw DataError("regimes file: header with a 'regime' column required for multi-column files");
      col = 0;
    }
    if (*col >= cells.size()) throw DataError("regimes file: row " + std::to_string(row) + " is too short");
    const double g = detail::parse_number(cells[*col], row, "regime");
    if (g < 1.0 || g != std::floor(g)) throw DataError("regimes file: row " + std::to_string(row) + ": labels must be integers >= 1");
    labels.push_back(static_cast<std::size_t>(g) - 1);
  }
  if (labels.empty()) throw DataError("regimes file: no labels");
  return RegimeSequence{labels};
}

inline void write_regimes_csv(std::ostream& out, const RegimeSequence& v) {
  out << "regime\n";
  for (std::size_t g : v.labels) out << g + 1 << "\n";
}

// ---------------------------------------------------------------------------
// Model documents

inline nlohmann::json model_to_json(const RegimeModel& m) {
  using nlohmann::json;
  json doc;
  doc["format_version"] = kModelFormatVersion;
  doc["num_regimes"] = m.num_regimes;
  doc["dim"] = m.dim;
  json regimes = json::array();
  for (std::size_t g = 0; g < m.num_regimes; ++g) {
    json r;
    r["orders"] = m.orders[g];
    json margins = json::array();
    for (const auto& e : m.margins[g]) {
      margins.push_back({{"location", e.location},
                         {"scale", e.scale},
                         {"left_tailweight", e.left_tailweight},
                         {"right_tailweight", e.right_tailweight}});
    }
    r["margins"] = margins;
    r["pacf"] = m.pacf[g];
    std::vector<double> lower;
    for (Eigen::Index i = 1; i < m.contemp[g].rows(); ++i) {
      for (Eigen::Index j = 0; j < i; ++j) lower.push_back(m.contemp[g](i, j));
    }
    r["contemp_lower"] = lower;
    regimes.push_back(r);
  }
  doc["regimes"] = regimes;
  doc["switch_rho"] = m.switch_rho;
  doc["chain"]["initial"] = std::vector<double>(m.chain.initial.data(), m.chain.initial.data() + m.chain.initial.size());
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.chain.transition.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(m.chain.transition.cols()));
    for (Eigen::Index c = 0; c < m.chain.transition.cols(); ++c) row[static_cast<std::size_t>(c)] = m.chain.transition(r, c);
    rows.push_back(row);
  }
  doc["chain"]["transition"] = rows;
  return doc;
}

/// Parse and validate a model document; any structural or invariant
/// violation (including infeasible window patterns) is a DataError.
inline RegimeModel model_from_json(const nlohmann::json& doc) {
  RegimeModel m;
  try {
    if (doc.at("format_version").get<int>() != kModelFormatVersion) {
      throw DataError("model file: unsupported format_version");
    }
    m.num_regimes = doc.at("num_regimes").get<std::size_t>();
    m.dim = doc.at("dim").get<std::size_t>();
    const auto& regimes = doc.at("regimes");
    if (regimes.size() != m.num_regimes) throw DataError("model file: regime entries differ from num_regimes");
    for (const auto& r : regimes) {
      m.orders.push_back(r.at("orders").get<std::vector<std::size_t>>());
      std::vector<MarginParams> margins;
      for (const auto& e : r.at("margins")) {
        margins.push_back({e.at("location").get<double>(), e.at("scale").get<double>(),
                           e.at("left_tailweight").get<double>(), e.at("right_tailweight").get<double>()});
      }
      m.margins.push_back(margins);
      m.pacf.push_back(r.at("pacf").get<std::vector<std::vector<double>>>());
      const auto lower = r.at("contemp_lower").get<std::vector<double>>();
      if (lower.size() != m.dim * (m.dim - 1) / 2) throw DataError("model file: contemp_lower has the wrong length");
      const auto n = static_cast<Eigen::Index>(m.dim);
      Matrix c = Matrix::Identity(n, n);
      std::size_t pos = 0;
      for (Eigen::Index i = 1; i < n; ++i) {
        for (Eigen::Index j = 0; j < i; ++j) c(i, j) = c(j, i) = lower[pos++];
      }
      m.contemp.push_back(c);
    }
    m.switch_rho = doc.at("switch_rho").get<std::vector<double>>();
    const auto init = doc.at("chain").at("initial").get<std::vector<double>>();
    const auto trans = doc.at("chain").at("transition").get<std::vector<std::vector<double>>>();
    m.chain.initial = Eigen::Map<const Vector>(init.data(), static_cast<Eigen::Index>(init.size()));
    m.chain.transition.resize(static_cast<Eigen::Index>(trans.size()), static_cast<Eigen::Index>(trans.size()));
    for (std::size_t r = 0; r < trans.size(); ++r) {
      if (trans[r].size() != trans.size()) throw DataError("model file: transition matrix is not square");
      for (std::size_t c = 0; c < trans.size(); ++c) {
        m.chain.transition(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = trans[r][c];
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("model file: ") + e.what());
  }
  try {
    m.validate();
    WindowPatterns check(m);
  } catch (const DataError&) {
    throw;
  } catch (const Error& e) {
    throw DataError(std::string("model file: ") + e.what());
  }
  return m;
}

inline void write_model(const std::string& path, const RegimeModel& m) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << model_to_json(m).dump(2) << "\n";
}

inline RegimeModel read_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("model file '" + path + "': " + e.what());
  }
  return model_from_json(doc);
}

}  // namespace mcrs
