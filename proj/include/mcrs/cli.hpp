#pragma once

#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mcrs/errors.hpp"
#include "mcrs/estimate.hpp"
#include "mcrs/fbinfer.hpp"
#include "mcrs/io.hpp"
#include "mcrs/simulate.hpp"

namespace mcrs {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitNumerical = 3 };

/// First difference of natural logs ("diff-log") or plain first difference ("diff").
inline SeriesData transform_values(const SeriesData& in, const std::string& mode) {
  if (mode != "diff-log" && mode != "diff") throw UsageError("transform: unknown mode '" + mode + "'");
  if (in.x.rows() < 2) throw DataError("transform: need at least two rows");
  if (mode == "diff-log") {
    for (Eigen::Index t = 0; t < in.x.rows(); ++t) {
      for (Eigen::Index c = 0; c < in.x.cols(); ++c) {
        if (!(in.x(t, c) > 0.0)) {
          throw DataError("transform: row " + std::to_string(t + 1) + ", column '" + in.names[static_cast<std::size_t>(c)] +
                          "' is not positive");
        }
      }
    }
  }
  SeriesData out;
  out.names = in.names;
  out.date_name = in.date_name;
  if (in.date_name) out.dates.assign(in.dates.begin() + 1, in.dates.end());
  const Eigen::Index T = in.x.rows() - 1;
  out.x.resize(T, in.x.cols());
  for (Eigen::Index t = 0; t < T; ++t) {
    for (Eigen::Index c = 0; c < in.x.cols(); ++c) {
      out.x(t, c) = mode == "diff-log" ? std::log(in.x(t + 1, c)) - std::log(in.x(t, c)) : in.x(t + 1, c) - in.x(t, c);
    }
  }
  if (in.regimes) out.regimes = RegimeSequence{{in.regimes->labels.begin() + 1, in.regimes->labels.end()}};
  return out;
}

namespace detail {

/// "2", "0-3" or "0,1,3".
inline std::vector<std::size_t> parse_range(const std::string& spec) {
  std::vector<std::size_t> out;
  std::stringstream ss(spec);
  std::string part;
  auto num = [&](const std::string& s) {
    std::size_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || p != s.data() + s.size()) throw UsageError("invalid range '" + spec + "'");
    return v;
  };
  while (std::getline(ss, part, ',')) {
    part = trim(part);
    const auto dash = part.find('-');
    if (dash == std::string::npos) {
      out.push_back(num(part));
    } else {
      const std::size_t lo = num(part.substr(0, dash)), hi = num(part.substr(dash + 1));
      if (hi < lo) throw UsageError("invalid range '" + spec + "'");
      for (std::size_t v = lo; v <= hi; ++v) out.push_back(v);
    }
  }
  if (out.empty()) throw UsageError("empty range '" + spec + "'");
  return out;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  return out;
}

inline nlohmann::json report_json(const FitReport& r, const std::string& mode, std::uint64_t seed) {
  nlohmann::json j;
  j["mode"] = mode;
  j["seed"] = seed;
  j["likelihood"] = r.likelihood;
  j["loglik"] = r.loglik;
  j["aic"] = r.aic;
  j["params"] = {{"margins", r.params.margins}, {"pacf", r.params.pacf}, {"contemp", r.params.contemp},
                 {"switch_rho", r.params.switch_rho}, {"chain", r.params.chain}, {"total", r.params.total()}};
  j["iterations"] = r.iterations;
  j["converged"] = r.converged;
  j["oscillated"] = r.oscillated;
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : r.stages) {
    stages.push_back({{"name", s.name}, {"initial_loglik", s.initial_loglik}, {"loglik", s.loglik},
                      {"converged", s.converged}, {"evaluations", s.evaluations}});
  }
  j["stages"] = stages;
  j["warnings"] = r.warnings;
  return j;
}

}  // namespace detail

/**
 * Entry point for the command-line tool. Returns the process exit status:
 * 0 success, 1 usage, 2 data, 3 numerical failure.
 */
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Regime-switching Gaussian-copula time series: transform, simulate, fit, infer, scan"};
  app.require_subcommand(1);

  std::string input, output, model_path, regimes_path, mode, order = "1", num_regimes;
  std::size_t tau = 0, nu = 3, length = 0;
  double xi = 0.8;
  std::uint64_t seed = 1;
  int max_iter = 20;

  auto* transform = app.add_subcommand("transform", "First-difference log transform of a series file");
  transform->add_option("--input", input, "Input series CSV")->required();
  transform->add_option("--output", output, "Output series CSV")->required();
  transform->add_option("--mode", mode, "diff-log (default) or diff");

  auto* simulate = app.add_subcommand("simulate", "Simulate a series from a model file");
  simulate->add_option("--model", model_path, "Model JSON")->required();
  simulate->add_option("--output", output, "Output series CSV (with regime column)")->required();
  simulate->add_option("--length", length, "Number of time points")->required();
  simulate->add_option("--seed", seed, "Random seed");
  simulate->add_option("--regimes", regimes_path, "Also write the regime path to this file");

  auto* fit = app.add_subcommand("fit", "Fit a model to a series");
  fit->add_option("--input", input, "Input series CSV")->required();
  fit->add_option("--output", output, "Output model JSON")->required();
  fit->add_option("--regimes", regimes_path, "Regime labels file (external mode)");
  fit->add_option("--num-regimes", num_regimes, "Number of regimes");
  fit->add_option("--order", order, "Within-regime AR order for every variable and regime");
  fit->add_option("--mode", mode, "external, multistage or iterative");
  fit->add_option("--tau", tau, "Smoothing span for dating (iterative)");
  fit->add_option("--nu", nu, "Confirmation run length (iterative)");
  fit->add_option("--xi", xi, "Threshold probability (iterative)");
  fit->add_option("--seed", seed, "Seed recorded in the report");
  fit->add_option("--max-iter", max_iter, "Maximum iterations (iterative)");

  auto* infer = app.add_subcommand("infer", "Smoothed regime probabilities and dated regimes");
  infer->add_option("--input", input, "Input series CSV")->required();
  infer->add_option("--model", model_path, "Model JSON")->required();
  infer->add_option("--output", output, "Output probabilities CSV")->required();
  infer->add_option("--regimes", regimes_path, "Also write the dated regimes to this file");
  infer->add_option("--tau", tau, "Smoothing span");
  infer->add_option("--nu", nu, "Confirmation run length");
  infer->add_option("--xi", xi, "Threshold probability");

  auto* scan = app.add_subcommand("scan", "AIC table over orders and regime counts");
  scan->add_option("--input", input, "Input series CSV")->required();
  scan->add_option("--output", output, "Output AIC table CSV")->required();
  scan->add_option("--regimes", regimes_path, "Regime labels file (complete likelihood)");
  scan->add_option("--num-regimes", num_regimes, "Regime counts, e.g. 1-3");
  scan->add_option("--order", order, "Orders, e.g. 0-2");
  scan->add_option("--seed", seed, "Seed (scans are deterministic)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    auto load_regimes = [&](const SeriesData& sd) -> std::optional<RegimeSequence> {
      if (!regimes_path.empty()) {
        RegimeSequence v = read_regimes_csv(regimes_path);
        if (v.size() != static_cast<std::size_t>(sd.x.rows())) throw DataError("regimes file length differs from the series");
        return v;
      }
      return sd.regimes;
    };
    auto update_config = [&] {
      const UpdateConfig cfg{tau, nu, xi};
      try {
        cfg.validate();
      } catch (const DomainError& e) {
        throw UsageError(e.what());
      }
      return cfg;
    };
    auto regime_count = [](const RegimeSequence& v) {
      std::size_t g = 0;
      for (std::size_t l : v.labels) g = std::max(g, l + 1);
      return g;
    };

    if (*transform) {
      const SeriesData sd = read_series_csv(input);
      auto f = detail::open_out(output);
      write_series_csv(f, transform_values(sd, mode.empty() ? "diff-log" : mode));
      return kExitOk;
    }

    if (*simulate) {
      if (length == 0) throw UsageError("simulate: --length must be positive");
      const RegimeModel m = read_model(model_path);
      const SimOutput sim = sample_series(m, length, seed);
      SeriesData sd;
      for (std::size_t i = 0; i < m.dim; ++i) sd.names.push_back("x" + std::to_string(i + 1));
      sd.x = sim.x;
      sd.regimes = sim.v;
      auto f = detail::open_out(output);
      write_series_csv(f, sd);
      if (!regimes_path.empty()) {
        auto r = detail::open_out(regimes_path);
        write_regimes_csv(r, sim.v);
      }
      return kExitOk;
    }

    if (*fit) {
      const SeriesData sd = read_series_csv(input);
      const auto d = static_cast<std::size_t>(sd.x.cols());
      const std::string fit_mode = mode.empty() ? "external" : mode;
      const std::size_t k = detail::parse_range(order).front();
      const auto v = load_regimes(sd);
      FitReport rep;
      if (fit_mode == "external") {
        if (!v) throw UsageError("fit: external mode needs --regimes or a regime column");
        const std::size_t G = num_regimes.empty() ? regime_count(*v) : detail::parse_range(num_regimes).front();
        if (G < regime_count(*v)) throw UsageError("fit: --num-regimes is smaller than the labels in the regimes");
        rep = fit_with_regimes(sd.x, *v, uniform_orders(G, d, k));
      } else if (fit_mode == "multistage" || fit_mode == "iterative") {
        const std::size_t G = num_regimes.empty() ? 2 : detail::parse_range(num_regimes).front();
        if (G == 0) throw UsageError("fit: --num-regimes must be positive");
        if (fit_mode == "multistage") {
          rep = fit_multistage(sd.x, G, uniform_orders(G, d, k));
        } else {
          if (tau > k + 1) throw UsageError("fit: --tau exceeds the Markov order");
          if (max_iter < 1) throw UsageError("fit: --max-iter must be positive");
          rep = fit_iterative(sd.x, G, uniform_orders(G, d, k), update_config(), max_iter);
        }
      } else {
        throw UsageError("fit: unknown mode '" + fit_mode + "'");
      }
      write_model(output, rep.model);
      out << detail::report_json(rep, fit_mode, seed).dump(2) << "\n";
      return kExitOk;
    }

    if (*infer) {
      const SeriesData sd = read_series_csv(input);
      const RegimeModel m = read_model(model_path);
      if (static_cast<std::size_t>(sd.x.cols()) != m.dim) throw DataError("infer: series and model differ in dimension");
      if (tau > m.markov_order()) throw UsageError("infer: --tau exceeds the Markov order of the model");
      const UpdateConfig cfg = update_config();
      const Smoother s = smooth(emission_table(sd.x, m), m.chain);
      const Matrix p = run_prob(s, tau);
      const RegimeSequence v = date_regimes(p, cfg);
      auto f = detail::open_out(output);
      f << "t";
      for (std::size_t g = 0; g < m.num_regimes; ++g) f << ",p" << g + 1;
      f << ",regime\n";
      for (Eigen::Index t = 0; t < p.rows(); ++t) {
        f << t + 1;
        for (Eigen::Index g = 0; g < p.cols(); ++g) f << "," << detail::format_double(p(t, g));
        f << "," << v.labels[static_cast<std::size_t>(t)] + 1 << "\n";
      }
      if (!regimes_path.empty()) {
        auto r = detail::open_out(regimes_path);
        write_regimes_csv(r, v);
      }
      out << nlohmann::json{{"loglik", s.loglik}, {"switches", partition_segments(v).switch_count()}}.dump() << "\n";
      return kExitOk;
    }

    if (*scan) {
      const SeriesData sd = read_series_csv(input);
      const auto v = load_regimes(sd);
      const auto orders = detail::parse_range(order);
      const auto regimes = num_regimes.empty() ? (v ? std::vector<std::size_t>{regime_count(*v)} : std::vector<std::size_t>{1, 2})
                                               : detail::parse_range(num_regimes);
      const auto cells = aic_scan(sd.x, orders, regimes, v);
      auto f = detail::open_out(output);
      f << "regimes,order,loglik,params,aic,status\n";
      for (const auto& c : cells) {
        std::string status = c.status;
        std::replace(status.begin(), status.end(), ',', ';');
        f << c.regimes << "," << c.order << "," << detail::format_double(c.loglik) << "," << c.params << ","
          << detail::format_double(c.aic) << "," << status << "\n";
      }
      return kExitOk;
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const InsufficientDataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const ShapeError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const Error& e) {
    err << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitUsage;
}

}  // namespace mcrs
