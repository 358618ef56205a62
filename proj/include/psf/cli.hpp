#pragma once

/**
 * @file
 * @brief The design, simulate and report subcommands.
 *
 * Each command returns a process exit code and reports errors on `err`.
 */

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "psf/config.hpp"
#include "psf/errors.hpp"
#include "psf/filter.hpp"
#include "psf/io.hpp"
#include "psf/plant.hpp"
#include "psf/sim.hpp"

namespace psf {

enum ExitCode : int {
  kExitOk                  = 0,
  kExitConfig              = 1,
  kExitDesign              = 2,
  kExitInitialInfeasible   = 3,
  kExitWarmstartInfeasible = 4,
  kExitReport              = 5,
};

class ReportError : public Error
{
public:
  explicit ReportError(const std::string & what) : Error(what) {}
};

/// Unusable design artifact: invalid certificates or a model mismatch.
class DesignArtifactError : public Error
{
public:
  explicit DesignArtifactError(const std::string & what) : Error(what) {}
};

namespace detail {

inline void write_file(const std::filesystem::path & path, const std::string & text)
{
  std::ofstream out(path, std::ios::binary);
  if (!out) { throw ConfigError(path.string() + ": cannot write file"); }
  out << text;
  if (!out) { throw ConfigError(path.string() + ": write failed"); }
}

inline std::string fixed(double v, int digits = 3)
{
  std::ostringstream os;
  os << std::setprecision(digits) << v;
  return os.str();
}

/// Seed from PSF_SEED when set.
inline std::optional<std::uint64_t> seed_override()
{
  const char * env = std::getenv("PSF_SEED");
  if (env == nullptr || *env == '\0') { return std::nullopt; }
  const std::string s(env);
  if (s.find_first_not_of("0123456789") != std::string::npos || s.size() > 19) {
    throw ConfigError("PSF_SEED: expected a nonnegative integer, got \"" + s + "\"");
  }
  return std::stoull(s);
}

inline void print_certificates(std::ostream & out, const DesignCertificates & c)
{
  out << "  rpi slack                 " << c.rpi_slack << '\n'
      << "  terminal input slack      " << c.terminal_input_slack << '\n'
      << "  terminal state slack      " << c.terminal_state_slack << '\n'
      << "  nesting slack             " << c.nesting_slack << '\n'
      << "  lyapunov residual         " << c.lyapunov_residual << '\n'
      << "  lyapunov residual (Q)     " << c.lyapunov_residual_q_only << '\n'
      << "  riccati residual          " << c.riccati_residual << '\n'
      << "  closed-loop spectral rad. " << c.closed_loop_spectral_radius << '\n'
      << "  rpi iterations            " << c.rpi_iterations << '\n';
}

inline FilterDesign load_design(const std::string & path)
{
  const json doc = parse_json_text(read_text_file(path), path);
  FilterDesign d;
  try {
    d = design_from_json(doc);
  } catch (const json::exception & e) {
    throw ConfigError(path + ": " + e.what());
  } catch (const ConfigError & e) {
    throw ConfigError(path + ": " + e.what());
  } catch (const std::invalid_argument & e) {
    throw ConfigError(path + ": " + e.what());
  }
  const auto failures = d.certificates.failures();
  if (!failures.empty()) { throw DesignArtifactError(path + ": design certificate failed: " + failures.front()); }
  return d;
}

inline void check_design_matches(const FilterDesign & d, const RunConfig & cfg)
{
  const LinearSystem model = design_model(cfg);
  if (d.nx() != model.nx() || d.nu() != model.nu()) {
    throw DesignArtifactError("design dimensions do not match the configured system");
  }
  const double scale = 1.0 + std::max(model.A.cwiseAbs().maxCoeff(), model.B.cwiseAbs().maxCoeff());
  const double diff  = std::max((d.sys.A - model.A).cwiseAbs().maxCoeff(), (d.sys.B - model.B).cwiseAbs().maxCoeff());
  if (diff > 1e-9 * scale) { throw DesignArtifactError("design model (A, B) does not match the configured system"); }
  if (!(d.W == cfg.W) || !(d.X == cfg.X) || !(d.U == cfg.U)) {
    throw DesignArtifactError("design sets X, U, W do not match the configuration");
  }
}

}  // namespace detail

/// psf design -c config.json -o design.json
inline int cmd_design(const std::string & config_path, const std::string & out_path, std::ostream & out, std::ostream & err)
{
  RunConfig cfg;
  try {
    cfg = load_config(config_path);
  } catch (const ConfigError & e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  FilterDesign d;
  try {
    d = design_from_config(cfg);
  } catch (const NotPositiveDefiniteError & e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NoSteadyStateError & e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const Error & e) {
    err << "design failed: " << e.what() << '\n';
    return kExitDesign;
  } catch (const std::invalid_argument & e) {
    err << "design failed: " << e.what() << '\n';
    return kExitDesign;
  }
  out << "design ok: n=" << d.nx() << " m=" << d.nu() << " N=" << d.N << " |Xf|=" << d.Xf.num_rows()
      << " rows |Zf|=" << d.Zf.num_rows() << " rows\n";
  detail::print_certificates(out, d.certificates);
  if (cfg.system.model == SystemModel::Vehicle && cfg.x_bar && cfg.u_bar) {
    const VehiclePlant plant(cfg.system.vehicle, cfg.system.v_op, cfg.system.dt);
    const double frac = linearization_coverage(plant, d.sys, d.W, cfg.coverage_scale * *cfg.x_bar,
                                               cfg.coverage_scale * *cfg.u_bar, 2000, cfg.experiment.seed);
    out << "  W covers " << detail::fixed(100.0 * frac, 4) << "% of sampled linearization residuals\n";
  }
  try {
    detail::write_file(out_path, to_json(d).dump(1) + "\n");
  } catch (const ConfigError & e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitOk;
}

/// psf simulate -c config.json -d design.json -o outdir/
/// An empty `out_dir` falls back to the config's output directory.
inline int cmd_simulate(const std::string & config_path, const std::string & design_path, std::string out_dir,
                        std::ostream & out, std::ostream & err)
{
  RunConfig cfg;
  FilterDesign design;
  try {
    cfg = load_config(config_path);
    if (const auto seed = detail::seed_override()) { cfg.experiment.seed = *seed; }
    design = detail::load_design(design_path);
    detail::check_design_matches(design, cfg);
    if (out_dir.empty()) { out_dir = cfg.output_directory; }
  } catch (const ConfigError & e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DesignArtifactError & e) {
    err << "design error: " << e.what() << '\n';
    return kExitDesign;
  } catch (const Error & e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  }

  std::optional<VehiclePlant> plant;
  NonlinearStep nonlinear;
  if (cfg.system.model == SystemModel::Vehicle) {
    plant.emplace(cfg.system.vehicle, cfg.system.v_op, cfg.system.dt);
    nonlinear = [&plant](const Eigen::VectorXd & x, const Eigen::VectorXd & u) { return plant->step(x, u); };
  }

  std::vector<TrajectoryLog> logs;
  try {
    logs = run_experiments(run_specs(cfg), design, nonlinear, cfg.experiment.threads);
  } catch (const InitialInfeasibleError & e) {
    err << "initial state infeasible: " << e.what() << '\n';
    return kExitInitialInfeasible;
  } catch (const WarmstartInfeasibleError & e) {
    err << "warmstart infeasible: " << e.what() << '\n';
    return kExitWarmstartInfeasible;
  } catch (const std::exception & e) {
    err << "simulation failed: " << e.what() << '\n';
    return kExitWarmstartInfeasible;
  }

  try {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) { throw ConfigError(out_dir + ": cannot create directory (" + ec.message() + ")"); }
    for (const auto & log : logs) {
      const std::string name = run_name(log.spec);
      detail::write_file(std::filesystem::path(out_dir) / (name + ".csv"), to_csv(log));
      const json summary = run_summary(log, design.with_rho(log.spec.rho));
      detail::write_file(std::filesystem::path(out_dir) / (name + ".json"), summary.dump(1) + "\n");
      const RunMetrics m = metrics(log);
      out << name << ": interventions=" << m.interventions << " max|x1|=" << detail::fixed(m.max_abs_py)
          << " |x_T|/|x_0|=" << detail::fixed(m.initial_norm > 0 ? m.final_norm / m.initial_norm : 0.0)
          << " w_outside_W=" << m.w_outside_W << " recoveries=" << m.recoveries << '\n';
    }
  } catch (const ConfigError & e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitOk;
}

namespace detail {

struct Series
{
  std::string label;
  std::vector<double> t;
  std::vector<double> y;
};

struct RunData
{
  json summary;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string & name, const std::string & file) const
  {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) { throw ReportError(file + ": missing column " + name); }
    return static_cast<std::size_t>(it - header.begin());
  }

  std::vector<double> values(const std::string & name, const std::string & file) const
  {
    const std::size_t c = column(name, file);
    std::vector<double> v;
    v.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      try {
        v.push_back(std::stod(rows[i].at(c)));
      } catch (const std::exception &) {
        throw ReportError(file + ": row " + std::to_string(i + 2) + ": bad value in column " + name);
      }
    }
    return v;
  }
};

inline std::vector<std::string> split_csv_line(const std::string & line)
{
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) { out.push_back(cell); }
  return out;
}

inline RunData read_run(const std::filesystem::path & json_path)
{
  RunData r;
  try {
    r.summary = json::parse(read_text_file(json_path.string()));
  } catch (const std::exception & e) {
    throw ReportError(json_path.string() + ": " + e.what());
  }
  for (const char * key : {"name", "rho", "plant", "seed", "metrics"}) {
    if (!r.summary.contains(key)) { throw ReportError(json_path.string() + ": missing field " + key); }
  }
  std::filesystem::path csv = json_path;
  csv.replace_extension(".csv");
  std::ifstream in(csv);
  if (!in) { throw ReportError(csv.string() + ": cannot open trajectory"); }
  std::string line;
  if (!std::getline(in, line)) { throw ReportError(csv.string() + ": empty file"); }
  r.header = split_csv_line(line);
  while (std::getline(in, line)) {
    if (line.empty()) { continue; }
    r.rows.push_back(split_csv_line(line));
    if (r.rows.back().size() != r.header.size()) {
      throw ReportError(csv.string() + ": row " + std::to_string(r.rows.size() + 1) + " has the wrong number of fields");
    }
  }
  for (const char * col : {"t", "x1", "du_norm", "V"}) { r.column(col, csv.string()); }
  return r;
}

inline std::string svg_escape(const std::string & s)
{
  std::string o;
  for (char c : s) {
    switch (c) {
    case '<': o += "&lt;"; break;
    case '>': o += "&gt;"; break;
    case '&': o += "&amp;"; break;
    default: o += c;
    }
  }
  return o;
}

/// Line chart; `hlines` are dashed horizontal reference lines.
inline std::string svg_line_chart(const std::string & title, const std::string & ylabel, const std::vector<Series> & series,
                                  const std::vector<double> & hlines = {})
{
  constexpr double W = 720, H = 420, L = 80, R = 170, T = 40, B = 50;
  double tmin = 0, tmax = 1, ymin = 0, ymax = 0;
  bool first = true;
  for (const auto & s : series) {
    for (std::size_t i = 0; i < s.t.size(); ++i) {
      if (first) {
        tmin = tmax = s.t[i];
        ymin = ymax = s.y[i];
        first = false;
      }
      tmin = std::min(tmin, s.t[i]);
      tmax = std::max(tmax, s.t[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  }
  for (double h : hlines) {
    ymin = std::min(ymin, h);
    ymax = std::max(ymax, h);
  }
  if (tmax <= tmin) { tmax = tmin + 1; }
  if (ymax <= ymin) {
    ymax += 0.5 * std::max(1e-12, std::abs(ymax));
    ymin -= 0.5 * std::max(1e-12, std::abs(ymin));
  }
  const double pad = 0.05 * (ymax - ymin);
  ymin -= pad;
  ymax += pad;
  const auto px = [&](double t) { return L + (t - tmin) / (tmax - tmin) * (W - L - R); };
  const auto py = [&](double y) { return T + (ymax - y) / (ymax - ymin) * (H - T - B); };

  static const char * colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"};
  std::ostringstream o;
  o << std::setprecision(6);
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << svg_escape(title) << "</text>\n";
  o << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << W - L - R << "\" height=\"" << H - T - B
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double yv = ymin + k * (ymax - ymin) / 4, tv = tmin + k * (tmax - tmin) / 4;
    o << "<text x=\"" << L - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << fixed(yv, 3) << "</text>\n";
    o << "<text x=\"" << px(tv) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">" << fixed(tv, 3) << "</text>\n";
  }
  o << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">t</text>\n";
  o << "<text x=\"16\" y=\"" << (T + H - B) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << (T + H - B) / 2
    << ")\">" << svg_escape(ylabel) << "</text>\n";
  for (double h : hlines) {
    o << "<line x1=\"" << L << "\" x2=\"" << W - R << "\" y1=\"" << py(h) << "\" y2=\"" << py(h)
      << "\" stroke=\"gray\" stroke-dasharray=\"6,4\"/>\n";
  }
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char * c = colors[k % std::size(colors)];
    o << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"1.2\" points=\"";
    for (std::size_t i = 0; i < series[k].t.size(); ++i) { o << px(series[k].t[i]) << ',' << py(series[k].y[i]) << ' '; }
    o << "\"/>\n";
    const double ly = T + 16 + 18 * static_cast<double>(k);
    o << "<line x1=\"" << W - R + 12 << "\" x2=\"" << W - R + 36 << "\" y1=\"" << ly - 4 << "\" y2=\"" << ly - 4 << "\" stroke=\"" << c
      << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << W - R + 42 << "\" y=\"" << ly << "\">" << svg_escape(series[k].label) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace detail

/// psf report -i outdir/ -o report/
inline int cmd_report(const std::string & in_dir, const std::string & out_dir, std::ostream & out, std::ostream & err)
{
  namespace fs = std::filesystem;
  try {
    if (!fs::is_directory(in_dir)) { throw ReportError(in_dir + ": not a directory"); }
    std::vector<fs::path> summaries;
    for (const auto & entry : fs::directory_iterator(in_dir)) {
      const auto & p = entry.path();
      if (p.extension() == ".json" && p.filename().string().rfind("run_", 0) == 0) { summaries.push_back(p); }
    }
    if (summaries.empty()) { throw ReportError(in_dir + ": no run summaries found"); }
    std::sort(summaries.begin(), summaries.end());

    std::map<std::string, std::vector<detail::RunData>> by_plant;
    for (const auto & p : summaries) {
      detail::RunData r = detail::read_run(p);
      by_plant[r.summary["plant"].get<std::string>()].push_back(std::move(r));
    }
    for (auto & [plant, runs] : by_plant) {
      std::sort(runs.begin(), runs.end(), [](const detail::RunData & a, const detail::RunData & b) {
        return std::make_pair(a.summary["rho"].get<double>(), a.summary["seed"].get<std::uint64_t>()) <
               std::make_pair(b.summary["rho"].get<double>(), b.summary["seed"].get<std::uint64_t>());
      });
    }

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) { throw ReportError(out_dir + ": cannot create directory (" + ec.message() + ")"); }

    std::ostringstream md;
    md << "# Safety filter runs\n\n";
    md << "| run | rho | plant | seed | max abs x1 | interventions | final/initial norm | decrease violations | "
          "w outside W | recoveries | fallbacks |\n";
    md << "|---|---|---|---|---|---|---|---|---|---|---|\n";
    for (const auto & [plant, runs] : by_plant) {
      std::vector<detail::Series> offset, intervention, value;
      std::vector<double> bounds;
      for (const auto & r : runs) {
        const std::string file  = r.summary["name"].get<std::string>() + ".csv";
        const std::string label = "rho=" + detail::fixed(r.summary["rho"].get<double>(), 6) +
                                  (runs.size() > 1 && r.summary["seed"] != runs.front().summary["seed"]
                                     ? " seed=" + std::to_string(r.summary["seed"].get<std::uint64_t>())
                                     : "");
        const std::vector<double> t = r.values("t", file);
        offset.push_back({label, t, r.values("x1", file)});
        intervention.push_back({label, t, r.values("du_norm", file)});
        value.push_back({label, t, r.values("V", file)});
        if (bounds.empty() && r.summary.contains("x1_bounds")) { bounds = r.summary["x1_bounds"].get<std::vector<double>>(); }

        const json & m     = r.summary["metrics"];
        const double ratio = m["initial_norm"].get<double>() > 0 ? m["final_norm"].get<double>() / m["initial_norm"].get<double>() : 0.0;
        md << "| " << r.summary["name"].get<std::string>() << " | " << r.summary["rho"].get<double>() << " | " << plant << " | "
           << r.summary["seed"].get<std::uint64_t>() << " | " << detail::fixed(m["max_abs_py"].get<double>(), 4) << " | "
           << m["interventions"].get<int>() << " | " << detail::fixed(ratio, 4) << " | " << m["decrease_violations"].get<int>()
           << " | " << m["w_outside_W"].get<int>() << " | " << m["recoveries"].get<int>() << " | " << m["fallbacks"].get<int>()
           << " |\n";
      }
      detail::write_file(fs::path(out_dir) / (plant + "_lateral_offset.svg"),
                         detail::svg_line_chart("x1 (" + plant + " plant)", "x1", offset, bounds));
      detail::write_file(fs::path(out_dir) / (plant + "_intervention.svg"),
                         detail::svg_line_chart("|u - uL| (" + plant + " plant)", "|u - uL|", intervention));
      detail::write_file(fs::path(out_dir) / (plant + "_lyapunov.svg"),
                         detail::svg_line_chart("V (" + plant + " plant)", "V", value));
    }
    detail::write_file(fs::path(out_dir) / "report.md", md.str());
    out << "report written to " << out_dir << " (" << summaries.size() << " runs)\n";
  } catch (const ReportError & e) {
    err << "report error: " << e.what() << '\n';
    return kExitReport;
  } catch (const ConfigError & e) {
    err << "report error: " << e.what() << '\n';
    return kExitReport;
  } catch (const std::exception & e) {
    err << "report error: " << e.what() << '\n';
    return kExitReport;
  }
  return kExitOk;
}

}  // namespace psf
