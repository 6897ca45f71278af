// mplkit command-line front end.
//
//   mplkit fit-ig    (--input FILE | --data 1,2,3) [--json]
//   mplkit fit-gev   --input FILE [--kind p|mp] [--bracket lo:hi] [--tol T] [--json]
//   mplkit simulate  --model ig|gev --n N --out FILE [--seed S] ...
//   mplkit replicate --table 1|2 [--reps R] [--seed S] [--out DIR] [--format csv|md] [--workers W]
//
// Every subcommand accepts --config FILE with one `key = value` per line; keys are long option
// names without dashes. Command-line flags override the file.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "mplkit/mc_harness.hpp"

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

enum Exit : int { kOk = 0, kUsage = 1, kInput = 2, kDegenerate = 3, kInfeasible = 4 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string line_error(const std::string& path, std::size_t line, const std::string& what) {
  return path + ":" + std::to_string(line) + ": " + what;
}

double parse_real(const std::string& field, const std::string& path, std::size_t line) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(field, &used);
  } catch (const std::exception&) {
    throw mplkit::InputError(line_error(path, line, "not a number: '" + field + "'"));
  }
  if (used != field.size()) throw mplkit::InputError(line_error(path, line, "not a number: '" + field + "'"));
  return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(trim(cur));
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw mplkit::InputError("cannot read " + path);
  return in;
}

// --------------------------------------------------------------------------------------------
// input parsing

std::vector<double> read_ig_values(const std::string& path) {
  auto in = open_input(path);
  std::vector<double> xs;
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string s = trim(raw);
    if (s.empty() || s[0] == '#') continue;
    const double v = parse_real(s, path, line);
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw mplkit::InputError(line_error(path, line, "value must be positive and finite, got " + s));
    }
    xs.push_back(v);
  }
  return xs;
}

std::vector<double> parse_inline_values(const std::string& data) {
  std::vector<double> xs;
  std::size_t pos = 0;
  for (const auto& field : split(data, ',')) {
    ++pos;
    const double v = parse_real(field, "--data", pos);
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw mplkit::InputError(line_error("--data", pos, "value must be positive and finite, got " + field));
    }
    xs.push_back(v);
  }
  return xs;
}

mplkit::CensoredDataset read_regression_csv(const std::string& path) {
  auto in = open_input(path);
  std::string raw;
  std::size_t line = 0;
  std::vector<std::string> header;
  while (header.empty() && std::getline(in, raw)) {
    ++line;
    if (!trim(raw).empty()) header = split(trim(raw), ',');
  }
  if (header.size() < 3 || header[0] != "y" || header[1] != "delta") {
    throw mplkit::InputError(line_error(path, line, "expected header y,delta,x1,...,xp"));
  }
  const std::size_t p = header.size() - 2;

  std::vector<double> ys;
  std::vector<int> deltas;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, raw)) {
    ++line;
    const std::string s = trim(raw);
    if (s.empty()) continue;
    const auto fields = split(s, ',');
    if (fields.size() != header.size()) {
      throw mplkit::InputError(line_error(path, line, "expected " + std::to_string(header.size()) + " fields, got " +
                                                          std::to_string(fields.size())));
    }
    ys.push_back(parse_real(fields[0], path, line));
    const double delta = parse_real(fields[1], path, line);
    if (delta != 0.0 && delta != 1.0) {
      throw mplkit::InputError(line_error(path, line, "delta must be 0 or 1, got " + fields[1]));
    }
    deltas.push_back(static_cast<int>(delta));
    std::vector<double> row(p);
    for (std::size_t c = 0; c < p; ++c) row[c] = parse_real(fields[c + 2], path, line);
    rows.push_back(std::move(row));
  }

  const auto n = static_cast<Eigen::Index>(ys.size());
  mplkit::VectorXd y(n);
  mplkit::MatrixXd x(n, static_cast<Eigen::Index>(p));
  for (Eigen::Index j = 0; j < n; ++j) {
    y[j] = ys[static_cast<std::size_t>(j)];
    for (std::size_t c = 0; c < p; ++c) x(j, static_cast<Eigen::Index>(c)) = rows[static_cast<std::size_t>(j)][c];
  }
  return {std::move(y), std::move(deltas), std::move(x)};
}

// --------------------------------------------------------------------------------------------
// seeds and config files

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("MPLKIT_SEED"); env != nullptr && *env != '\0') {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(env, &used);
      if (used == std::string(env).size()) return v;
    } catch (const std::exception&) {
    }
    throw UsageError(std::string("MPLKIT_SEED is not an unsigned integer: ") + env);
  }
  std::random_device rd;
  return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

// Reads `key = value` lines into flags placed ahead of the command-line ones; with the last
// occurrence of an option winning, explicit flags take precedence over the file.
std::vector<std::string> config_arguments(const CLI::App& sub, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw mplkit::InputError("cannot read config file " + path);
  std::vector<std::string> args;
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string s = trim(raw);
    if (s.empty() || s[0] == '#') continue;
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw UsageError(line_error(path, line, "expected key = value"));
    const std::string key = trim(s.substr(0, eq));
    const std::string value = trim(s.substr(eq + 1));
    const CLI::Option* opt = sub.get_option_no_throw("--" + key);
    if (opt == nullptr || key == "config" || key == "help") {
      throw UsageError(line_error(path, line, "unknown key '" + key + "' for " + sub.get_name()));
    }
    if (opt->get_type_size() == 0) {
      if (value == "true" || value == "1" || value == "yes") {
        args.push_back("--" + key);
      } else if (value != "false" && value != "0" && value != "no") {
        throw UsageError(line_error(path, line, "expected a boolean for '" + key + "'"));
      }
    } else {
      args.push_back("--" + key);
      args.push_back(value);
    }
  }
  return args;
}

// --------------------------------------------------------------------------------------------
// subcommands

struct FitIgArgs {
  std::string input;
  std::string data;
  bool as_json = false;
};

int cmd_fit_ig(const FitIgArgs& a) {
  const auto xs = a.input.empty() ? parse_inline_values(a.data) : read_ig_values(a.input);
  const mplkit::IgSample sample(xs);
  const auto fit = mplkit::fit_ig(sample);
  if (a.as_json) {
    json j{{"n", sample.size()},
           {"mu_hat", fit.mu_hat},
           {"s_stat", fit.s_stat},
           {"lambda_hat_p", fit.lambda_hat_p},
           {"lambda_hat_mp", fit.lambda_hat_mp},
           {"loglik_p", fit.loglik_p_at_max},
           {"loglik_mp", fit.loglik_mp_at_max}};
    std::cout << j.dump(2) << '\n';
    return kOk;
  }
  std::cout << std::setprecision(10) << "n              " << sample.size() << '\n'
            << "mu_hat         " << fit.mu_hat << '\n'
            << "s_stat         " << fit.s_stat << '\n'
            << "lambda_hat_p   " << fit.lambda_hat_p << '\n'
            << "lambda_hat_mp  " << fit.lambda_hat_mp << '\n'
            << "loglik_p       " << fit.loglik_p_at_max << '\n'
            << "loglik_mp      " << fit.loglik_mp_at_max << '\n';
  return kOk;
}

struct FitGevArgs {
  std::string input;
  std::string kind = "mp";
  std::string bracket = "0.05:10";
  double tol = 1e-8;
  int grid = 41;
  bool as_json = false;
};

std::pair<double, double> parse_bracket(const std::string& s) {
  const auto parts = split(s, ':');
  if (parts.size() != 2) throw UsageError("--bracket expects lo:hi, got " + s);
  try {
    return {std::stod(parts[0]), std::stod(parts[1])};
  } catch (const std::exception&) {
    throw UsageError("--bracket expects lo:hi, got " + s);
  }
}

json fit_to_json(const mplkit::ProfileFit& f) {
  const auto params = f.inner_at_hat.params();
  std::vector<double> phi(params.phi.data(), params.phi.data() + params.phi.size());
  std::size_t finite = 0;
  for (const auto& pt : f.curve) finite += std::isfinite(pt.value) ? 1 : 0;
  json j{{"kind", mplkit::to_string(f.kind)},
         {"xi_hat", f.psi_hat},
         {"phi_hat", phi},
         {"sigma_hat", params.sigma},
         {"value", f.value},
         {"inner_converged", f.inner_at_hat.converged},
         {"inner_iterations", f.inner_at_hat.iterations},
         {"inner_grad_norm", f.inner_at_hat.grad_norm},
         {"bracket", {f.diagnostics.bracket_lo, f.diagnostics.bracket_hi}},
         {"at_boundary", f.diagnostics.at_boundary},
         {"beside_failure", f.diagnostics.beside_failure},
         {"refinements", f.diagnostics.refinements},
         {"failures", f.diagnostics.failures},
         {"grid_points", f.curve.size()},
         {"grid_points_finite", finite}};
  if (f.diagnostics.modification_at_hat) {
    const auto& m = *f.diagnostics.modification_at_hat;
    j["modification"] = {{"profile", m.profile},
                         {"log_det_information", m.log_det_info},
                         {"log_abs_det_sample_space", m.log_abs_det_sample_space},
                         {"sample_space_condition", m.sample_space_condition}};
  }
  return j;
}

void print_fit(const json& j) {
  std::cout << std::setprecision(10);
  std::cout << "estimator        " << j["kind"].get<std::string>() << '\n'
            << "xi_hat           " << j["xi_hat"].get<double>() << '\n';
  const auto phi = j["phi_hat"].get<std::vector<double>>();
  for (std::size_t s = 0; s < phi.size(); ++s) std::cout << "phi_hat[" << s + 1 << "]       " << phi[s] << '\n';
  std::cout << "sigma_hat        " << j["sigma_hat"].get<double>() << '\n'
            << "curve value      " << j["value"].get<double>() << '\n'
            << "bracket          " << j["bracket"][0].get<double>() << " : " << j["bracket"][1].get<double>() << '\n'
            << "grid             " << j["grid_points_finite"].get<std::size_t>() << " of "
            << j["grid_points"].get<std::size_t>() << " points finite, " << j["refinements"].get<int>()
            << " refinement evaluations, " << j["failures"].get<int>() << " failed evaluations\n"
            << "at boundary      " << (j["at_boundary"].get<bool>() ? "yes" : "no")
            << (j["beside_failure"].get<bool>() ? " (beside an unresolved inner fit)" : "") << '\n'
            << "inner fit        " << (j["inner_converged"].get<bool>() ? "converged" : "NOT converged") << ", "
            << j["inner_iterations"].get<int>() << " iterations, |score| " << j["inner_grad_norm"].get<double>() << '\n';
  if (j.contains("modification")) {
    const auto& m = j["modification"];
    std::cout << "log|j_chichi|    " << m["log_det_information"].get<double>() << '\n'
              << "log|l_chi;chi|   " << m["log_abs_det_sample_space"].get<double>() << '\n'
              << "cond(l_chi;chi)  " << m["sample_space_condition"].get<double>() << '\n';
  }
}

int cmd_fit_gev(const FitGevArgs& a) {
  const auto data = read_regression_csv(a.input);
  mplkit::GevFitOptions opt;
  std::tie(opt.bracket_lo, opt.bracket_hi) = parse_bracket(a.bracket);
  if (!(opt.bracket_lo > 0.0 && opt.bracket_lo < opt.bracket_hi)) {
    throw UsageError("--bracket needs 0 < lo < hi, got " + a.bracket);
  }
  opt.inner.grad_tol = a.tol;
  opt.grid_points = a.grid;

  const auto res = mplkit::fit_gev(data, opt, a.kind == "mp");
  const auto& fit = a.kind == "mp" ? *res.modified : res.profile;
  json j = fit_to_json(fit);
  j["n"] = data.size();
  j["events"] = data.events();
  if (a.kind == "mp") j["profile_xi_hat"] = res.profile.psi_hat;
  if (a.as_json) {
    std::cout << j.dump(2) << '\n';
    return kOk;
  }
  std::cout << "observations     " << data.size() << " (" << data.events() << " uncensored)\n";
  if (a.kind == "mp") std::cout << std::setprecision(10) << "profile xi_hat   " << res.profile.psi_hat << '\n';
  print_fit(j);
  return kOk;
}

struct SimulateArgs {
  std::string model = "gev";
  std::size_t n = 20;
  std::string out;
  std::optional<std::uint64_t> seed;
  double mu = 2.0;
  double lambda = 4.0;
  double phi1 = 1.0;
  double phi2 = 1.0;
  double sigma = 1.0;
  double xi = 2.0;
  double censor_rate = 0.25;
};

int cmd_simulate(const SimulateArgs& a) {
  const std::uint64_t seed = resolve_seed(a.seed);
  std::cout << "seed " << seed << '\n';
  std::ofstream out(a.out);
  if (!out) throw mplkit::InputError("cannot write " + a.out);
  out << std::setprecision(17);
  if (a.model == "ig") {
    mplkit::SimConfigIG cfg{a.n, a.mu, a.lambda, seed};
    for (double v : mplkit::gen_ig(cfg)) out << v << '\n';
    std::cout << "wrote " << a.n << " inverse Gaussian values to " << a.out << '\n';
    return kOk;
  }
  mplkit::SimConfigGEV cfg{a.n, a.phi1, a.phi2, a.sigma, a.xi, a.censor_rate, seed};
  const auto d = mplkit::gen_gev_aft(cfg);
  out << "y,delta,x1,x2\n";
  for (Eigen::Index j = 0; j < d.size(); ++j) {
    out << d.y()[j] << ',' << d.delta()[static_cast<std::size_t>(j)] << ',' << d.x()(j, 0) << ',' << d.x()(j, 1)
        << '\n';
  }
  std::cout << "wrote " << d.size() << " observations (" << d.size() - d.events() << " censored) to " << a.out
            << '\n';
  return kOk;
}

struct ReplicateArgs {
  int table = 1;
  std::size_t reps = 1000;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  std::string format = "csv";
  unsigned workers = std::max(1u, std::thread::hardware_concurrency());
};

int cmd_replicate(const ReplicateArgs& a) {
  const std::uint64_t seed = resolve_seed(a.seed);
  std::cout << "seed " << seed << '\n';

  std::error_code ec;
  fs::create_directories(a.out, ec);
  const fs::path file = fs::path(a.out) / ("table" + std::to_string(a.table) + "." + a.format);
  std::ofstream out(file, std::ios::binary);
  if (ec || !out) throw mplkit::InputError("cannot write " + file.string());

  const auto t0 = std::chrono::steady_clock::now();
  const auto artifact = mplkit::replicate_table(a.table, mplkit::table_config(a.table, a.reps, seed, a.workers));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  out << (a.format == "csv" ? mplkit::to_csv(artifact) : mplkit::to_markdown(artifact));
  out.close();
  if (!out) throw mplkit::InputError("failed writing " + file.string());

  std::cout << mplkit::to_markdown(artifact);
  std::cout << "failures " << artifact.total_failures() << '\n'
            << "wall time " << std::fixed << std::setprecision(2) << secs << " s with " << a.workers << " worker"
            << (a.workers == 1 ? "" : "s") << '\n'
            << "wrote " << file.string() << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Profile and modified profile likelihood estimation"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  std::string config;  // consumed before parsing; registered so it shows in --help

  FitIgArgs ig;
  auto* fit_ig = app.add_subcommand("fit-ig", "Fit the inverse Gaussian dispersion parameter");
  auto* ig_in = fit_ig->add_option("--input,-i", ig.input, "File with one positive value per line");
  fit_ig->add_option("--data", ig.data, "Comma separated values instead of a file")->excludes(ig_in);
  fit_ig->add_flag("--json", ig.as_json, "Print a JSON object");
  fit_ig->add_option("--config", config, "key = value file");

  FitGevArgs gev;
  auto* fit_gev = app.add_subcommand("fit-gev", "Fit the GEV shape in an accelerated failure time model");
  fit_gev->add_option("--input,-i", gev.input, "CSV with header y,delta,x1,...,xp")->required();
  fit_gev->add_option("--kind", gev.kind, "p or mp")->check(CLI::IsMember({"p", "mp"}))->capture_default_str();
  fit_gev->add_option("--bracket", gev.bracket, "Shape search interval lo:hi")->capture_default_str();
  fit_gev->add_option("--tol", gev.tol, "Inner stationarity tolerance")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  fit_gev->add_option("--grid", gev.grid, "Grid points over the bracket")
      ->check(CLI::Range(3, 10000))
      ->capture_default_str();
  fit_gev->add_flag("--json", gev.as_json, "Print a JSON object");
  fit_gev->add_option("--config", config, "key = value file");

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Write a simulated dataset");
  simulate->add_option("--model", sim.model, "ig or gev")->check(CLI::IsMember({"ig", "gev"}))->capture_default_str();
  simulate->add_option("--n", sim.n, "Sample size")->check(CLI::Range(std::size_t{2}, std::size_t{100000000}))->capture_default_str();
  simulate->add_option("--out,-o", sim.out, "Output file")->required();
  simulate->add_option("--seed", sim.seed, "Random seed");
  simulate->add_option("--mu", sim.mu)->capture_default_str();
  simulate->add_option("--lambda", sim.lambda)->capture_default_str();
  simulate->add_option("--phi1", sim.phi1)->capture_default_str();
  simulate->add_option("--phi2", sim.phi2)->capture_default_str();
  simulate->add_option("--sigma", sim.sigma)->capture_default_str();
  simulate->add_option("--xi", sim.xi)->capture_default_str();
  simulate->add_option("--censor-rate", sim.censor_rate)->capture_default_str();
  simulate->add_option("--config", config, "key = value file");

  ReplicateArgs rep;
  auto* replicate = app.add_subcommand("replicate", "Run a Monte Carlo table");
  replicate->add_option("--table", rep.table, "1 (inverse Gaussian) or 2 (GEV regression)")
      ->check(CLI::IsMember({1, 2}))
      ->capture_default_str();
  replicate->add_option("--reps", rep.reps, "Replications per sample size")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  replicate->add_option("--seed", rep.seed, "Master seed");
  replicate->add_option("--out,-o", rep.out, "Output directory")->capture_default_str();
  replicate->add_option("--format", rep.format, "csv or md")->check(CLI::IsMember({"csv", "md"}))->capture_default_str();
  replicate->add_option("--workers", rep.workers, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  replicate->add_option("--config", config, "key = value file");

  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    // splice config-file options in front of the command-line ones
    for (std::size_t i = 1; i < args.size(); ++i) {
      std::string path;
      std::size_t width = 0;
      if (args[i] == "--config" && i + 1 < args.size()) {
        path = args[i + 1];
        width = 2;
      } else if (args[i].rfind("--config=", 0) == 0) {
        path = args[i].substr(9);
        width = 1;
      } else {
        continue;
      }
      const CLI::App* sub = app.get_subcommand_no_throw(args[0]);
      if (sub == nullptr) throw UsageError("--config must follow a subcommand");
      const auto extra = config_arguments(*sub, path);
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i + width));
      args.insert(args.begin() + 1, extra.begin(), extra.end());
      break;
    }
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
    if (*fit_ig && ig.input.empty() && ig.data.empty()) throw UsageError("fit-ig needs --input or --data");
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const mplkit::InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInput;
  }

  try {
    if (*fit_ig) return cmd_fit_ig(ig);
    if (*fit_gev) return cmd_fit_gev(gev);
    if (*simulate) return cmd_simulate(sim);
    return cmd_replicate(rep);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const mplkit::InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInput;
  } catch (const mplkit::DegenerateSampleError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDegenerate;
  } catch (const mplkit::InfeasibleModelError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInfeasible;
  } catch (const mplkit::ModificationUndefinedError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInfeasible;
  } catch (const mplkit::DomainError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInput;
  }
}
