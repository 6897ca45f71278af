#pragma once

// Monte Carlo comparison of the profile (p) and modified profile (mp) estimators.
//
// Every replicate is a pure function of (master seed, model, n, replicate index): its dataset is
// generated from a derived sub-seed and both estimators are computed on that same dataset.
// Replicates of one cell run on a worker pool; results are stored by index and reduced in index
// order, so the output does not depend on the number of workers.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "mplkit/errors.hpp"
#include "mplkit/ig_inference.hpp"
#include "mplkit/profile_fit.hpp"
#include "mplkit/random.hpp"
#include "mplkit/simulation.hpp"

namespace mplkit {

enum class Model : std::uint64_t { ig = 1, gev = 2 };

struct McSummary {
  double mean = 0.0;
  double variance = std::numeric_limits<double>::quiet_NaN();  // denominator R - 1
  bool variance_defined = false;                               // false when R == 1
  double bias = 0.0;
  double mse = 0.0;  // (1/R) sum (est - true)^2
  double rb_percent = 0.0;
  std::size_t n_converged = 0;
  std::size_t n_failed = 0;
};

inline McSummary summarize(std::span<const double> estimates, double true_value, std::size_t failed = 0) {
  if (estimates.empty()) throw InputError("summarize needs at least one converged estimate");
  const double r = static_cast<double>(estimates.size());
  McSummary s;
  double sum = 0.0;
  for (double e : estimates) sum += e;
  s.mean = sum / r;
  double ss = 0.0;
  double se = 0.0;
  for (double e : estimates) {
    ss += (e - s.mean) * (e - s.mean);
    se += (e - true_value) * (e - true_value);
  }
  if (estimates.size() > 1) {
    s.variance = ss / (r - 1.0);
    s.variance_defined = true;
  }
  s.bias = s.mean - true_value;
  s.mse = se / r;
  s.rb_percent = 100.0 * s.bias / true_value;
  s.n_converged = estimates.size();
  s.n_failed = failed;
  return s;
}

// |mse - (variance (R-1)/R + bias^2)| relative to max(1, mse).
inline double mse_decomposition_error(const McSummary& s) {
  const double r = static_cast<double>(s.n_converged);
  const double var_part = s.variance_defined ? s.variance * (r - 1.0) / r : 0.0;
  return std::abs(s.mse - (var_part + s.bias * s.bias)) / std::max(1.0, s.mse);
}

struct McConfig {
  std::size_t replications = 1000;
  std::vector<std::size_t> sample_sizes;
  Model model = Model::ig;
  std::uint64_t master_seed = 0;
  unsigned workers = 1;
  SimConfigIG ig_truth{};    // n and seed are overridden per replicate
  SimConfigGEV gev_truth{};  // n and seed are overridden per replicate
  GevFitOptions gev_fit{};
  double censor_shift = std::numeric_limits<double>::quiet_NaN();  // calibrated when NaN

  [[nodiscard]] double true_value() const { return model == Model::ig ? ig_truth.lambda : gev_truth.xi; }

  void validate() const {
    if (replications < 1) throw InputError("replications must be >= 1");
    if (sample_sizes.empty()) throw InputError("sample_sizes must not be empty");
    if (workers < 1) throw InputError("workers must be >= 1");
  }
};

struct ReplicateResult {
  std::size_t index = 0;
  std::uint64_t dataset_hash = 0;
  bool ok_p = false;
  bool ok_mp = false;
  double p = std::numeric_limits<double>::quiet_NaN();
  double mp = std::numeric_limits<double>::quiet_NaN();
  bool boundary_p = false;
  bool boundary_mp = false;
  std::string failure;
};

struct CellResult {
  std::size_t n = 0;
  std::vector<ReplicateResult> replicates;

  [[nodiscard]] std::vector<double> estimates(CurveKind kind) const {
    std::vector<double> out;
    for (const auto& r : replicates) {
      if (kind == CurveKind::profile ? r.ok_p : r.ok_mp) out.push_back(kind == CurveKind::profile ? r.p : r.mp);
    }
    return out;
  }
  [[nodiscard]] std::size_t boundary_hits(CurveKind kind) const {
    return static_cast<std::size_t>(std::count_if(replicates.begin(), replicates.end(), [&](const auto& r) {
      return kind == CurveKind::profile ? r.boundary_p : r.boundary_mp;
    }));
  }
};

// FNV-1a over the raw bytes.
class Fnv1a {
 public:
  void add(const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h_ ^= p[i];
      h_ *= 0x100000001b3ULL;
    }
  }
  [[nodiscard]] std::uint64_t value() const noexcept { return h_; }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

inline std::uint64_t dataset_hash(std::span<const double> xs) {
  Fnv1a h;
  h.add(xs.data(), xs.size_bytes());
  return h.value();
}

inline std::uint64_t dataset_hash(const CensoredDataset& d) {
  Fnv1a h;
  h.add(d.y().data(), static_cast<std::size_t>(d.y().size()) * sizeof(double));
  h.add(d.delta().data(), d.delta().size() * sizeof(int));
  h.add(d.x().data(), static_cast<std::size_t>(d.x().size()) * sizeof(double));
  return h.value();
}

inline std::uint64_t replicate_seed(const McConfig& cfg, std::size_t n, std::size_t rep) {
  return derive_seed(cfg.master_seed, {static_cast<std::uint64_t>(cfg.model), n, rep});
}

inline SimConfigIG ig_replicate_config(const McConfig& cfg, std::size_t n, std::size_t rep) {
  SimConfigIG sim = cfg.ig_truth;
  sim.n = n;
  sim.seed = replicate_seed(cfg, n, rep);
  return sim;
}

inline SimConfigGEV gev_replicate_config(const McConfig& cfg, std::size_t n, std::size_t rep) {
  SimConfigGEV sim = cfg.gev_truth;
  sim.n = n;
  sim.seed = replicate_seed(cfg, n, rep);
  return sim;
}

// Shift used for every GEV replicate; derived from the master seed when not preset.
inline double resolve_censor_shift(const McConfig& cfg) {
  if (!std::isnan(cfg.censor_shift)) return cfg.censor_shift;
  if (cfg.gev_truth.target_censor_rate <= 0.0) return std::numeric_limits<double>::infinity();
  return calibrate_censoring(cfg.gev_truth.target_censor_rate, cfg.gev_truth, 100000,
                             derive_seed(cfg.master_seed, {0xca1}))
      .shift;
}

inline ReplicateResult run_ig_replicate(const McConfig& cfg, std::size_t n, std::size_t rep) {
  ReplicateResult r;
  r.index = rep;
  try {
    const IgSample sample(gen_ig(ig_replicate_config(cfg, n, rep)));
    r.dataset_hash = dataset_hash(sample.values());
    const IgFit fit = fit_ig(sample);
    r.p = fit.lambda_hat_p;
    r.mp = fit.lambda_hat_mp;
    r.ok_p = r.ok_mp = true;
  } catch (const std::exception& e) {
    r.failure = e.what();
  }
  return r;
}

inline ReplicateResult run_gev_replicate(const McConfig& cfg, std::size_t n, std::size_t rep, double shift) {
  ReplicateResult r;
  r.index = rep;
  try {
    const CensoredDataset d = gen_gev_aft(gev_replicate_config(cfg, n, rep), shift);
    r.dataset_hash = dataset_hash(d);
    GevProfiler profiler(d, cfg.gev_fit);
    const ProfileFit p = profiler.fit_profile();
    r.ok_p = p.converged();
    r.p = p.psi_hat;
    r.boundary_p = p.diagnostics.at_boundary || p.diagnostics.beside_failure;
    if (!r.ok_p) {
      r.failure = "profile inner fit did not converge";
      return r;
    }
    const ProfileFit mp = profiler.fit_modified(p.inner_at_hat.params());
    r.ok_mp = mp.converged() && std::isfinite(mp.value);
    r.mp = mp.psi_hat;
    r.boundary_mp = mp.diagnostics.at_boundary || mp.diagnostics.beside_failure;
    if (!r.ok_mp) r.failure = "modified profile fit did not converge";
  } catch (const std::exception& e) {
    r.failure = e.what();
  }
  return r;
}

// Runs fn(i) for i in [0, count) on `workers` threads.
template <class Fn>
void parallel_for(std::size_t count, unsigned workers, Fn&& fn) {
  if (workers <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  const unsigned used = static_cast<unsigned>(std::min<std::size_t>(workers, count));
  for (unsigned w = 0; w < used; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

// All replicates of one sample size. Replicate failures are recorded, never thrown.
inline CellResult run_cell(const McConfig& cfg, std::size_t n) {
  cfg.validate();
  CellResult cell;
  cell.n = n;
  cell.replicates.resize(cfg.replications);
  const double shift = cfg.model == Model::gev ? resolve_censor_shift(cfg) : 0.0;
  parallel_for(cfg.replications, cfg.workers, [&](std::size_t rep) {
    cell.replicates[rep] = cfg.model == Model::ig ? run_ig_replicate(cfg, n, rep) : run_gev_replicate(cfg, n, rep, shift);
  });
  return cell;
}

// ---------------------------------------------------------------------------------------------
// Tables

struct TableRow {
  std::size_t n = 0;
  CurveKind estimator = CurveKind::profile;
  McSummary summary;
  std::size_t boundary_hits = 0;
};

struct TableArtifact {
  int table = 1;
  Model model = Model::ig;
  double true_value = 0.0;
  std::size_t replications = 0;
  std::uint64_t seed = 0;
  double censor_shift = std::numeric_limits<double>::quiet_NaN();
  std::vector<TableRow> rows;  // (n, p), (n, mp) for each n, in grid order
  std::vector<CellResult> cells;

  [[nodiscard]] const TableRow& row(std::size_t n, CurveKind k) const {
    for (const auto& r : rows)
      if (r.n == n && r.estimator == k) return r;
    throw InputError("no table row for n = " + std::to_string(n));
  }
  [[nodiscard]] std::size_t total_failures() const {
    std::size_t f = 0;
    for (const auto& r : rows) f += r.summary.n_failed;
    return f;
  }
};

inline const std::vector<std::size_t>& table1_sample_sizes() {
  static const std::vector<std::size_t> sizes{3, 5, 7, 9, 11, 13, 15, 17, 19, 25, 30, 50};
  return sizes;
}

inline const std::vector<std::size_t>& table2_sample_sizes() {
  static const std::vector<std::size_t> sizes{20, 50};
  return sizes;
}

// Design of table 1 (IG, lambda = 4, mu = 2) or table 2 (GEV-AFT, xi = 2, 25% censoring) with
// the replicate count and seed supplied by the caller.
inline McConfig table_config(int which, std::size_t replications, std::uint64_t seed, unsigned workers = 1) {
  McConfig cfg;
  cfg.replications = replications;
  cfg.master_seed = seed;
  cfg.workers = workers;
  if (which == 1) {
    cfg.model = Model::ig;
    cfg.sample_sizes = table1_sample_sizes();
    cfg.ig_truth = SimConfigIG{0, 2.0, 4.0, 0};
  } else if (which == 2) {
    cfg.model = Model::gev;
    cfg.sample_sizes = table2_sample_sizes();
    cfg.gev_truth = SimConfigGEV{};
  } else {
    throw InputError("table must be 1 or 2");
  }
  return cfg;
}

inline TableArtifact replicate_table(int which, McConfig cfg) {
  cfg.validate();
  TableArtifact t;
  t.table = which;
  t.model = cfg.model;
  t.true_value = cfg.true_value();
  t.replications = cfg.replications;
  t.seed = cfg.master_seed;
  if (cfg.model == Model::gev) {
    cfg.censor_shift = resolve_censor_shift(cfg);
    t.censor_shift = cfg.censor_shift;
  }
  for (std::size_t n : cfg.sample_sizes) {
    CellResult cell = run_cell(cfg, n);
    for (CurveKind k : {CurveKind::profile, CurveKind::modified_profile}) {
      const auto est = cell.estimates(k);
      TableRow row;
      row.n = n;
      row.estimator = k;
      const std::size_t failed = cfg.replications - est.size();
      if (est.empty()) {
        row.summary = McSummary{};
        row.summary.mean = row.summary.bias = row.summary.mse = row.summary.rb_percent =
            std::numeric_limits<double>::quiet_NaN();
        row.summary.n_failed = failed;
      } else {
        row.summary = summarize(est, t.true_value, failed);
      }
      row.boundary_hits = cell.boundary_hits(k);
      t.rows.push_back(row);
    }
    t.cells.push_back(std::move(cell));
  }
  return t;
}

namespace detail {

inline std::string fmt(double v, int decimals) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

}  // namespace detail

inline constexpr const char* kCsvHeader = "n,estimator,mean,variance,bias,mse,rb_percent,n_converged,n_failed";

// One line per (n, estimator); values with 10 decimals, undefined variance as NA.
inline std::string to_csv(const TableArtifact& t) {
  std::ostringstream out;
  out << kCsvHeader << '\n';
  for (const auto& r : t.rows) {
    const auto& s = r.summary;
    out << r.n << ',' << to_string(r.estimator) << ',' << detail::fmt(s.mean, 10) << ','
        << detail::fmt(s.variance_defined ? s.variance : std::numeric_limits<double>::quiet_NaN(), 10) << ','
        << detail::fmt(s.bias, 10) << ',' << detail::fmt(s.mse, 10) << ',' << detail::fmt(s.rb_percent, 10) << ','
        << s.n_converged << ',' << s.n_failed << '\n';
  }
  return out.str();
}

// Paper-style layout: one line per n with p and mp side by side. 3 decimals for the IG table,
// 4 for the GEV table.
inline std::string to_markdown(const TableArtifact& t) {
  const int dec = t.table == 1 ? 3 : 4;
  std::vector<std::vector<std::string>> cells;
  cells.push_back({"n", "mean p", "mean mp", "variance p", "variance mp", "bias p", "bias mp", "MSE p", "MSE mp",
                   "RB% p", "RB% mp"});
  std::vector<std::size_t> ns;
  for (const auto& r : t.rows)
    if (std::find(ns.begin(), ns.end(), r.n) == ns.end()) ns.push_back(r.n);
  for (std::size_t n : ns) {
    const auto& p = t.row(n, CurveKind::profile).summary;
    const auto& m = t.row(n, CurveKind::modified_profile).summary;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    cells.push_back({std::to_string(n), detail::fmt(p.mean, dec), detail::fmt(m.mean, dec),
                     detail::fmt(p.variance_defined ? p.variance : nan, dec),
                     detail::fmt(m.variance_defined ? m.variance : nan, dec), detail::fmt(p.bias, dec),
                     detail::fmt(m.bias, dec), detail::fmt(p.mse, dec), detail::fmt(m.mse, dec),
                     detail::fmt(p.rb_percent, dec), detail::fmt(m.rb_percent, dec)});
  }
  std::vector<std::size_t> width(cells.front().size(), 0);
  for (const auto& row : cells)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());

  std::ostringstream out;
  auto emit = [&](const std::vector<std::string>& row) {
    out << '|';
    for (std::size_t c = 0; c < row.size(); ++c) {
      out << ' ' << std::string(width[c] - row[c].size(), ' ') << row[c] << " |";
    }
    out << '\n';
  };
  emit(cells.front());
  out << '|';
  for (std::size_t c = 0; c < width.size(); ++c) out << ' ' << std::string(width[c] - 1, '-') << ": |";
  out << '\n';
  for (std::size_t i = 1; i < cells.size(); ++i) emit(cells[i]);

  out << "\nTrue value " << t.true_value << ", " << t.replications << " replications, seed " << t.seed << ".\n";
  for (std::size_t n : ns) {
    const auto& p = t.row(n, CurveKind::profile);
    const auto& m = t.row(n, CurveKind::modified_profile);
    out << "n=" << n << ": failed p=" << p.summary.n_failed << " mp=" << m.summary.n_failed;
    if (t.model == Model::gev) out << ", estimates at a bracket edge or beside an unresolved fit p=" << p.boundary_hits << " mp=" << m.boundary_hits;
    out << '\n';
  }
  return out.str();
}

}  // namespace mplkit
