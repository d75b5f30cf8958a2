#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dropkit/certificate.hpp"
#include "dropkit/dropset.hpp"
#include "dropkit/erm.hpp"
#include "dropkit/synthgen.hpp"

namespace dropkit {

/// Error pairs measurable from one trial; these are also the records.csv
/// column names minus the err_ prefix.
extern const std::vector<std::string> kErrorPairs;

/// Sweep configuration; the grid defaults are the desk-scale battery
/// (k, d both far below sqrt(n) in every cell).
struct SweepSpec {
    std::vector<Eigen::Index> n_grid = {4000, 8000, 16000, 32000};
    std::vector<Eigen::Index> d_grid = {8, 16, 32};
    std::vector<Eigen::Index> k_grid = {2, 4, 8, 16};
    int trials_per_cell = 50;
    std::vector<DropStrategy> strategies = {DropStrategy::random};
    std::vector<std::string> methods = {"if", "ns", "rif", "drif"};
    double lambda = 0.0;
    std::uint64_t base_seed = 0;
    LossKind loss = LossKind::logistic;
    double theta_star_norm = 1.0;
    bool certify = false;            // per-record certificates are optional
    CertificateConfig cert_config;
    FitConfig fit_config;
    int workers = 0;                 // 0 => logical cores

    void validate() const;
};

/// One (cell, trial) measurement. Errors involving estimates that were not
/// requested are NaN; cert_bound is NaN when certification is off and +inf
/// when the certificate condition failed. A non-empty flag marks a trial
/// that errored (its numeric fields are NaN) without aborting the sweep.
struct SweepRecord {
    Eigen::Index n = 0;
    Eigen::Index d = 0;
    Eigen::Index k = 0;
    int trial = 0;
    DropStrategy strategy = DropStrategy::random;
    double err_if_exact = 0.0;
    double err_ns_exact = 0.0;
    double err_rif_exact = 0.0;
    double err_drif_exact = 0.0;
    double err_if_ns = 0.0;
    double err_rif_ns = 0.0;
    double err_drif_ns = 0.0;
    double err_rif_drif = 0.0;
    double ns_delta_norm = 0.0;
    double cert_bound = 0.0;
    bool cert_ok = false;
    double wall_time = 0.0; // seconds; the one field excluded from determinism
    std::string flag;

    double error_for(const std::string& pair) const;
};

/// Runs every cell x trial on a worker pool. Seeds derive from
/// (base_seed, n, d, k, strategy, trial), so output is deterministic and
/// order-independent; records come back sorted by cell then trial.
/// Per-trial domain errors become flagged rows.
std::vector<SweepRecord> run_sweep(const SweepSpec& spec);

SweepSpec sweep_spec_from_json_file(const std::string& path);
SweepSpec sweep_spec_from_json_text(const std::string& text);

enum class SweepAxis { n, d, k };

const char* sweep_axis_name(SweepAxis axis);
SweepAxis sweep_axis_from_name(const std::string& name);

/// Restricts records before a slope fit: the non-swept axes must be pinned
/// (explicitly, or automatically when a grid has a single value).
struct SlopeFilter {
    std::optional<Eigen::Index> n;
    std::optional<Eigen::Index> d;
    std::optional<Eigen::Index> k;
    std::optional<DropStrategy> strategy;
};

struct SlopeFit {
    SweepAxis axis = SweepAxis::n;
    std::string pair;
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    int n_points = 0;          // distinct axis values entering the fit
    double ci_halfwidth = 0.0; // 95% from OLS residuals
};

/// OLS on (log axis value, log per-cell median error). Flagged rows and
/// non-finite errors are dropped first. Throws InsufficientPoints with
/// fewer than 3 distinct axis values and ZeroError when a cell median
/// is exactly 0 (quadratic-mode exactness); such pairs are excluded, with
/// the flag reported by the caller.
SlopeFit fit_scaling(const std::vector<SweepRecord>& records, SweepAxis axis,
                     const std::string& pair, const SlopeFilter& filter);

/// Writes records.csv, slopes.json, summary.md into out_dir and returns the
/// three paths. records.csv columns (exact order):
///   n,d,k,trial,strategy,err_if_exact,err_ns_exact,err_rif_exact,
///   err_drif_exact,err_if_ns,err_rif_ns,err_drif_ns,err_rif_drif,
///   ns_delta_norm,cert_bound,cert_ok,flag
/// Reals print with 17 significant digits and parse back exactly.
std::vector<std::string> emit_report(const std::vector<SweepRecord>& records,
                                     const std::vector<SlopeFit>& fits,
                                     const std::string& out_dir);

void write_records_csv(const std::vector<SweepRecord>& records, const std::string& path);
std::vector<SweepRecord> read_records_csv(const std::string& path);

std::string slope_fits_to_json(const std::vector<SlopeFit>& fits);

} // namespace dropkit
