#include "dropkit/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

#include <json.hpp>

#include "dropkit/attribution.hpp"
#include "dropkit/rng.hpp"

namespace dropkit {

const std::vector<std::string> kErrorPairs = {
    "if_exact", "ns_exact", "rif_exact", "drif_exact",
    "if_ns",    "rif_ns",   "drif_ns",   "rif_drif",
};

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string format_real(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

} // namespace

void SweepSpec::validate() const {
    if (n_grid.empty() || d_grid.empty() || k_grid.empty())
        raise(Errc::bad_config, "n_grid, d_grid, k_grid must be nonempty");
    if (trials_per_cell < 1) raise(Errc::bad_config, "trials_per_cell must be >= 1");
    if (strategies.empty()) raise(Errc::bad_config, "at least one strategy required");
    if (lambda < 0.0) raise(Errc::bad_config, "lambda must be >= 0");
    for (const auto n : n_grid) {
        if (n < 1) raise(Errc::bad_config, "grid n values must be >= 1");
        for (const auto d : d_grid)
            if (d >= n) raise(Errc::bad_config, "grids must satisfy d < n");
        for (const auto k : k_grid)
            if (k >= n) raise(Errc::bad_config, "grids must satisfy k < n");
    }
    for (const auto& method : methods) method_from_name(method);
    cert_config.validate();
    fit_config.validate();
}

double SweepRecord::error_for(const std::string& pair) const {
    if (pair == "if_exact") return err_if_exact;
    if (pair == "ns_exact") return err_ns_exact;
    if (pair == "rif_exact") return err_rif_exact;
    if (pair == "drif_exact") return err_drif_exact;
    if (pair == "if_ns") return err_if_ns;
    if (pair == "rif_ns") return err_rif_ns;
    if (pair == "drif_ns") return err_drif_ns;
    if (pair == "rif_drif") return err_rif_drif;
    raise(Errc::bad_config, "unknown error pair: " + pair);
}

namespace {

struct TrialJob {
    Eigen::Index n, d, k;
    DropStrategy strategy;
    int trial;
    std::size_t slot;
};

bool method_requested(const SweepSpec& spec, const char* name) {
    for (const auto& method : spec.methods)
        if (method == name) return true;
    return false;
}

void run_trial(const SweepSpec& spec, const TrialJob& job, SweepRecord& record) {
    record.n = job.n;
    record.d = job.d;
    record.k = job.k;
    record.trial = job.trial;
    record.strategy = job.strategy;
    record.err_if_exact = record.err_ns_exact = record.err_rif_exact =
        record.err_drif_exact = record.err_if_ns = record.err_rif_ns =
            record.err_drif_ns = record.err_rif_drif = record.ns_delta_norm = kNaN;
    record.cert_bound = kNaN;
    record.cert_ok = false;

    std::uint64_t seed = spec.base_seed;
    seed = seed_mix(seed, static_cast<std::uint64_t>(job.n));
    seed = seed_mix(seed, static_cast<std::uint64_t>(job.d));
    seed = seed_mix(seed, static_cast<std::uint64_t>(job.k));
    seed = seed_mix(seed, static_cast<std::uint64_t>(job.strategy));
    seed = seed_mix(seed, static_cast<std::uint64_t>(job.trial));

    const auto start = std::chrono::steady_clock::now();
    try {
        SynthConfig synth;
        synth.n = job.n;
        synth.d = job.d;
        synth.theta_star_norm = spec.theta_star_norm;
        synth.lambda = spec.lambda;
        synth.seed = seed_mix(seed, 1);
        const SynthInstance instance = generate(synth);

        LossSpec loss{spec.loss, spec.lambda};
        const FitReport fitted = fit(instance.dataset, loss, spec.fit_config);
        if (!fitted.converged) {
            record.flag = "fit_nonconverged";
            return;
        }
        const ModelState state =
            build_state(instance.dataset, loss, fitted.theta, all_samples(job.n));
        const DropSet drop = sample_dropset(instance.dataset, state, job.strategy,
                                            job.k, seed_mix(seed, 2));

        const bool want_if = method_requested(spec, "if");
        const bool want_ns = method_requested(spec, "ns");
        const bool want_rif = method_requested(spec, "rif");
        const bool want_drif = method_requested(spec, "drif");

        AttributionEstimate est_if, est_ns, est_rif, est_drif;
        if (want_if) est_if = estimate_if(state, drop);
        if (want_ns) est_ns = estimate_ns(state, drop);
        if (want_rif) est_rif = estimate_rif(state, drop);
        if (want_drif) est_drif = estimate_drif(state, drop);

        FitConfig oracle_config = spec.fit_config;
        oracle_config.warm_start = want_ns ? est_ns.theta_est : fitted.theta;
        const FitReport exact = retrain_without(instance.dataset, loss, drop, oracle_config);
        if (!exact.converged) {
            record.flag = "retrain_nonconverged";
            return;
        }
        const Eigen::VectorXd exact_delta = exact.theta - fitted.theta;

        // distances go through the stored deltas: theta_hat cancels exactly,
        // so tiny gaps are not drowned by full-parameter roundoff
        const auto dist = [&](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
            return (a - b).norm();
        };
        if (want_if) record.err_if_exact = dist(est_if.delta, exact_delta);
        if (want_ns) record.err_ns_exact = dist(est_ns.delta, exact_delta);
        if (want_rif) record.err_rif_exact = dist(est_rif.delta, exact_delta);
        if (want_drif) record.err_drif_exact = dist(est_drif.delta, exact_delta);
        if (want_if && want_ns) record.err_if_ns = dist(est_if.delta, est_ns.delta);
        if (want_rif && want_ns) record.err_rif_ns = dist(est_rif.delta, est_ns.delta);
        if (want_drif && want_ns)
            record.err_drif_ns = dist(est_drif.delta, est_ns.delta);
        if (want_rif && want_drif)
            record.err_rif_drif = dist(est_rif.delta, est_drif.delta);
        if (want_ns) record.ns_delta_norm = est_ns.delta.norm();

        if (spec.certify) {
            CertificateConfig cert_config = spec.cert_config;
            cert_config.seed = seed_mix(seed, 3);
            try {
                const Certificate cert = certify_ns(state, drop, cert_config);
                record.cert_bound = cert.bound;
                record.cert_ok = cert.condition_ok;
            } catch (const Error& error) {
                if (error.code() != Errc::non_convex_ball) throw;
                record.cert_bound = std::numeric_limits<double>::infinity();
                record.cert_ok = false;
            }
        }
    } catch (const Error& error) {
        record.flag = errc_name(error.code());
    }
    record.wall_time =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

} // namespace

std::vector<SweepRecord> run_sweep(const SweepSpec& spec) {
    spec.validate();

    std::vector<TrialJob> jobs;
    for (const auto n : spec.n_grid)
        for (const auto d : spec.d_grid)
            for (const auto k : spec.k_grid)
                for (const auto strategy : spec.strategies)
                    for (int trial = 0; trial < spec.trials_per_cell; ++trial)
                        jobs.push_back({n, d, k, strategy, trial, jobs.size()});

    std::vector<SweepRecord> records(jobs.size());
    const unsigned hardware = std::max(1u, std::thread::hardware_concurrency());
    const unsigned workers =
        spec.workers > 0 ? static_cast<unsigned>(spec.workers)
                         : std::min<unsigned>(hardware, static_cast<unsigned>(jobs.size()));

    std::atomic<std::size_t> cursor{0};
    const auto work = [&]() {
        for (;;) {
            const std::size_t index = cursor.fetch_add(1);
            if (index >= jobs.size()) return;
            run_trial(spec, jobs[index], records[jobs[index].slot]);
        }
    };

    if (workers <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& thread : pool) thread.join();
    }
    return records;
}

const char* sweep_axis_name(SweepAxis axis) {
    switch (axis) {
    case SweepAxis::n: return "n";
    case SweepAxis::d: return "d";
    case SweepAxis::k: return "k";
    }
    return "?";
}

SweepAxis sweep_axis_from_name(const std::string& name) {
    if (name == "n") return SweepAxis::n;
    if (name == "d") return SweepAxis::d;
    if (name == "k") return SweepAxis::k;
    raise(Errc::bad_config, "axis must be one of n, d, k");
}

namespace {

Eigen::Index axis_value(const SweepRecord& record, SweepAxis axis) {
    switch (axis) {
    case SweepAxis::n: return record.n;
    case SweepAxis::d: return record.d;
    case SweepAxis::k: return record.k;
    }
    return 0;
}

double median_of(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    const std::size_t m = values.size();
    return m % 2 ? values[m / 2] : 0.5 * (values[m / 2 - 1] + values[m / 2]);
}

/// Two-sided 97.5% Student-t quantiles for small residual dof.
double t_quantile_975(int dof) {
    static const double table[] = {12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365,
                                   2.306,  2.262, 2.228, 2.201, 2.179, 2.160, 2.145,
                                   2.131,  2.120, 2.110, 2.101, 2.093, 2.086, 2.080,
                                   2.074,  2.069, 2.064, 2.060, 2.056, 2.052, 2.048,
                                   2.045,  2.042};
    if (dof < 1) return std::numeric_limits<double>::infinity();
    if (dof <= 30) return table[dof - 1];
    return 1.96;
}

} // namespace

SlopeFit fit_scaling(const std::vector<SweepRecord>& records, SweepAxis axis,
                     const std::string& pair, const SlopeFilter& filter) {
    std::vector<const SweepRecord*> kept;
    for (const auto& record : records) {
        if (!record.flag.empty()) continue;
        if (filter.n && record.n != *filter.n) continue;
        if (filter.d && record.d != *filter.d) continue;
        if (filter.k && record.k != *filter.k) continue;
        if (filter.strategy && record.strategy != *filter.strategy) continue;
        kept.push_back(&record);
    }

    // the two non-swept axes must be pinned down to one value each
    for (const SweepAxis other : {SweepAxis::n, SweepAxis::d, SweepAxis::k}) {
        if (other == axis) continue;
        std::set<Eigen::Index> seen;
        for (const auto* record : kept) seen.insert(axis_value(*record, other));
        if (seen.size() > 1)
            raise(Errc::bad_config, std::string("axis ") + sweep_axis_name(other) +
                                        " not fixed by the filter");
    }

    std::map<Eigen::Index, std::vector<double>> by_value;
    for (const auto* record : kept) {
        const double error = record->error_for(pair);
        if (std::isfinite(error)) by_value[axis_value(*record, axis)].push_back(error);
    }

    std::vector<double> log_x, log_y;
    for (const auto& [value, errors] : by_value) {
        const double median = median_of(errors);
        if (median == 0.0)
            raise(Errc::zero_error, "cell median is exactly zero for pair " + pair);
        log_x.push_back(std::log(static_cast<double>(value)));
        log_y.push_back(std::log(median));
    }
    const int m = static_cast<int>(log_x.size());
    if (m < 3)
        raise(Errc::insufficient_points,
              "need >= 3 distinct axis values, have " + std::to_string(m));

    double mean_x = 0.0, mean_y = 0.0;
    for (int i = 0; i < m; ++i) {
        mean_x += log_x[static_cast<std::size_t>(i)];
        mean_y += log_y[static_cast<std::size_t>(i)];
    }
    mean_x /= m;
    mean_y /= m;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (int i = 0; i < m; ++i) {
        const double dx = log_x[static_cast<std::size_t>(i)] - mean_x;
        const double dy = log_y[static_cast<std::size_t>(i)] - mean_y;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if (sxx == 0.0) raise(Errc::insufficient_points, "axis values are all equal");

    SlopeFit fit;
    fit.axis = axis;
    fit.pair = pair;
    fit.slope = sxy / sxx;
    fit.intercept = mean_y - fit.slope * mean_x;
    fit.n_points = m;
    double ss_res = 0.0;
    for (int i = 0; i < m; ++i) {
        const double predicted =
            fit.intercept + fit.slope * log_x[static_cast<std::size_t>(i)];
        const double r = log_y[static_cast<std::size_t>(i)] - predicted;
        ss_res += r * r;
    }
    fit.r_squared = syy == 0.0 ? 1.0 : std::max(0.0, 1.0 - ss_res / syy);
    if (m > 2) {
        const double slope_se = std::sqrt(ss_res / (m - 2) / sxx);
        fit.ci_halfwidth = t_quantile_975(m - 2) * slope_se;
    }
    return fit;
}

namespace {

const char* kCsvHeader =
    "n,d,k,trial,strategy,err_if_exact,err_ns_exact,err_rif_exact,err_drif_exact,"
    "err_if_ns,err_rif_ns,err_drif_ns,err_rif_drif,ns_delta_norm,cert_bound,cert_ok,flag";

} // namespace

void write_records_csv(const std::vector<SweepRecord>& records, const std::string& path) {
    std::ofstream out(path);
    if (!out) raise(Errc::io_failure, "cannot write " + path);
    out << kCsvHeader << "\n";
    for (const auto& r : records) {
        out << r.n << ',' << r.d << ',' << r.k << ',' << r.trial << ','
            << drop_strategy_name(r.strategy) << ',' << format_real(r.err_if_exact) << ','
            << format_real(r.err_ns_exact) << ',' << format_real(r.err_rif_exact) << ','
            << format_real(r.err_drif_exact) << ',' << format_real(r.err_if_ns) << ','
            << format_real(r.err_rif_ns) << ',' << format_real(r.err_drif_ns) << ','
            << format_real(r.err_rif_drif) << ',' << format_real(r.ns_delta_norm) << ','
            << format_real(r.cert_bound) << ',' << (r.cert_ok ? 1 : 0) << ',' << r.flag
            << "\n";
    }
    if (!out) raise(Errc::io_failure, "write failed: " + path);
}

std::vector<SweepRecord> read_records_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) raise(Errc::io_failure, "cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line != kCsvHeader)
        raise(Errc::io_failure, path + ": unexpected records.csv header");

    std::vector<SweepRecord> records;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream row(line);
        std::string field;
        while (std::getline(row, field, ',')) fields.push_back(field);
        if (!line.empty() && line.back() == ',') fields.emplace_back();
        if (fields.size() != 17)
            raise(Errc::io_failure, path + ": malformed row: " + line);
        SweepRecord r;
        r.n = std::stoll(fields[0]);
        r.d = std::stoll(fields[1]);
        r.k = std::stoll(fields[2]);
        r.trial = std::stoi(fields[3]);
        r.strategy = drop_strategy_from_name(fields[4]);
        r.err_if_exact = std::strtod(fields[5].c_str(), nullptr);
        r.err_ns_exact = std::strtod(fields[6].c_str(), nullptr);
        r.err_rif_exact = std::strtod(fields[7].c_str(), nullptr);
        r.err_drif_exact = std::strtod(fields[8].c_str(), nullptr);
        r.err_if_ns = std::strtod(fields[9].c_str(), nullptr);
        r.err_rif_ns = std::strtod(fields[10].c_str(), nullptr);
        r.err_drif_ns = std::strtod(fields[11].c_str(), nullptr);
        r.err_rif_drif = std::strtod(fields[12].c_str(), nullptr);
        r.ns_delta_norm = std::strtod(fields[13].c_str(), nullptr);
        r.cert_bound = std::strtod(fields[14].c_str(), nullptr);
        r.cert_ok = fields[15] == "1";
        r.flag = fields[16];
        records.push_back(std::move(r));
    }
    return records;
}

std::string slope_fits_to_json(const std::vector<SlopeFit>& fits) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& fit : fits) {
        nlohmann::json j;
        j["axis"] = sweep_axis_name(fit.axis);
        j["pair"] = fit.pair;
        j["slope"] = fit.slope;
        j["intercept"] = fit.intercept;
        j["r_squared"] = fit.r_squared;
        j["n_points"] = fit.n_points;
        j["ci_halfwidth"] = fit.ci_halfwidth;
        out.push_back(j);
    }
    nlohmann::json doc;
    doc["schema"] = "dropkit/1";
    doc["slopes"] = out;
    return doc.dump(2);
}

std::vector<std::string> emit_report(const std::vector<SweepRecord>& records,
                                     const std::vector<SlopeFit>& fits,
                                     const std::string& out_dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) raise(Errc::io_failure, "cannot create " + out_dir + ": " + ec.message());

    const std::string records_path = (fs::path(out_dir) / "records.csv").string();
    const std::string slopes_path = (fs::path(out_dir) / "slopes.json").string();
    const std::string summary_path = (fs::path(out_dir) / "summary.md").string();

    write_records_csv(records, records_path);

    {
        std::ofstream out(slopes_path);
        if (!out) raise(Errc::io_failure, "cannot write " + slopes_path);
        out << slope_fits_to_json(fits) << "\n";
    }

    {
        std::ofstream out(summary_path);
        if (!out) raise(Errc::io_failure, "cannot write " + summary_path);
        out << "# Sweep summary\n\n";
        out << "Records: " << records.size() << "\n\n";

        struct CellKey {
            Eigen::Index n, d, k;
            DropStrategy strategy;
            bool operator<(const CellKey& o) const {
                return std::tie(n, d, k, strategy) < std::tie(o.n, o.d, o.k, o.strategy);
            }
        };
        std::map<CellKey, std::vector<const SweepRecord*>> cells;
        for (const auto& r : records)
            cells[{r.n, r.d, r.k, r.strategy}].push_back(&r);

        out << "## Per-cell medians\n\n";
        out << "| n | d | k | strategy | trials | flagged |";
        for (const auto& pair : kErrorPairs) out << " median err_" << pair << " |";
        out << "\n|---|---|---|---|---|---|";
        for (std::size_t i = 0; i < kErrorPairs.size(); ++i) out << "---|";
        out << "\n";
        for (const auto& [key, rows] : cells) {
            std::size_t flagged = 0;
            for (const auto* r : rows)
                if (!r->flag.empty()) ++flagged;
            out << "| " << key.n << " | " << key.d << " | " << key.k << " | "
                << drop_strategy_name(key.strategy) << " | " << rows.size() << " | "
                << flagged << " |";
            for (const auto& pair : kErrorPairs) {
                std::vector<double> values;
                for (const auto* r : rows) {
                    const double e = r->error_for(pair);
                    if (r->flag.empty() && std::isfinite(e)) values.push_back(e);
                }
                out << ' ' << (values.empty() ? "-" : format_real(median_of(values)))
                    << " |";
            }
            out << "\n";
        }

        out << "\n## Slope fits\n\n";
        if (fits.empty()) {
            out << "(none)\n";
        } else {
            out << "| axis | pair | slope | 95% ci | r^2 | points |\n";
            out << "|---|---|---|---|---|---|\n";
            for (const auto& fit : fits)
                out << "| " << sweep_axis_name(fit.axis) << " | " << fit.pair << " | "
                    << format_real(fit.slope) << " | +-" << format_real(fit.ci_halfwidth)
                    << " | " << format_real(fit.r_squared) << " | " << fit.n_points
                    << " |\n";
        }
        if (!out) raise(Errc::io_failure, "write failed: " + summary_path);
    }

    return {records_path, slopes_path, summary_path};
}

namespace {

template <typename T>
std::vector<T> index_list_from_json(const nlohmann::json& node) {
    std::vector<T> values;
    for (const auto& value : node) values.push_back(value.get<T>());
    return values;
}

} // namespace

SweepSpec sweep_spec_from_json_text(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        raise(Errc::bad_config, std::string("sweep config parse error: ") + e.what());
    }

    SweepSpec spec;
    try {
        if (doc.contains("n_grid"))
            spec.n_grid = index_list_from_json<Eigen::Index>(doc["n_grid"]);
        if (doc.contains("d_grid"))
            spec.d_grid = index_list_from_json<Eigen::Index>(doc["d_grid"]);
        if (doc.contains("k_grid"))
            spec.k_grid = index_list_from_json<Eigen::Index>(doc["k_grid"]);
        spec.trials_per_cell = doc.value("trials_per_cell", spec.trials_per_cell);
        if (doc.contains("strategies")) {
            spec.strategies.clear();
            for (const auto& name : doc["strategies"])
                spec.strategies.push_back(drop_strategy_from_name(name.get<std::string>()));
        }
        if (doc.contains("methods"))
            spec.methods = index_list_from_json<std::string>(doc["methods"]);
        spec.lambda = doc.value("lambda", spec.lambda);
        spec.base_seed = doc.value("base_seed", spec.base_seed);
        if (doc.contains("loss")) {
            const auto name = doc["loss"].get<std::string>();
            if (name == "logistic") spec.loss = LossKind::logistic;
            else if (name == "quadratic") spec.loss = LossKind::quadratic;
            else raise(Errc::bad_config, "loss must be logistic or quadratic");
        }
        spec.theta_star_norm = doc.value("theta_star_norm", spec.theta_star_norm);
        spec.certify = doc.value("certify", spec.certify);
        if (doc.contains("certificate")) {
            const auto& c = doc["certificate"];
            spec.cert_config.radius = c.value("radius", spec.cert_config.radius);
            if (c.contains("sigma_mode"))
                spec.cert_config.sigma_mode =
                    sigma_mode_from_name(c["sigma_mode"].get<std::string>());
            spec.cert_config.path_grid = c.value("path_grid", spec.cert_config.path_grid);
            spec.cert_config.ball_samples =
                c.value("ball_samples", spec.cert_config.ball_samples);
            spec.cert_config.inflation = c.value("inflation", spec.cert_config.inflation);
        }
        if (doc.contains("fit")) {
            const auto& f = doc["fit"];
            spec.fit_config.grad_tol = f.value("grad_tol", spec.fit_config.grad_tol);
            spec.fit_config.max_iter = f.value("max_iter", spec.fit_config.max_iter);
            spec.fit_config.damping = f.value("damping", spec.fit_config.damping);
        }
        spec.workers = doc.value("workers", spec.workers);
    } catch (const nlohmann::json::exception& e) {
        raise(Errc::bad_config, std::string("sweep config field error: ") + e.what());
    }
    spec.validate();
    return spec;
}

SweepSpec sweep_spec_from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) raise(Errc::io_failure, "cannot open sweep config: " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return sweep_spec_from_json_text(buffer.str());
}

} // namespace dropkit
