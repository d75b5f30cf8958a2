// dropkit: data-attribution toolkit for convex ERM.
// Subcommands: synth, fit, attribute, certify, sweep, slopes, theory-check.
// Exit codes: 0 success, 1 domain error (one-line machine-parsable message on
// stderr), 2 usage error. All outputs are files; stdout carries the resolved
// configuration followed by a human summary.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dropkit/attribution.hpp"
#include "dropkit/certificate.hpp"
#include "dropkit/dataset.hpp"
#include "dropkit/erm.hpp"
#include "dropkit/population.hpp"
#include "dropkit/sweep.hpp"
#include "dropkit/synthgen.hpp"

namespace {

using nlohmann::json;

void print_resolved(const std::string& command, const json& config) {
    json line;
    line["command"] = command;
    line["config"] = config;
    std::cout << line.dump() << "\n";
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) dropkit::raise(dropkit::Errc::io_failure, "cannot write " + path);
    out << text << "\n";
    if (!out) dropkit::raise(dropkit::Errc::io_failure, "write failed: " + path);
}

std::string sidecar_path(const std::string& csv_path) {
    std::filesystem::path p(csv_path);
    p.replace_extension(".meta.json");
    return p.string();
}

std::vector<Eigen::Index> parse_drop_list(const std::string& text) {
    std::vector<Eigen::Index> indices;
    std::string token;
    std::stringstream in(text);
    while (std::getline(in, token, ',')) {
        if (token.empty()) continue;
        try {
            indices.push_back(std::stoll(token));
        } catch (const std::exception&) {
            dropkit::raise(dropkit::Errc::bad_config, "bad drop index: " + token);
        }
    }
    std::sort(indices.begin(), indices.end());
    return indices;
}

int default_workers() {
    if (const char* env = std::getenv("DROPKIT_WORKERS")) {
        const int workers = std::atoi(env);
        if (workers > 0) return workers;
    }
    return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

struct DropFlags {
    std::string drop_list;
    std::string strategy = "random";
    Eigen::Index k = 0;
    std::uint64_t drop_seed = 0;

    void attach(CLI::App* cmd) {
        cmd->add_option("--drop", drop_list,
                        "0-based comma-separated sample indices to remove");
        cmd->add_option("--strategy", strategy,
                        "sampled drop strategy: random|adversarial_aligned|leverage_topk");
        cmd->add_option("--k", k, "drop-set size for sampled strategies");
        cmd->add_option("--drop-seed", drop_seed, "seed for sampled strategies");
    }

    dropkit::DropSet resolve(const dropkit::Dataset& data,
                             const dropkit::ModelState& state) const {
        if (!drop_list.empty()) {
            dropkit::DropSet drop;
            drop.indices = parse_drop_list(drop_list);
            drop.strategy = dropkit::DropStrategy::explicit_list;
            drop.validate(data.n());
            return drop;
        }
        return dropkit::sample_dropset(data, state,
                                       dropkit::drop_strategy_from_name(strategy), k,
                                       drop_seed);
    }

    json describe() const {
        json out;
        if (!drop_list.empty()) {
            out["drop"] = drop_list;
        } else {
            out["strategy"] = strategy;
            out["k"] = static_cast<long long>(k);
            out["drop_seed"] = drop_seed;
        }
        return out;
    }
};

struct FitFlags {
    std::string loss = "logistic";
    double lambda = 0.0;
    double grad_tol = 1e-10;
    int max_iter = 100;
    double damping = 1.0;

    void attach(CLI::App* cmd) {
        cmd->add_option("--loss", loss, "loss kind: logistic|quadratic");
        cmd->add_option("--lambda", lambda, "L2 coefficient (total n*lambda/2*||theta||^2)");
        cmd->add_option("--grad-tol", grad_tol, "gradient-norm stopping tolerance");
        cmd->add_option("--max-iter", max_iter, "Newton iteration cap");
        cmd->add_option("--damping", damping, "initial Newton step factor in (0,1]");
    }

    dropkit::LossSpec loss_spec() const {
        dropkit::LossSpec spec;
        if (loss == "logistic") spec.kind = dropkit::LossKind::logistic;
        else if (loss == "quadratic") spec.kind = dropkit::LossKind::quadratic;
        else dropkit::raise(dropkit::Errc::bad_config, "loss must be logistic or quadratic");
        spec.lambda = lambda;
        return spec;
    }

    dropkit::FitConfig fit_config() const {
        dropkit::FitConfig config;
        config.grad_tol = grad_tol;
        config.max_iter = max_iter;
        config.damping = damping;
        return config;
    }

    json describe() const {
        return json{{"loss", loss},
                    {"lambda", lambda},
                    {"grad_tol", grad_tol},
                    {"max_iter", max_iter},
                    {"damping", damping}};
    }
};

std::vector<double> to_std(const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

int run_synth(Eigen::Index n, Eigen::Index d, double theta_star_norm, double lambda,
              std::uint64_t seed, const std::string& out) {
    print_resolved("synth", json{{"n", static_cast<long long>(n)},
                                 {"d", static_cast<long long>(d)},
                                 {"theta_star_norm", theta_star_norm},
                                 {"lambda", lambda},
                                 {"seed", seed},
                                 {"out", out}});
    dropkit::SynthConfig config;
    config.n = n;
    config.d = d;
    config.theta_star_norm = theta_star_norm;
    config.lambda = lambda;
    config.seed = seed;
    const dropkit::SynthInstance instance = dropkit::generate(config);
    dropkit::write_dataset_csv(instance.dataset, out);

    json meta;
    meta["schema"] = "dropkit/1";
    meta["theta_star"] = to_std(instance.theta_star);
    meta["seed"] = instance.seed;
    meta["n"] = static_cast<long long>(n);
    meta["d"] = static_cast<long long>(d);
    const std::string meta_path = sidecar_path(out);
    write_text(meta_path, meta.dump(2));

    std::cout << "wrote " << out << " and " << meta_path << "\n";
    return 0;
}

int run_fit(const std::string& dataset_path, const FitFlags& flags, const std::string& out) {
    json config = flags.describe();
    config["dataset"] = dataset_path;
    config["out"] = out;
    print_resolved("fit", config);

    const dropkit::Dataset data = dropkit::read_dataset_csv(dataset_path);
    const dropkit::FitReport report = dropkit::fit(data, flags.loss_spec(), flags.fit_config());

    json model;
    model["schema"] = "dropkit/1";
    model["theta"] = to_std(report.theta);
    model["final_grad_norm"] = report.final_grad_norm;
    model["iterations"] = report.iterations;
    model["converged"] = report.converged;
    model["loss"] = flags.loss;
    model["lambda"] = flags.lambda;
    write_text(out, model.dump(2));

    std::cout << (report.converged ? "converged" : "NOT converged") << " in "
              << report.iterations << " iterations, ||grad|| = " << report.final_grad_norm
              << "; wrote " << out << "\n";
    return report.converged ? 0 : 1;
}

int run_attribute(const std::string& dataset_path, const FitFlags& fit_flags,
                  const DropFlags& drop_flags, const std::string& methods_text,
                  const std::string& out) {
    json config = fit_flags.describe();
    config["dataset"] = dataset_path;
    config["methods"] = methods_text;
    config["out"] = out;
    config.update(drop_flags.describe());
    print_resolved("attribute", config);

    const dropkit::Dataset data = dropkit::read_dataset_csv(dataset_path);
    const dropkit::LossSpec spec = fit_flags.loss_spec();
    const dropkit::FitConfig fit_config = fit_flags.fit_config();

    const dropkit::FitReport fitted = dropkit::fit(data, spec, fit_config);
    if (!fitted.converged)
        dropkit::raise(dropkit::Errc::numerical_overflow,
                       "full-sample fit did not converge; cannot attribute");
    const dropkit::ModelState state =
        dropkit::build_state(data, spec, fitted.theta, dropkit::all_samples(data.n()));
    const dropkit::DropSet drop = drop_flags.resolve(data, state);

    std::set<std::string> methods;
    {
        std::stringstream in(methods_text);
        std::string token;
        while (std::getline(in, token, ',')) {
            if (!token.empty()) methods.insert(token);
        }
    }

    std::vector<dropkit::AttributionEstimate> estimates;
    std::optional<dropkit::AttributionEstimate> ns;
    if (methods.count("if")) estimates.push_back(dropkit::estimate_if(state, drop));
    if (methods.count("ns")) {
        ns = dropkit::estimate_ns(state, drop);
        estimates.push_back(*ns);
    }
    if (methods.count("rif")) estimates.push_back(dropkit::estimate_rif(state, drop));
    if (methods.count("drif")) estimates.push_back(dropkit::estimate_drif(state, drop));
    if (methods.count("exact")) {
        dropkit::FitConfig oracle_config = fit_config;
        oracle_config.warm_start = ns ? ns->theta_est : fitted.theta;
        const dropkit::FitReport exact =
            dropkit::retrain_without(data, spec, drop, oracle_config);
        dropkit::AttributionEstimate estimate;
        estimate.method = dropkit::Method::EXACT;
        estimate.theta_est = exact.theta;
        estimate.delta = exact.theta - fitted.theta;
        estimates.push_back(estimate);
    }
    if (estimates.empty())
        dropkit::raise(dropkit::Errc::bad_config, "no methods requested: " + methods_text);

    json out_doc;
    out_doc["schema"] = "dropkit/1";
    out_doc["drop_indices"] =
        std::vector<long long>(drop.indices.begin(), drop.indices.end());
    out_doc["strategy"] = dropkit::drop_strategy_name(drop.strategy);
    out_doc["estimates"] = json::array();
    for (const auto& estimate : estimates)
        out_doc["estimates"].push_back(json::parse(dropkit::attribution_to_json(estimate)));
    write_text(out, out_doc.dump(2));

    std::cout << "wrote " << estimates.size() << " estimates (k=" << drop.k() << ") to "
              << out << "\n";
    return 0;
}

int run_certify(const std::string& dataset_path, const FitFlags& fit_flags,
                const DropFlags& drop_flags, const dropkit::CertificateConfig& cert_config,
                const std::string& sigma, const std::string& out) {
    json config = fit_flags.describe();
    config["dataset"] = dataset_path;
    config["r"] = cert_config.radius;
    config["sigma"] = sigma;
    config["grid"] = cert_config.path_grid;
    config["samples"] = cert_config.ball_samples;
    config["inflation"] = cert_config.inflation;
    config["cert_seed"] = cert_config.seed;
    config["out"] = out;
    config.update(drop_flags.describe());
    print_resolved("certify", config);

    const dropkit::Dataset data = dropkit::read_dataset_csv(dataset_path);
    const dropkit::LossSpec spec = fit_flags.loss_spec();
    const dropkit::FitReport fitted = dropkit::fit(data, spec, fit_flags.fit_config());
    if (!fitted.converged)
        dropkit::raise(dropkit::Errc::numerical_overflow,
                       "full-sample fit did not converge; cannot certify");
    const dropkit::ModelState state =
        dropkit::build_state(data, spec, fitted.theta, dropkit::all_samples(data.n()));
    const dropkit::DropSet drop = drop_flags.resolve(data, state);

    const dropkit::Certificate cert = dropkit::certify_ns(state, drop, cert_config);
    write_text(out, dropkit::certificate_to_json(cert));
    std::cout << "condition " << (cert.condition_ok ? "holds" : "FAILS") << "; c_h=" << cert.c_h
              << " c_op=" << cert.c_op << " bound="
              << (cert.condition_ok ? std::to_string(cert.bound) : std::string("inf"))
              << "; wrote " << out << "\n";
    return 0;
}

int run_sweep_cmd(const std::string& config_path, const std::string& out_dir, int workers) {
    dropkit::SweepSpec spec = dropkit::sweep_spec_from_json_file(config_path);
    if (workers > 0) spec.workers = workers;
    if (spec.workers == 0) spec.workers = default_workers();

    json config;
    config["config"] = config_path;
    config["out"] = out_dir;
    config["workers"] = spec.workers;
    config["n_grid"] = std::vector<long long>(spec.n_grid.begin(), spec.n_grid.end());
    config["d_grid"] = std::vector<long long>(spec.d_grid.begin(), spec.d_grid.end());
    config["k_grid"] = std::vector<long long>(spec.k_grid.begin(), spec.k_grid.end());
    config["trials_per_cell"] = spec.trials_per_cell;
    config["lambda"] = spec.lambda;
    config["base_seed"] = spec.base_seed;
    config["certify"] = spec.certify;
    print_resolved("sweep", config);

    const std::vector<dropkit::SweepRecord> records = dropkit::run_sweep(spec);

    // slope fits for every axis that actually sweeps while the others stay pinned
    std::vector<dropkit::SlopeFit> fits;
    const auto grid_size = [&](dropkit::SweepAxis axis) {
        switch (axis) {
        case dropkit::SweepAxis::n: return spec.n_grid.size();
        case dropkit::SweepAxis::d: return spec.d_grid.size();
        case dropkit::SweepAxis::k: return spec.k_grid.size();
        }
        return std::size_t{0};
    };
    for (const auto axis :
         {dropkit::SweepAxis::n, dropkit::SweepAxis::d, dropkit::SweepAxis::k}) {
        if (grid_size(axis) < 3) continue;
        bool others_pinned = true;
        for (const auto other :
             {dropkit::SweepAxis::n, dropkit::SweepAxis::d, dropkit::SweepAxis::k})
            if (other != axis && grid_size(other) != 1) others_pinned = false;
        if (!others_pinned) continue;
        for (const auto& strategy : spec.strategies) {
            for (const auto& pair : dropkit::kErrorPairs) {
                dropkit::SlopeFilter filter;
                filter.strategy = strategy;
                try {
                    fits.push_back(dropkit::fit_scaling(records, axis, pair, filter));
                } catch (const dropkit::Error& error) {
                    if (error.code() != dropkit::Errc::zero_error &&
                        error.code() != dropkit::Errc::insufficient_points)
                        throw;
                }
            }
        }
    }

    const auto manifest = dropkit::emit_report(records, fits, out_dir);
    std::size_t flagged = 0;
    for (const auto& record : records)
        if (!record.flag.empty()) ++flagged;
    std::cout << records.size() << " records (" << flagged << " flagged), " << fits.size()
              << " slope fits\n";
    for (const auto& path : manifest) std::cout << "wrote " << path << "\n";
    return 0;
}

int run_slopes(const std::string& records_path, const std::string& axis,
               const std::string& pair, std::optional<long long> fix_n,
               std::optional<long long> fix_d, std::optional<long long> fix_k,
               const std::string& strategy, const std::string& out) {
    json config{{"records", records_path}, {"axis", axis}, {"pair", pair}, {"out", out}};
    if (fix_n) config["n"] = *fix_n;
    if (fix_d) config["d"] = *fix_d;
    if (fix_k) config["k"] = *fix_k;
    if (!strategy.empty()) config["strategy"] = strategy;
    print_resolved("slopes", config);

    const auto records = dropkit::read_records_csv(records_path);
    dropkit::SlopeFilter filter;
    if (fix_n) filter.n = *fix_n;
    if (fix_d) filter.d = *fix_d;
    if (fix_k) filter.k = *fix_k;
    if (!strategy.empty()) filter.strategy = dropkit::drop_strategy_from_name(strategy);

    const dropkit::SlopeFit fit =
        dropkit::fit_scaling(records, dropkit::sweep_axis_from_name(axis), pair, filter);
    const std::string text = dropkit::slope_fits_to_json({fit});
    if (!out.empty()) {
        write_text(out, text);
        std::cout << "wrote " << out << "\n";
    }
    std::cout << "slope(" << pair << " vs " << axis << ") = " << fit.slope << " +- "
              << fit.ci_halfwidth << " (r^2 = " << fit.r_squared
              << ", points = " << fit.n_points << ")\n";
    return 0;
}

int run_theory_check(double t) {
    print_resolved("theory-check", json{{"t", t}});
    const dropkit::ThirdMomentCoeffs coeffs = dropkit::population_third_coeffs(t);
    std::printf("a(%g) = %.12g (%s)\n", t, coeffs.a, coeffs.a < 0 ? "negative" : "NOT negative");
    std::printf("b(%g) = %.12g (%s)\n", t, coeffs.b, coeffs.b < 0 ? "negative" : "NOT negative");
    return (coeffs.a < 0 && coeffs.b < 0) ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"dropkit: leave-k-out data attribution for convex ERM"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a Gaussian logistic benchmark");
    Eigen::Index synth_n = 1000, synth_d = 8;
    double synth_norm = 1.0, synth_lambda = 0.0;
    std::uint64_t synth_seed = 0;
    std::string synth_out = "dataset.csv";
    synth->add_option("--n", synth_n, "samples")->required();
    synth->add_option("--d", synth_d, "dimensions")->required();
    synth->add_option("--theta-star-norm", synth_norm, "planted parameter norm");
    synth->add_option("--lambda", synth_lambda, "recorded L2 coefficient");
    synth->add_option("--seed", synth_seed, "generator seed");
    synth->add_option("--out", synth_out, "output CSV path")->required();

    // fit
    auto* fit_cmd = app.add_subcommand("fit", "fit the full-sample model");
    std::string fit_dataset, fit_out = "model.json";
    FitFlags fit_flags;
    fit_cmd->add_option("--dataset", fit_dataset, "dataset CSV")->required();
    fit_flags.attach(fit_cmd);
    fit_cmd->add_option("--out", fit_out, "model JSON path");

    // attribute
    auto* attr = app.add_subcommand("attribute", "estimate leave-T-out parameters");
    std::string attr_dataset, attr_methods = "if,ns,rif,drif", attr_out = "estimates.json";
    FitFlags attr_fit;
    DropFlags attr_drop;
    attr->add_option("--dataset", attr_dataset, "dataset CSV")->required();
    attr_fit.attach(attr);
    attr_drop.attach(attr);
    attr->add_option("--methods", attr_methods, "comma list of if,ns,rif,drif,exact");
    attr->add_option("--out", attr_out, "estimates JSON path");

    // certify
    auto* cert = app.add_subcommand("certify", "sampled NS-error certificate");
    std::string cert_dataset, cert_sigma = "identity", cert_out = "certificate.json";
    FitFlags cert_fit;
    DropFlags cert_drop;
    dropkit::CertificateConfig cert_config;
    cert->add_option("--dataset", cert_dataset, "dataset CSV")->required();
    cert_fit.attach(cert);
    cert_drop.attach(cert);
    cert->add_option("--r", cert_config.radius, "certificate ball radius");
    cert->add_option("--sigma", cert_sigma, "metric: identity|hessian");
    cert->add_option("--grid", cert_config.path_grid, "segment grid points");
    cert->add_option("--samples", cert_config.ball_samples, "sphere samples");
    cert->add_option("--inflation", cert_config.inflation, "slack multiplier");
    cert->add_option("--cert-seed", cert_config.seed, "sphere sampling seed");
    cert->add_option("--out", cert_out, "certificate JSON path");

    // sweep
    auto* sweep = app.add_subcommand("sweep", "run an (n,d,k) scaling sweep");
    std::string sweep_config, sweep_out = "results";
    int sweep_workers = 0;
    sweep->add_option("--config", sweep_config, "sweep spec JSON")->required();
    sweep->add_option("--out", sweep_out, "output directory")->required();
    sweep->add_option("--workers", sweep_workers,
                      "worker threads (default: logical cores or DROPKIT_WORKERS)");

    // slopes
    auto* slopes = app.add_subcommand("slopes", "fit a log-log slope from records.csv");
    std::string slopes_records, slopes_axis, slopes_pair, slopes_strategy, slopes_out;
    long long slopes_n = -1, slopes_d = -1, slopes_k = -1;
    slopes->add_option("--records", slopes_records, "records.csv path")->required();
    slopes->add_option("--axis", slopes_axis, "n|d|k")->required();
    slopes->add_option("--pair", slopes_pair, "error pair, e.g. ns_exact")->required();
    slopes->add_option("--n", slopes_n, "pin n");
    slopes->add_option("--d", slopes_d, "pin d");
    slopes->add_option("--k", slopes_k, "pin k");
    slopes->add_option("--strategy", slopes_strategy, "pin strategy");
    slopes->add_option("--out", slopes_out, "slopes JSON path");

    // theory-check
    auto* theory = app.add_subcommand("theory-check",
                                      "signs of the population third-moment coefficients");
    double theory_t = 1.0;
    theory->add_option("--t", theory_t, "parameter norm t > 0")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == static_cast<int>(CLI::ExitCodes::Success))
            return app.exit(e); // --help and friends
        app.exit(e);
        return 2;
    }

    try {
        if (synth->parsed())
            return run_synth(synth_n, synth_d, synth_norm, synth_lambda, synth_seed, synth_out);
        if (fit_cmd->parsed()) return run_fit(fit_dataset, fit_flags, fit_out);
        if (attr->parsed())
            return run_attribute(attr_dataset, attr_fit, attr_drop, attr_methods, attr_out);
        if (cert->parsed()) {
            cert_config.sigma_mode = dropkit::sigma_mode_from_name(cert_sigma);
            return run_certify(cert_dataset, cert_fit, cert_drop, cert_config, cert_sigma,
                               cert_out);
        }
        if (sweep->parsed()) return run_sweep_cmd(sweep_config, sweep_out, sweep_workers);
        if (slopes->parsed())
            return run_slopes(slopes_records, slopes_axis, slopes_pair,
                              slopes_n >= 0 ? std::optional<long long>(slopes_n) : std::nullopt,
                              slopes_d >= 0 ? std::optional<long long>(slopes_d) : std::nullopt,
                              slopes_k >= 0 ? std::optional<long long>(slopes_k) : std::nullopt,
                              slopes_strategy, slopes_out);
        if (theory->parsed()) return run_theory_check(theory_t);
    } catch (const dropkit::Error& error) {
        std::cerr << "error: code=" << dropkit::errc_name(error.code()) << " message=\""
                  << error.what() << "\"\n";
        return 1;
    } catch (const std::exception& error) {
        std::cerr << "error: code=Internal message=\"" << error.what() << "\"\n";
        return 1;
    }
    return 2;
}
