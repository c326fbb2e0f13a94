// kmfg: command-line driver for the mean-field Kuramoto game laboratory.
// Subcommands: thresholds, gmap, penrose, stability, simulate, repro.
// Exit codes: 0 success, 2 config error, 3 numerical failure, 4 non-convergence.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "kmfg/common.hpp"
#include "kmfg/dynamics.hpp"
#include "kmfg/equilibrium.hpp"
#include "kmfg/hjb.hpp"
#include "kmfg/model.hpp"
#include "kmfg/penrose.hpp"
#include "kmfg/report.hpp"
#include "kmfg/stability.hpp"

namespace {

using json = nlohmann::json;

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitNonConvergence = 4;

struct RunConfig {
    double kappa = 1.0;
    double beta = 1.0;
    double sigma = 1.0;
    json dist = {{"kind", "dirac"}, {"nodes", {{0.0, 1.0}}}};
    int grid_n = 256;
    int time_n = 2048;
    double horizon = -1.0;  // <0: module default
    double lambda = -1.0;   // <0: 0.01*sigma^2
    long seed = 0;
    bool quiet = false;
};

kmfg::FrequencyDistribution parse_dist(const json& spec) {
    if (!spec.is_object() || !spec.contains("kind"))
        throw kmfg::domain_error("dist: expected an object with a \"kind\" field");
    std::string kind = spec.at("kind").get<std::string>();
    if (kind == "dirac" || kind == "table") {
        if (!spec.contains("nodes"))
            throw kmfg::domain_error("dist: missing \"nodes\" field for kind=" + kind);
        std::vector<std::pair<double, double>> nodes;
        for (const auto& entry : spec.at("nodes")) {
            if (!entry.is_array() || entry.size() != 2)
                throw kmfg::domain_error("dist: each node must be [omega, weight]");
            nodes.emplace_back(entry[0].get<double>(), entry[1].get<double>());
        }
        bool symmetric = spec.value("symmetric", true);
        if (kind == "table") {
            std::vector<double> ns, ws;
            for (auto& [n, w] : nodes) {
                ns.push_back(n);
                ws.push_back(w);
            }
            return kmfg::FrequencyDistribution::quadrature_table(ns, ws, symmetric);
        }
        return kmfg::FrequencyDistribution::dirac(nodes, symmetric);
    }
    if (kind == "gaussian") {
        if (!spec.contains("variance"))
            throw kmfg::domain_error("dist: missing \"variance\" field for kind=gaussian");
        double mean = spec.value("mean", 0.0);
        double var = spec.at("variance").get<double>();
        int nodes = spec.value("nodes", 64);
        return kmfg::FrequencyDistribution::gaussian(mean, var, nodes);
    }
    if (kind == "uniform") {
        if (!spec.contains("a"))
            throw kmfg::domain_error("dist: missing \"a\" (half-width) field for kind=uniform");
        int nodes = spec.value("nodes", 64);
        return kmfg::FrequencyDistribution::uniform_interval(spec.at("a").get<double>(), nodes);
    }
    throw kmfg::domain_error("dist: unknown kind \"" + kind +
                             "\" (expected dirac|gaussian|uniform|table)");
}

void echo_dist(kmfg::JsonWriter& w, const json& spec) {
    // echo the resolved dist spec with fixed field order
    w.begin_object();
    std::string kind = spec.at("kind").get<std::string>();
    w.field("kind", kind);
    if (kind == "dirac" || kind == "table") {
        w.key("nodes").begin_array();
        for (const auto& entry : spec.at("nodes")) {
            w.begin_array();
            w.value(entry[0].get<double>());
            w.value(entry[1].get<double>());
            w.end_array();
        }
        w.end_array();
        w.field("symmetric", spec.value("symmetric", true));
    } else if (kind == "gaussian") {
        w.field("mean", spec.value("mean", 0.0));
        w.field("variance", spec.at("variance").get<double>());
        w.field("nodes", spec.value("nodes", 64));
    } else if (kind == "uniform") {
        w.field("a", spec.at("a").get<double>());
        w.field("nodes", spec.value("nodes", 64));
    }
    w.end_object();
}

void echo_config(kmfg::JsonWriter& w, const RunConfig& cfg) {
    w.key("params").begin_object();
    w.field("kappa", cfg.kappa);
    w.field("beta", cfg.beta);
    w.field("sigma", cfg.sigma);
    w.field("gamma", cfg.beta + 0.5 * cfg.sigma * cfg.sigma);
    w.field("grid_n", cfg.grid_n);
    w.field("time_n", cfg.time_n);
    w.field("seed", static_cast<double>(cfg.seed));
    w.end_object();
    w.key("dist");
    echo_dist(w, cfg.dist);
}

void emit(const std::string& out_path, const std::string& content, bool quiet) {
    if (out_path.empty() || out_path == "-") {
        std::cout << content;
    } else {
        kmfg::write_text_file(out_path, content);
        if (!quiet) std::cerr << "wrote " << out_path << "\n";
    }
}

// ----- thresholds ---------------------------------------------------------

std::string thresholds_report(const RunConfig& cfg) {
    kmfg::ModelParams params(cfg.kappa, cfg.beta, cfg.sigma);
    auto dist = parse_dist(cfg.dist);
    double kc = kmfg::kappa_c(dist, params);
    double kc0 = params.gamma() * params.sigma * params.sigma;
    double kp = kmfg::kappa_P(dist, params);
    kmfg::JsonWriter w;
    w.begin_object();
    w.field("kappa_c", kc);
    w.field("kappa_P", kp);
    w.field("gamma", params.gamma());
    w.field("kappa_c_delta0", kc0);
    echo_config(w, cfg);
    w.end_object();
    return w.str();
}

// ----- gmap ---------------------------------------------------------------

struct GmapOutputs {
    std::string csv;
    std::string sidecar;
};

GmapOutputs gmap_report(const RunConfig& cfg, double alpha_max, int scan_points, bool* clipped) {
    kmfg::ModelParams params(cfg.kappa, cfg.beta, cfg.sigma);
    auto dist = parse_dist(cfg.dist);
    kmfg::TorusGrid grid(cfg.grid_n);

    *clipped = false;
    if (alpha_max <= 0.0) alpha_max = cfg.kappa;
    if (alpha_max > cfg.kappa) {
        alpha_max = cfg.kappa;
        *clipped = true;
    }
    double step = (scan_points > 1) ? alpha_max / (scan_points - 1) : 0.05 * cfg.kappa;

    kmfg::CsvWriter csv({"alpha", "G_kappa"});
    kmfg::GMapEvaluator G(params, dist, grid);
    for (int k = 0; k < scan_points; ++k) {
        double a = alpha_max * k / (scan_points - 1);
        csv.row({a, G(a)});
    }

    kmfg::FixedPointScan scan;
    scan.alpha_max = alpha_max;
    scan.step = step;
    auto report = kmfg::find_fixed_points(params, dist, scan, grid);

    kmfg::JsonWriter w;
    w.begin_object();
    w.field("kappa", cfg.kappa);
    w.field("alpha_max", alpha_max);
    w.field("scan_points", scan_points);
    w.field("clipped_to_kappa", *clipped);
    w.key("fixed_points").begin_array();
    for (const auto& e : report.fixed_points) {
        w.begin_object();
        w.field("alpha", e.alpha.alpha1);
        w.field("residual", e.residual);
        w.field("g_prime", e.g_prime);
        w.field("tangency_suspected", e.tangency_suspected);
        w.end_object();
    }
    w.end_array();
    w.key("derivative_at_zero").begin_array();
    w.value(report.derivative_at_zero(0, 0));
    w.value(report.derivative_at_zero(0, 1));
    w.value(report.derivative_at_zero(1, 0));
    w.value(report.derivative_at_zero(1, 1));
    w.end_array();
    if (report.failure_boundary)
        w.field("scan_failure_boundary", *report.failure_boundary);
    echo_config(w, cfg);
    w.end_object();
    return {csv.str(), w.str()};
}

// ----- penrose --------------------------------------------------------------

struct PenroseOutputs {
    std::string csv;
    std::string report;
};

PenroseOutputs penrose_report(const RunConfig& cfg, double theta_max, int samples) {
    kmfg::ModelParams params(cfg.kappa, cfg.beta, cfg.sigma);
    auto dist = parse_dist(cfg.dist);
    auto curve = kmfg::trace_curve(dist, params, theta_max, samples);

    kmfg::CsvWriter csv({"theta", "reP", "imP"});
    for (std::size_t i = 0; i < curve.thetas.size(); ++i)
        csv.row({curve.thetas[i], curve.values[i].real(), curve.values[i].imag()});

    double pstar = 0.0;
    for (const auto& c : curve.crossings) pstar = std::max(pstar, c.re_p);
    double kp = pstar > 0.0 ? 2.0 / pstar : std::numeric_limits<double>::infinity();

    kmfg::JsonWriter w;
    w.begin_object();
    w.field("kappa_P", kp);
    w.field("kappa_c", kmfg::kappa_c(dist, params));
    w.field("theta_max", curve.theta_max);
    w.field("samples", static_cast<int>(curve.thetas.size()));
    w.key("crossings").begin_array();
    for (const auto& c : curve.crossings) {
        w.begin_object();
        w.field("theta", c.theta);
        w.field("reP", c.re_p);
        w.end_object();
    }
    w.end_array();
    echo_config(w, cfg);
    w.end_object();
    return {csv.str(), w.str()};
}

// ----- stability ------------------------------------------------------------

// Resolvent trace (t, phi, k) plus Laplace samples {re_z, im_z, re_h, im_h}.
void export_resolvent(const RunConfig& cfg, const std::string& base, double phi_rate) {
    kmfg::ModelParams params(cfg.kappa, cfg.beta, cfg.sigma);
    auto dist = parse_dist(cfg.dist);
    kmfg::TimeGrid tgrid = cfg.horizon > 0 ? kmfg::TimeGrid(cfg.horizon, cfg.time_n)
                                           : kmfg::TimeGrid::defaults(params, cfg.time_n);
    auto phi = kmfg::WeightedSignal::sample(tgrid, phi_rate,
                                            [&](double t) { return std::exp(-phi_rate * t); });
    auto k = kmfg::solve_resolvent(params, dist, cfg.kappa, phi);

    kmfg::CsvWriter csv({"t", "phi", "k"});
    for (int i = 0; i < tgrid.n; ++i)
        csv.row({tgrid.node(i), phi.values(i), k.values(i)});
    kmfg::write_text_file(base + ".csv", csv.str());

    kmfg::JsonWriter w;
    w.begin_object();
    w.field("kappa", cfg.kappa);
    w.field("phi_rate", phi_rate);
    w.key("samples").begin_array();
    for (double re : {0.5, 0.7, 0.9, 1.1}) {
        for (double im : {0.0, 1.0}) {
            kmfg::Complex z(re, im);
            kmfg::Complex h = kmfg::laplace_of_signal(k, z);
            w.begin_object();
            w.field("re_z", z.real());
            w.field("im_z", z.imag());
            w.field("re_h", h.real());
            w.field("im_h", h.imag());
            w.end_object();
        }
    }
    w.end_array();
    echo_config(w, cfg);
    w.end_object();
    kmfg::write_text_file(base + ".laplace.json", w.str());
}

std::string stability_report(const RunConfig& cfg, const std::vector<double>& kappas) {
    kmfg::ModelParams params(cfg.kappa, cfg.beta, cfg.sigma);
    auto dist = parse_dist(cfg.dist);
    double lambda = cfg.lambda > 0 ? cfg.lambda : 0.01 * cfg.sigma * cfg.sigma;
    kmfg::TimeGrid tgrid = cfg.horizon > 0 ? kmfg::TimeGrid(cfg.horizon, cfg.time_n)
                                           : kmfg::TimeGrid::defaults(params, cfg.time_n);

    kmfg::LOperator L(params, dist, tgrid);
    double norm = L.weighted_norm(lambda);
    double bound = kmfg::op_norm_bound(params, lambda);
    double closed = kmfg::op_norm_closed_form(params, dist, lambda);

    bool is_two_dirac = dist.kind() == kmfg::DistKind::dirac_mixture && dist.node_count() == 2 &&
                        std::abs(dist.nodes()[0] + dist.nodes()[1]) < 1e-14;
    double omega0 = is_two_dirac ? std::abs(dist.nodes()[0]) : 0.0;

    std::vector<double> klist = kappas.empty() ? std::vector<double>{cfg.kappa} : kappas;

    kmfg::JsonWriter w;
    w.begin_object();
    w.field("lambda", lambda);
    w.field("op_norm_discrete", norm);
    w.field("op_norm_envelope", bound);
    w.field("op_norm_closed_form", closed);
    w.field("horizon", tgrid.horizon);
    w.key("per_kappa").begin_array();
    for (double kap : klist) {
        w.begin_object();
        w.field("kappa", kap);
        bool norm_ok = kap * norm < 1.0;
        w.field("norm_certificate", norm_ok);
        std::string verdict = norm_ok ? "yes" : "unknown";
        int zc = -1;
        bool laplace_ok = false;
        if (kap > 0) {
            try {
                zc = kmfg::count_zeros(dist, params, kap, 0.0, params.beta);
                w.field("zero_count", zc);
            } catch (const std::exception& e) {
                w.field("zero_count_error", std::string(e.what()));
            }
        } else {
            zc = 0;
            w.field("zero_count", zc);
        }
        if (!norm_ok && is_two_dirac && zc == 0) {
            try {
                auto sol = kmfg::two_dirac_laplace_solve(
                    params, omega0, kap,
                    [](kmfg::Complex z) { return 1.0 / (z + 0.5); }, lambda);
                laplace_ok = true;
                (void)sol;
            } catch (const std::exception&) {
                laplace_ok = false;
            }
            if (laplace_ok) verdict = "yes";
        }
        w.field("laplace_solve", laplace_ok);
        w.field("certificate", verdict);
        w.end_object();
    }
    w.end_array();
    echo_config(w, cfg);
    w.end_object();
    return w.str();
}

// ----- simulate -------------------------------------------------------------

struct SimulateOutputs {
    std::string csv;
    std::string decay;
    std::optional<std::string> densities;
};

SimulateOutputs simulate_report(const RunConfig& cfg, double horizon, int steps, double eps,
                                double damping, bool seed_equilibrium, bool dump_densities) {
    kmfg::ModelParams params(cfg.kappa, cfg.beta, cfg.sigma);
    auto dist = parse_dist(cfg.dist);
    kmfg::TorusGrid grid(cfg.grid_n);
    const std::size_t m = dist.nodes().size();

    kmfg::EvolveOptions opt;
    opt.horizon = horizon;
    opt.steps = steps;
    opt.damping = damping;

    std::vector<kmfg::TorusField> initial;
    double alpha_star = 0.0;
    if (seed_equilibrium) {
        kmfg::FixedPointScan scan;
        auto rep = kmfg::find_fixed_points(params, dist, scan, grid);
        if (rep.fixed_points.empty())
            throw kmfg::numerical_error("simulate: no fixed points found to seed from");
        alpha_star = rep.fixed_points.back().alpha.alpha1;
        kmfg::OrderParameters alpha{alpha_star, 0.0};
        for (std::size_t i = 0; i < m; ++i) {
            auto v = kmfg::solve_stationary_hjb(params, dist.nodes()[i], alpha, grid);
            initial.push_back(kmfg::invariant_measure(params, dist.nodes()[i], v));
            opt.terminal_values.push_back(v);
        }
        opt.h_initial = alpha;
    } else {
        for (std::size_t i = 0; i < m; ++i) {
            kmfg::TorusField f(grid);
            for (int j = 0; j < grid.n; ++j)
                f.values(j) = (1.0 + eps * std::cos(grid.point(j))) / kmfg::two_pi;
            initial.push_back(f);
        }
    }

    auto traj = kmfg::evolve_mfg(params, dist, initial, opt);

    kmfg::CsvWriter csv({"t", "h1", "h2", "gm_max", "phi"});
    for (int k = 0; k <= traj.steps; ++k)
        csv.row({traj.time(k), traj.h1[k], traj.h2[k], traj.gm_max[k], traj.phi[k]});

    kmfg::JsonWriter w;
    w.begin_object();
    w.field("horizon", traj.horizon);
    w.field("steps", traj.steps);
    w.field("damping", damping);
    w.field("epsilon", eps);
    w.field("seed_equilibrium", seed_equilibrium);
    if (seed_equilibrium) w.field("alpha_star", alpha_star);
    w.field("sweeps", static_cast<int>(traj.picard_residuals.size()));
    w.field("final_residual", traj.picard_residuals.back());
    try {
        auto fit = kmfg::fit_decay_rate(traj);
        w.key("decay_fit").begin_object();
        w.field("lambda_fit", fit.lambda_fit);
        w.field("c_fit", fit.c_fit);
        w.field("r_squared", fit.r_squared);
        w.end_object();
    } catch (const std::exception& e) {
        w.field("decay_fit_error", std::string(e.what()));
    }
    echo_config(w, cfg);
    w.end_object();

    SimulateOutputs out{csv.str(), w.str(), std::nullopt};
    if (dump_densities) {
        std::ostringstream os;
        os << "t,omega";
        for (int j = 0; j < grid.n; ++j) os << ",x" << j;
        os << "\n";
        int stride = std::max(1, traj.steps / 50);
        for (int k = 0; k <= traj.steps; k += stride) {
            for (std::size_t i = 0; i < m; ++i) {
                os << kmfg::format_number(traj.time(k)) << ","
                   << kmfg::format_number(traj.omegas[i]);
                for (int j = 0; j < grid.n; ++j)
                    os << "," << kmfg::format_number(traj.densities[i][k].values(j));
                os << "\n";
            }
        }
        out.densities = os.str();
    }
    return out;
}

// ----- repro ----------------------------------------------------------------

// Reproduction bundle: the two-Dirac threshold pair, the delta_0 and gaussian
// benchmarks, the kappa=9 G-map fixed points, and the Penrose crossing set.
std::string repro_bundle() {
    kmfg::JsonWriter w;
    w.begin_object();

    {  // gaussian benchmark (sigma=2) and its delta_0 baseline
        kmfg::ModelParams params(1.0, 1.0, 2.0);
        auto dist = kmfg::FrequencyDistribution::gaussian(0.0, 1.0);
        w.key("example_gaussian").begin_object();
        w.field("kappa_c", kmfg::kappa_c(dist, params));
        w.field("kappa_c_delta0", params.gamma() * params.sigma * params.sigma);
        w.end_object();
    }
    {  // two-Dirac thresholds
        kmfg::ModelParams params(1.0, 1.0, 1.0);
        auto dist = kmfg::FrequencyDistribution::two_dirac(2.0);
        w.key("example_two_dirac").begin_object();
        w.field("kappa_c", kmfg::kappa_c(dist, params));
        w.field("kappa_P", kmfg::kappa_P(dist, params));
        w.end_object();
    }
    {  // G-map fixed points at kappa=9
        kmfg::ModelParams params(9.0, 1.0, 1.0);
        auto dist = kmfg::FrequencyDistribution::two_dirac(2.0);
        kmfg::TorusGrid grid(256);
        kmfg::FixedPointScan scan;
        scan.alpha_max = 9.0;
        scan.step = 9.0 / 63.0;
        auto rep = kmfg::find_fixed_points(params, dist, scan, grid);
        w.key("gmap_fixed_points_kappa9").begin_array();
        for (const auto& e : rep.fixed_points) w.value(e.alpha.alpha1);
        w.end_array();
    }
    {  // Penrose crossings for the two-Dirac example
        kmfg::ModelParams params(1.0, 1.0, 1.0);
        auto dist = kmfg::FrequencyDistribution::two_dirac(2.0);
        auto curve = kmfg::trace_curve(dist, params);
        w.key("penrose_crossings_two_dirac").begin_array();
        for (const auto& c : curve.crossings) {
            w.begin_array();
            w.value(c.theta);
            w.value(c.re_p);
            w.end_array();
        }
        w.end_array();
    }
    w.end_object();
    return w.str();
}

int run_repro(const std::string& out_dir, const std::string& expected_path, bool quiet) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    std::string bundle = repro_bundle();
    kmfg::write_text_file(out_dir + "/repro.json", bundle);
    if (!quiet) std::cerr << "wrote " << out_dir << "/repro.json\n";

    std::ifstream exp(expected_path);
    if (!exp) {
        std::cerr << "repro: expected file not found: " << expected_path << "\n";
        return kExitConfig;
    }
    std::stringstream buf;
    buf << exp.rdbuf();
    std::string expected = buf.str();

    if (expected == bundle) {
        std::cout << "repro: byte-identical to " << expected_path << "\n";
        return 0;
    }
    // fall back to numeric comparison: report first divergence
    json a = json::parse(bundle), b = json::parse(expected);
    if (a == b) {
        std::cout << "repro: semantically identical (formatting differs)\n";
        return 0;
    }
    std::cerr << "repro: outputs diverge from " << expected_path << "\n";
    return kExitNumerical;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mean-field Kuramoto game laboratory"};
    app.require_subcommand(1);

    RunConfig cfg;
    std::string config_path, out_path, dist_inline;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON config file");
        cmd->add_option("--out", out_path, "output path (base path for multi-file commands)");
        cmd->add_option("--kappa", cfg.kappa, "coupling strength");
        cmd->add_option("--beta", cfg.beta, "discount rate");
        cmd->add_option("--sigma", cfg.sigma, "noise strength");
        cmd->add_option("--dist", dist_inline, "inline JSON distribution spec");
        cmd->add_option("--grid-n", cfg.grid_n, "torus grid points");
        cmd->add_option("--time-n", cfg.time_n, "time grid points");
        cmd->add_option("--horizon", cfg.horizon, "time horizon");
        cmd->add_option("--lambda", cfg.lambda, "weighted-norm decay rate");
        cmd->add_flag("--quiet", cfg.quiet, "suppress progress messages");
    };

    auto* cmd_thresholds = app.add_subcommand("thresholds", "kappa_c and kappa_P report");
    add_common(cmd_thresholds);

    auto* cmd_gmap = app.add_subcommand("gmap", "G_kappa scan and fixed points");
    double alpha_max = -1.0;
    int scan_points = 64;
    cmd_gmap->add_option("--alpha-max", alpha_max, "scan upper end (default kappa)");
    cmd_gmap->add_option("--scan-points", scan_points, "number of scan points");
    add_common(cmd_gmap);

    auto* cmd_penrose = app.add_subcommand("penrose", "Penrose curve and crossings");
    double theta_max = -1.0;
    int samples = 4001;
    cmd_penrose->add_option("--theta-max", theta_max, "curve frequency cap (default from decay bound)");
    cmd_penrose->add_option("--samples", samples, "curve sample count");
    add_common(cmd_penrose);

    auto* cmd_stability = app.add_subcommand("stability", "operator norms and zero counts");
    std::vector<double> kappa_list;
    std::string resolvent_base;
    double phi_rate = 0.1;
    cmd_stability->add_option("--kappa-list", kappa_list, "kappa values to certify");
    cmd_stability->add_option("--export-resolvent", resolvent_base,
                              "also solve (I-kappa L)k = phi and write <base>.csv + <base>.laplace.json");
    cmd_stability->add_option("--phi-rate", phi_rate, "decay rate of the probe phi = e^{-rate t}");
    add_common(cmd_stability);

    auto* cmd_simulate = app.add_subcommand("simulate", "coupled HJB-KFP trajectory");
    double sim_eps = 0.1, sim_damping = 0.5;
    int sim_steps = 2000;
    bool seed_eq = false, dump_densities = false;
    cmd_simulate->add_option("--steps", sim_steps, "time steps");
    cmd_simulate->add_option("--eps", sim_eps, "cosine perturbation amplitude");
    cmd_simulate->add_option("--damping", sim_damping, "Picard damping in (0,1]");
    cmd_simulate->add_flag("--seed-equilibrium", seed_eq, "seed at the largest G-map fixed point");
    cmd_simulate->add_flag("--dump-densities", dump_densities, "emit density snapshots CSV");
    add_common(cmd_simulate);

    auto* cmd_repro = app.add_subcommand("repro", "reproduction bundle + diff vs expected");
    std::string repro_out = "repro_out", expected_path = "expected/repro_expected.json";
    cmd_repro->add_option("--out", repro_out, "output directory");
    cmd_repro->add_option("--expected", expected_path, "expected JSON to diff against");
    cmd_repro->add_flag("--quiet", cfg.quiet, "suppress progress messages");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    // flags override file values
    auto flag_given = [&](const char* name) {
        if (app.get_subcommands().empty()) return false;
        auto* opt = app.get_subcommands().front()->get_option_no_throw(name);
        return opt && opt->count() > 0;
    };

    try {
        if (!config_path.empty()) {
            std::ifstream f(config_path);
            if (!f) throw kmfg::domain_error("cannot open config: " + config_path);
            json j = json::parse(f);
            if (j.contains("model")) {
                const auto& mj = j.at("model");
                if (mj.contains("kappa") && !flag_given("--kappa"))
                    cfg.kappa = mj.at("kappa").get<double>();
                if (mj.contains("beta") && !flag_given("--beta"))
                    cfg.beta = mj.at("beta").get<double>();
                if (mj.contains("sigma") && !flag_given("--sigma"))
                    cfg.sigma = mj.at("sigma").get<double>();
            }
            if (j.contains("dist") && dist_inline.empty()) cfg.dist = j.at("dist");
            if (j.contains("grid_n") && !flag_given("--grid-n"))
                cfg.grid_n = j.at("grid_n").get<int>();
            if (j.contains("time_n") && !flag_given("--time-n"))
                cfg.time_n = j.at("time_n").get<int>();
            if (j.contains("horizon") && !flag_given("--horizon"))
                cfg.horizon = j.at("horizon").get<double>();
            if (j.contains("lambda") && !flag_given("--lambda"))
                cfg.lambda = j.at("lambda").get<double>();
            if (j.contains("seed")) cfg.seed = j.at("seed").get<long>();
        }
        if (!dist_inline.empty()) cfg.dist = json::parse(dist_inline);
    } catch (const json::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const kmfg::domain_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    }

    try {
        if (*cmd_thresholds) {
            emit(out_path, thresholds_report(cfg), cfg.quiet);
        } else if (*cmd_gmap) {
            bool clipped = false;
            auto out = gmap_report(cfg, alpha_max, scan_points, &clipped);
            if (clipped && !cfg.quiet)
                std::cerr << "warning: alpha_max clipped to kappa (G <= kappa)\n";
            std::string base = out_path.empty() ? "gmap" : out_path;
            kmfg::write_text_file(base + ".csv", out.csv);
            kmfg::write_text_file(base + ".json", out.sidecar);
            if (!cfg.quiet) std::cerr << "wrote " << base << ".csv, " << base << ".json\n";
        } else if (*cmd_penrose) {
            auto out = penrose_report(cfg, theta_max, samples);
            std::string base = out_path.empty() ? "penrose" : out_path;
            kmfg::write_text_file(base + ".csv", out.csv);
            kmfg::write_text_file(base + ".json", out.report);
            if (!cfg.quiet) std::cerr << "wrote " << base << ".csv, " << base << ".json\n";
        } else if (*cmd_stability) {
            emit(out_path, stability_report(cfg, kappa_list), cfg.quiet);
            if (!resolvent_base.empty()) {
                export_resolvent(cfg, resolvent_base, phi_rate);
                if (!cfg.quiet)
                    std::cerr << "wrote " << resolvent_base << ".csv, " << resolvent_base
                              << ".laplace.json\n";
            }
        } else if (*cmd_simulate) {
            auto out = simulate_report(cfg, cfg.horizon, sim_steps, sim_eps, sim_damping,
                                       seed_eq, dump_densities);
            std::string base = out_path.empty() ? "simulate" : out_path;
            kmfg::write_text_file(base + ".csv", out.csv);
            kmfg::write_text_file(base + ".json", out.decay);
            if (out.densities)
                kmfg::write_text_file(base + ".densities.csv", *out.densities);
            if (!cfg.quiet) std::cerr << "wrote " << base << ".csv, " << base << ".json\n";
        } else if (*cmd_repro) {
            return run_repro(repro_out, expected_path, cfg.quiet);
        }
    } catch (const kmfg::picard_error& e) {
        std::cerr << "non-convergence: " << e.what() << "\n";
        std::cerr << "residual history:";
        for (double r : e.residual_history()) std::cerr << " " << kmfg::format_number(r);
        std::cerr << "\n";
        return kExitNonConvergence;
    } catch (const kmfg::convergence_error& e) {
        std::cerr << "non-convergence: " << e.what() << "\n";
        return kExitNonConvergence;
    } catch (const kmfg::domain_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    }
    return 0;
}
