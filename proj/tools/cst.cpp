// cst: file-mediated pipeline for non-linear Compton scattering tomography.
//
//   simulate -> reconstruct -> edges -> support -> density
//   analyze {sobolev | vline-fourier | sing-order | edge-ratio}
//
// Every run writes <command>.manifest.json into --out-dir next to its outputs.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <openssl/evp.h>

#include "cst/analysis.hpp"
#include "cst/error.hpp"
#include "cst/forward.hpp"
#include "cst/io.hpp"
#include "cst/parallel.hpp"
#include "cst/phantom.hpp"
#include "cst/physics.hpp"
#include "cst/postproc.hpp"
#include "cst/recon.hpp"

namespace fs = std::filesystem;
using namespace cst;

namespace {

// ---------------------------------------------------------------------------
// Run bookkeeping

/// Git blob hash: SHA-1 of "blob <size>\0" followed by the file bytes.
std::string git_blob_hash(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    const std::string prefix = "blob " + std::to_string(bytes.size()) + std::string(1, '\0');
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr);
    EVP_DigestUpdate(ctx, prefix.data(), prefix.size());
    EVP_DigestUpdate(ctx, bytes.data(), bytes.size());
    EVP_DigestFinal_ex(ctx, md, &len);
    EVP_MD_CTX_free(ctx);
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int k = 0; k < len; ++k) {
        out.push_back(hex[md[k] >> 4]);
        out.push_back(hex[md[k] & 0xf]);
    }
    return out;
}

std::string utc_now() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

struct Globals {
    std::string out_dir = ".";
    std::uint64_t seed = 0;
    int threads = 0;
};

class Run {
public:
    Run(std::string command, const Globals& g, std::vector<std::string> argv)
        : command_(std::move(command)), globals_(g), argv_(std::move(argv)),
          start_(std::chrono::steady_clock::now()), started_utc_(utc_now()) {
        fs::create_directories(out_dir());
    }

    fs::path out_dir() const { return globals_.out_dir; }
    fs::path out(const std::string& name) const { return out_dir() / name; }
    std::uint64_t seed() const { return globals_.seed; }
    json& config() { return config_; }

    void input(const fs::path& p) { inputs_.push_back(p); }
    fs::path output(const std::string& name) {
        outputs_.push_back(out(name));
        return outputs_.back();
    }

    void finish() const {
        json j;
        j["command"] = command_;
        j["argv"] = argv_;
        j["config"] = config_;
        j["seed"] = globals_.seed;
        j["threads"] = thread_count();
        j["tool"] = {{"name", "cst"}, {"version", tool_version}};
        j["started_utc"] = started_utc_;
        j["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        auto list = [](const std::vector<fs::path>& v) {
            json a = json::array();
            for (const auto& p : v) a.push_back({{"path", p.string()}, {"hash", git_blob_hash(p)}});
            return a;
        };
        j["inputs"] = list(inputs_);
        j["outputs"] = list(outputs_);
        std::string name = command_;
        std::replace(name.begin(), name.end(), ' ', '-');
        write_json_file(out(name + ".manifest.json"), j);
    }

private:
    std::string command_;
    Globals globals_;
    std::vector<std::string> argv_;
    json config_ = json::object();
    std::vector<fs::path> inputs_, outputs_;
    std::chrono::steady_clock::time_point start_;
    std::string started_utc_;
};

// ---------------------------------------------------------------------------
// Typed loading with stage checks

std::string stage_of(const Container& c) {
    if (c.header.contains("meta") && c.header["meta"].is_object()) return c.header["meta"].value("stage", std::string());
    return {};
}

Container load(const fs::path& path, FileKind kind, std::initializer_list<const char*> stages, const char* what) {
    if (!fs::exists(path)) throw Error(ErrorCode::io_missing_input, "no such file: " + path.string());
    if (peek_kind(path) != kind)
        throw Error(ErrorCode::stage_mismatch, path.string() + " is a " +
                                                   (kind == FileKind::image ? "sinogram" : "image") + ", expected " + what);
    Container c = read_container(path);
    const std::string st = stage_of(c);
    if (!st.empty() && stages.size() > 0 &&
        std::none_of(stages.begin(), stages.end(), [&](const char* s) { return st == s; }))
        throw Error(ErrorCode::stage_mismatch, path.string() + " holds stage '" + st + "', expected " + what);
    return c;
}

std::pair<ImageGrid, json> load_image(const fs::path& path, std::initializer_list<const char*> stages, const char* what) {
    Container c = load(path, FileKind::image, stages, what);
    json meta = c.header.value("meta", json::object());
    return {image_from_container(std::move(c), path.string()), meta};
}

std::pair<Sinogram, json> load_sinogram(const fs::path& path) {
    Container c = load(path, FileKind::sinogram, {}, "a sinogram");
    json meta = c.header.value("meta", json::object());
    return {sinogram_from_container(std::move(c), path.string()), meta};
}

EdgeMap load_mask(const fs::path& path, std::initializer_list<const char*> stages, const char* what) {
    const auto [img, meta] = load_image(path, stages, what);
    try {
        return EdgeMap::from_image(img);
    } catch (const Error&) {
        throw Error(ErrorCode::stage_mismatch, path.string() + " is not a binary mask, expected " + what);
    }
}

std::string stem_of(const std::string& name) { return fs::path(name).stem().string(); }

// ---------------------------------------------------------------------------
// Shared option groups

struct PhysicsFlags {
    std::optional<double> energy, psi, a, b, lambda;
    std::optional<std::string> kernel;
    std::optional<double> kernel_radius, nu;

    void add(CLI::App* app) {
        app->add_option("--energy", energy, "Source energy E in MeV (default 1.17)");
        app->add_option("--psi", psi, "V-line half opening angle in radians, pi/4 <= psi < pi/2 (default pi/4)");
        app->add_option("--atten-a", a, "Attenuation weight a at the source energy (default 1)");
        app->add_option("--atten-b", b, "Attenuation weight b at the scattered energy (default 1)");
        app->add_option("--lambda", lambda, "Constant lambda weight (default 1)");
        app->add_option("--kernel", kernel, "Smoothing kernel: delta, disk or gaussian (default disk)")
            ->check(CLI::IsMember({"delta", "disk", "gaussian"}));
        app->add_option("--kernel-radius", kernel_radius, "Disk radius, or gaussian sigma (default 0.02)");
        app->add_option("--nu", nu, "V-line leg length (default 4)");
    }

    /// Defaults, overridden by `base` (e.g. a sinogram's recorded model), then by flags.
    void resolve(PhysicsParams& phys, KernelSpec& k, double& leg, const json& base = json::object()) const {
        if (base.contains("physics")) phys = base["physics"].get<PhysicsParams>();
        if (base.contains("kernel")) k = base["kernel"].get<KernelSpec>();
        if (base.contains("nu")) leg = base["nu"].get<double>();
        if (energy) phys.energy = *energy;
        if (psi) phys.psi = *psi;
        if (a) phys.a = *a;
        if (b) phys.b = *b;
        if (lambda) {
            phys.lambda_mode = LambdaMode::constant;
            phys.lambda_value = *lambda;
        }
        if (kernel) {
            const double r = k.kind == KernelSpec::Kind::gaussian ? k.sigma : k.radius;
            k = *kernel == "delta" ? KernelSpec::delta() : *kernel == "disk" ? KernelSpec::disk(r) : KernelSpec::gaussian(r);
        }
        if (kernel_radius) {
            k.radius = *kernel_radius;
            k.sigma = *kernel_radius;
        }
        if (nu) leg = *nu;
        phys.validate();
        k.validate();
        require(leg > 0.0, "--nu must be positive");
    }
};

PhantomSpec resolve_phantom(const std::string& name, const std::string& file) {
    require(name.empty() || file.empty(), "--phantom and --phantom-file are mutually exclusive");
    if (!file.empty()) {
        PhantomSpec p = read_json_file(file).get<PhantomSpec>();
        validate(p);
        return p;
    }
    return builtin_phantom(name.empty() ? "non_convex" : name);
}

json table_to_json(const Table& t) {
    json j = json::object();
    for (std::size_t k = 0; k < t.names.size(); ++k) j[t.names[k]] = t.columns[k];
    return j;
}

// ---------------------------------------------------------------------------
// Commands

struct SimulateOpts {
    std::string phantom, phantom_file, geometry_file;
    std::size_t n = 200, ns = 282, ntheta = 360;
    double gamma = 0.01;
    PhysicsFlags physics;
};

void cmd_simulate(Run& run, const SimulateOpts& o) {
    const PhantomSpec spec = resolve_phantom(o.phantom, o.phantom_file);
    ScanGeometry geom;
    if (!o.geometry_file.empty()) {
        run.input(o.geometry_file);
        geom = read_json_file(o.geometry_file).get<ScanGeometry>();
    } else {
        geom.ns = o.ns;
        geom.ntheta = o.ntheta;
    }
    geom.validate();
    require(o.gamma >= 0.0, "--gamma must be non-negative");
    PhysicsParams phys;
    KernelSpec kernel;
    double nu = 4.0;
    o.physics.resolve(phys, kernel, nu);
    const VLineParams vp = make_vline_params(phys, kernel, nu);

    const ImageGrid f = rasterize(spec, o.n, o.n);
    const ImageGrid truth = support_mask(spec, o.n, o.n);
    const Sinogram nonlinear = compton_forward(f, geom, phys, vp);
    const Sinogram linear = radon_forward(f, geom);
    const Sinogram noisy = add_noise(nonlinear, o.gamma, run.seed());

    const json model = {{"physics", phys}, {"kernel", kernel}, {"nu", nu}, {"phantom", spec.name}};
    auto meta = [&](const char* stage) {
        json m = model;
        m["stage"] = stage;
        return m;
    };
    run.config() = {{"phantom", spec}, {"n", o.n}, {"geometry", geom}, {"gamma", o.gamma}, {"model", model}};
    write_image(run.output("phantom.img"), f, {{"stage", "phantom"}, {"phantom", spec.name}});
    write_image(run.output("truth_support.img"), truth, {{"stage", "support"}, {"phantom", spec.name}});
    write_sinogram(run.output("sino_nonlinear.sin"), nonlinear, meta("nonlinear"));
    write_sinogram(run.output("sino_linear.sin"), linear, meta("linear"));
    write_sinogram(run.output("sino_noisy.sin"), noisy, [&] {
        json m = meta("noisy");
        m["gamma"] = o.gamma;
        m["seed"] = run.seed();
        return m;
    }());
    write_json_file(run.output("phantom.json"), spec);
    export_pgm(run.output("phantom.pgm"), f);
    export_pgm(run.output("sino_nonlinear.pgm"), nonlinear);
    export_pgm(run.output("sino_linear.pgm"), linear);
    export_pgm(run.output("sino_noisy.pgm"), noisy);
    std::printf("simulated %s: %zux%zu image, %zux%zu sinograms, gamma %g\n", spec.name.c_str(), o.n, o.n, geom.ns,
                geom.ntheta, o.gamma);
}

struct ReconstructOpts {
    std::string input, output = "recon.img", method = "tv";
    std::size_t n = 200;
    std::optional<int> iters;
    std::optional<double> relax, tv_lambda, tv_beta;
    int deriv_order = 2;
};

void cmd_reconstruct(Run& run, const ReconstructOpts& o) {
    const auto method = parse_recon_method(o.method);
    require(method.has_value(), "unknown method '" + o.method + "'");
    run.input(o.input);
    const auto [b, meta] = load_sinogram(o.input);
    ReconConfig cfg = ReconConfig::defaults(*method);
    if (o.iters) cfg.iterations = *o.iters;
    if (o.relax) cfg.relaxation = *o.relax;
    if (o.tv_lambda) cfg.tv_lambda = *o.tv_lambda;
    if (o.tv_beta) cfg.tv_beta = *o.tv_beta;
    cfg.derivative_order = o.deriv_order;
    cfg.validate();
    const GridShape shape{o.n, o.n, {}};
    const ReconResult r = reconstruct(b, shape, cfg);

    run.config() = {{"method", to_string(cfg.method)}, {"iterations", cfg.iterations}, {"relaxation", cfg.relaxation},
                    {"tv_lambda", cfg.tv_lambda}, {"tv_beta", cfg.tv_beta}, {"derivative_order", cfg.derivative_order},
                    {"n", o.n}, {"lipschitz", r.lipschitz}, {"iterations_run", r.iterations_run}};
    write_image(run.output(o.output), r.image, {{"stage", "reconstruction"}, {"method", to_string(cfg.method)}});
    export_pgm(run.output(stem_of(o.output) + ".pgm"), r.image);
    if (!r.trace.empty()) {
        Table t;
        std::vector<double> it(r.trace.size());
        for (std::size_t k = 0; k < it.size(); ++k) it[k] = static_cast<double>(k);
        t.add("iteration", it);
        t.add(cfg.method == ReconMethod::landweber ? "residual" : "objective", r.trace);
        export_csv(run.output(stem_of(o.output) + "_trace.csv"), t);
    }
    std::printf("reconstructed with %s (%d iterations)\n", to_string(cfg.method), r.iterations_run);
}

struct EdgesOpts {
    std::string input, output = "edges.img";
    EdgeConfig cfg;
};

void cmd_edges(Run& run, const EdgesOpts& o) {
    run.input(o.input);
    const auto [img, meta] = load_image(o.input, {"reconstruction", "phantom"}, "a reconstruction");
    const EdgeMap e = detect_edges(img, o.cfg);
    run.config() = {{"low_quantile", o.cfg.low_quantile}, {"high_quantile", o.cfg.high_quantile},
                    {"sigma", o.cfg.sigma}, {"relative_floor", o.cfg.relative_floor},
                    {"min_component", o.cfg.min_component}, {"edge_pixels", e.count()}};
    write_image(run.output(o.output), e.to_image(), {{"stage", "edges"}});
    export_pgm(run.output(stem_of(o.output) + ".pgm"), e.to_image());
    std::printf("%zu edge pixels\n", e.count());
}

struct SupportOpts {
    std::string input, output = "support.img", truth;
    int close_radius = 2;
};

void cmd_support(Run& run, const SupportOpts& o) {
    require(o.close_radius >= 0, "--close-radius must be non-negative");
    run.input(o.input);
    const EdgeMap e = load_mask(o.input, {"edges"}, "an edge map");
    const EdgeMap closed = o.close_radius > 0 ? close_boundary(e, o.close_radius) : e;
    const SupportMask s = fill_support(closed);
    json report = {{"close_radius", o.close_radius}, {"component_count", s.component_count},
                   {"closed", s.closed}, {"touches_border", s.touches_border}, {"support_pixels", s.mask.count()}};
    std::optional<double> p;
    if (!o.truth.empty()) {
        run.input(o.truth);
        const EdgeMap truth = load_mask(o.truth, {"support"}, "a support mask");
        p = p_metric(s.mask, truth);
        report["p"] = *p;
    }
    run.config() = report;
    write_image(run.output(o.output), s.mask.to_image(), {{"stage", "support"}});
    export_pgm(run.output(stem_of(o.output) + ".pgm"), s.mask.to_image());
    write_json_file(run.output(stem_of(o.output) + ".json"), report);
    std::printf("support: %zu pixels, %zu component(s), %s\n", s.mask.count(), s.component_count,
                s.closed ? "closed" : "not closed");
    if (p) std::printf("p = %.6f\n", *p);
}

struct DensityOpts {
    std::string support, input;
    double umax = 2.0;
    std::size_t ngrid = 201;
    bool no_refine = false;
    PhysicsFlags physics;
};

void cmd_density(Run& run, const DensityOpts& o) {
    run.input(o.support);
    run.input(o.input);
    const EdgeMap omega = load_mask(o.support, {"support"}, "a support mask");
    const auto [b, meta] = load_sinogram(o.input);
    PhysicsParams phys;
    KernelSpec kernel;
    double nu = 4.0;
    o.physics.resolve(phys, kernel, nu, meta);
    const DensityEstimate est =
        estimate_density(omega, b, phys, make_vline_params(phys, kernel, nu), o.umax, o.ngrid, !o.no_refine);
    Table t;
    t.add("ne", est.ne_grid);
    t.add("residual", est.residuals);
    export_csv(run.output("density.csv"), t);
    const json report = {{"ne_hat", est.ne_hat}, {"refined", est.refined}, {"umax", o.umax}, {"ngrid", o.ngrid},
                         {"local_minima", count_local_minima(est.residuals)}, {"physics", phys}, {"kernel", kernel},
                         {"nu", nu}};
    write_json_file(run.output("density.json"), report);
    run.config() = report;
    std::printf("residual curve: %zu local minima on [0, %g]\n", count_local_minima(est.residuals), o.umax);
    std::printf("ne_hat = %.10g\n", est.ne_hat);
}

// analyze -------------------------------------------------------------------

struct SobolevOpts {
    std::string input;
    double alpha = 0.0;
};

void cmd_sobolev(Run& run, const SobolevOpts& o) {
    run.input(o.input);
    const auto [img, meta] = load_image(o.input, {}, "an image");
    const SpectralReport r = sobolev_partial_norms(img, o.alpha);
    Table t;
    t.add("cutoff", r.cutoffs);
    t.add("partial_norm", r.partial_norms);
    export_csv(run.output("sobolev.csv"), t);
    Table shells;
    shells.add("radius", r.shell_radii);
    shells.add("energy", r.shell_energy);
    export_csv(run.output("sobolev_shells.csv"), shells);
    const auto finite_or_null = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
    const json report = {{"alpha", o.alpha}, {"fitted_order", finite_or_null(r.fitted_order)},
                         {"fit_residual", r.fit_residual}, {"nyquist", r.nyquist}, {"tail_fraction", r.tail_fraction},
                         {"partial_norms", table_to_json(t)}};
    write_json_file(run.output("sobolev.json"), report);
    run.config() = {{"alpha", o.alpha}};
    std::printf("fitted_order = %.6g\n", r.fitted_order);
}

struct FourierOpts {
    std::string input, phantom = "gaussian";
    std::size_t n = 64, nphi = 256;
    int k_max = 3;
    double a = 1.0, b = 1.0, psi = std::numbers::pi / 4.0, nu = 8.0;
};

void cmd_vline_fourier(Run& run, const FourierOpts& o) {
    ImageGrid f;
    if (!o.input.empty()) {
        run.input(o.input);
        f = load_image(o.input, {}, "an image").first;
    } else {
        f = rasterize(builtin_phantom(o.phantom), o.n, o.n);
    }
    const VLineParams vp{o.a, o.b, o.psi, o.nu, KernelSpec::delta()};
    const VLineFourierReport rep = vline_fourier_coefficients(f, vp, o.k_max, o.nphi);
    const double k0 = k0_identity_error(f, rep, vp);
    Table t;
    std::vector<double> k, norm_measured, norm_ratio, band_error;
    for (const auto& c : rep.coefficients) {
        k.push_back(c.k);
        norm_measured.push_back(c.field_norm);
        norm_ratio.push_back(rep.coefficients[0].field_norm > 0 ? c.field_norm / rep.coefficients[0].field_norm : 0.0);
        band_error.push_back(c.band_error);
    }
    t.add("k", k);
    t.add("field_norm", norm_measured);
    t.add("norm_over_k0", norm_ratio);
    t.add("band_error", band_error);
    export_csv(run.output("vline_fourier.csv"), t);
    const json report = {{"a", o.a}, {"b", o.b}, {"psi", o.psi}, {"nu", o.nu}, {"nphi", o.nphi},
                         {"k0_identity_error", k0}, {"coefficients", table_to_json(t)}};
    write_json_file(run.output("vline_fourier.json"), report);
    run.config() = report;
    for (std::size_t q = 0; q < k.size(); ++q)
        std::printf("k=%d norm=%.6g band_error=%.4g\n", static_cast<int>(k[q]), norm_measured[q], band_error[q]);
    std::printf("k0_identity_error = %.4g\n", k0);
}

struct SingOpts {
    std::string input;
    SingularityConfig cfg;
};

void cmd_sing_order(Run& run, const SingOpts& o) {
    run.input(o.input);
    const auto [b, meta] = load_sinogram(o.input);
    const SingularityOrderMap m = singularity_order_map(b, o.cfg);
    const ScanGeometry& g = b.geom();
    Table t;
    std::vector<double> is, js, ss, ths, ord, res, conf;
    for (std::size_t j = 0; j < g.ntheta; ++j)
        for (std::size_t i = 0; i < g.ns; ++i) {
            const std::size_t q = m.index(i, j);
            if (!m.flagged[q]) continue;
            is.push_back(static_cast<double>(i));
            js.push_back(static_cast<double>(j));
            ss.push_back(g.s(i));
            ths.push_back(g.theta(j));
            ord.push_back(m.order[q]);
            res.push_back(m.residual[q]);
            conf.push_back(m.confidence[q]);
        }
    t.add("i", is);
    t.add("j", js);
    t.add("s", ss);
    t.add("theta", ths);
    t.add("order", ord);
    t.add("residual", res);
    t.add("confidence", conf);
    export_csv(run.output("sing_order.csv"), t);
    Sinogram flags(g), orders(g);
    for (std::size_t q = 0; q < flags.size(); ++q) {
        flags[q] = m.flagged[q];
        orders[q] = std::isfinite(m.order[q]) ? std::clamp(m.order[q], -1.0, 4.0) : (m.valid[q] ? 4.0 : 0.0);
    }
    write_sinogram(run.output("sing_flags.sin"), flags, {{"stage", "singularity-flags"}});
    export_pgm(run.output("sing_flags.pgm"), flags);
    export_pgm(run.output("sing_order.pgm"), orders, std::pair{-1.0, 4.0});
    const json report = {{"window", o.cfg.window}, {"threshold", o.cfg.threshold}, {"dead_band", o.cfg.dead_band},
                         {"band", {o.cfg.band.lo, o.cfg.band.hi}}, {"flagged", m.flagged_count()}};
    write_json_file(run.output("sing_order.json"), report);
    run.config() = report;
    std::printf("flagged = %zu\n", m.flagged_count());
}

struct RatioOpts {
    std::string nonlinear, linear;
    std::vector<double> inner{0.4, 0.2}, outer{0.9, 0.7};
};

void cmd_edge_ratio(Run& run, const RatioOpts& o) {
    require(o.inner.size() == 2 && o.outer.size() == 2, "--inner and --outer take two semi-axes");
    run.input(o.nonlinear);
    run.input(o.linear);
    const Sinogram bn = load_sinogram(o.nonlinear).first, bl = load_sinogram(o.linear).first;
    const auto inner = ellipse_tangency_curve(bn.geom(), o.inner[0], o.inner[1]);
    const auto outer = ellipse_tangency_curve(bn.geom(), o.outer[0], o.outer[1]);
    const EdgeRatio r = edge_strength_ratio(bn, bl, inner, outer);
    const json report = {{"inner", o.inner}, {"outer", o.outer}, {"ratio_nl", r.ratio_nl}, {"ratio_lin", r.ratio_lin},
                         {"attenuation_suppresses_inner", r.ratio_nl < r.ratio_lin}};
    write_json_file(run.output("edge_ratio.json"), report);
    run.config() = report;
    std::printf("ratio_nl = %.6g\nratio_lin = %.6g\n", r.ratio_nl, r.ratio_lin);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Non-linear Compton scattering tomography toolkit"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for all subcommands");
    Globals globals;
    app.add_option("--out-dir", globals.out_dir, "Directory for outputs and the run manifest")->capture_default_str();
    app.add_option("--seed", globals.seed, "Seed for the noise stream")->capture_default_str();
    app.add_option("--threads", globals.threads, "Worker threads; 0 uses CST_THREADS or the hardware count")
        ->envname("CST_THREADS")
        ->check(CLI::NonNegativeNumber);

    SimulateOpts sim;
    auto* simulate = app.add_subcommand("simulate", "Rasterize a phantom and write non-linear, linear and noisy sinograms");
    simulate->add_option("--phantom", sim.phantom, "Built-in phantom: non_convex, elliptic_annulus, square, disk, gaussian");
    simulate->add_option("--phantom-file", sim.phantom_file, "Phantom spec JSON (see schemas/)");
    simulate->add_option("--geometry-file", sim.geometry_file, "Scan geometry JSON (see schemas/)");
    simulate->add_option("--n", sim.n, "Image size N (N x N on [-1, 1]^2)")->capture_default_str()->check(CLI::Range(2, 4096));
    simulate->add_option("--ns", sim.ns, "Number of offsets s")->capture_default_str();
    simulate->add_option("--ntheta", sim.ntheta, "Number of angles theta")->capture_default_str();
    simulate->add_option("--gamma", sim.gamma, "Relative noise level")->capture_default_str();
    sim.physics.add(simulate);

    ReconstructOpts rec;
    auto* reconstruct = app.add_subcommand("reconstruct", "Reconstruct an image from a sinogram");
    reconstruct->add_option("--input,-i", rec.input, "Input sinogram")->required();
    reconstruct->add_option("--output,-o", rec.output, "Output image name")->capture_default_str();
    reconstruct->add_option("--method", rec.method, "fbp, landweber or tv")
        ->capture_default_str()
        ->check(CLI::IsMember({"fbp", "landweber", "tv"}));
    reconstruct->add_option("--n", rec.n, "Image size N")->capture_default_str();
    reconstruct->add_option("--iters", rec.iters, "Iterations (default 200 landweber, 300 tv)");
    reconstruct->add_option("--relax", rec.relax, "Landweber step in units of 1/||A||^2 (default 1)");
    reconstruct->add_option("--tv-lambda", rec.tv_lambda, "TV weight (default 2e-4)");
    reconstruct->add_option("--tv-beta", rec.tv_beta, "TV smoothing parameter (default 1)");
    reconstruct->add_option("--deriv-order", rec.deriv_order, "Derivative order of the lambda filter, 1 or 2")
        ->capture_default_str();

    EdgesOpts edg;
    auto* edges = app.add_subcommand("edges", "Detect edges in a reconstruction");
    edges->add_option("--input,-i", edg.input, "Input image")->required();
    edges->add_option("--output,-o", edg.output, "Output edge map name")->capture_default_str();
    edges->add_option("--sigma", edg.cfg.sigma, "Gaussian pre-smoothing in pixels")->capture_default_str();
    edges->add_option("--low-q", edg.cfg.low_quantile, "Low hysteresis quantile")->capture_default_str();
    edges->add_option("--high-q", edg.cfg.high_quantile, "High hysteresis quantile")->capture_default_str();
    edges->add_option("--floor", edg.cfg.relative_floor, "Threshold floor as a fraction of the peak gradient")
        ->capture_default_str();
    edges->add_option("--min-component", edg.cfg.min_component, "Drop edge components smaller than this")
        ->capture_default_str();

    SupportOpts sup;
    auto* support = app.add_subcommand("support", "Close an edge map and fill it into a support mask");
    support->add_option("--input,-i", sup.input, "Input edge map")->required();
    support->add_option("--output,-o", sup.output, "Output mask name")->capture_default_str();
    support->add_option("--close-radius", sup.close_radius, "Closing radius in pixels")->capture_default_str();
    support->add_option("--truth", sup.truth, "Ground-truth support mask; prints the agreement p");

    DensityOpts den;
    auto* density = app.add_subcommand("density", "Fit the density of a support mask to a sinogram");
    density->add_option("--support,-s", den.support, "Support mask")->required();
    density->add_option("--input,-i", den.input, "Measured sinogram")->required();
    density->add_option("--umax", den.umax, "Upper end of the density scan")->capture_default_str();
    density->add_option("--ngrid", den.ngrid, "Density scan points")->capture_default_str();
    density->add_flag("--no-refine", den.no_refine, "Skip golden-section refinement");
    den.physics.add(density);

    auto* analyze = app.add_subcommand("analyze", "Spectral and microlocal diagnostics");
    analyze->require_subcommand(1);
    SobolevOpts sob;
    auto* sobolev = analyze->add_subcommand("sobolev", "Sobolev partial norms and fitted order of an image");
    sobolev->add_option("--input,-i", sob.input, "Input image")->required();
    sobolev->add_option("--alpha", sob.alpha, "Sobolev weight exponent")->capture_default_str();
    FourierOpts fou;
    auto* fourier = analyze->add_subcommand("vline-fourier", "Fourier series of the V-line transform in phi");
    fourier->add_option("--input,-i", fou.input, "Input image (default: rasterized --phantom)");
    fourier->add_option("--phantom", fou.phantom, "Built-in phantom when no input is given")->capture_default_str();
    fourier->add_option("--n", fou.n, "Image size for --phantom")->capture_default_str();
    fourier->add_option("--k-max", fou.k_max, "Highest harmonic")->capture_default_str();
    fourier->add_option("--nphi", fou.nphi, "Number of phi samples")->capture_default_str();
    fourier->add_option("--atten-a", fou.a, "Weight a of the source leg")->capture_default_str();
    fourier->add_option("--atten-b", fou.b, "Weight b of the detector leg")->capture_default_str();
    fourier->add_option("--psi", fou.psi, "Half opening angle")->capture_default_str();
    fourier->add_option("--nu", fou.nu, "Leg length")->capture_default_str();
    SingOpts sng;
    auto* sing = analyze->add_subcommand("sing-order", "Local singularity order map of a sinogram");
    sing->add_option("--input,-i", sng.input, "Input sinogram")->required();
    sing->add_option("--window", sng.cfg.window, "Window length in samples, power of two >= 16")->capture_default_str();
    sing->add_option("--threshold", sng.cfg.threshold, "Order threshold")->capture_default_str();
    sing->add_option("--dead-band", sng.cfg.dead_band, "Dead band above the threshold")->capture_default_str();
    RatioOpts rat;
    auto* ratio = analyze->add_subcommand("edge-ratio", "Inner/outer tangency edge strength in two sinograms");
    ratio->add_option("--nonlinear", rat.nonlinear, "Non-linear sinogram")->required();
    ratio->add_option("--linear", rat.linear, "Linear sinogram")->required();
    ratio->add_option("--inner", rat.inner, "Inner ellipse semi-axes")->expected(2)->capture_default_str();
    ratio->add_option("--outer", rat.outer, "Outer ellipse semi-axes")->expected(2)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : exit_code(ErrorCode::invalid_argument);
    }

    const std::vector<std::string> args(argv, argv + argc);
    try {
        set_threads(globals.threads);
        auto go = [&](const std::string& name, auto&& fn) {
            Run run(name, globals, args);
            fn(run);
            run.finish();
        };
        if (*simulate) go("simulate", [&](Run& r) { cmd_simulate(r, sim); });
        else if (*reconstruct) go("reconstruct", [&](Run& r) { cmd_reconstruct(r, rec); });
        else if (*edges) go("edges", [&](Run& r) { cmd_edges(r, edg); });
        else if (*support) go("support", [&](Run& r) { cmd_support(r, sup); });
        else if (*density) go("density", [&](Run& r) { cmd_density(r, den); });
        else if (*sobolev) go("analyze sobolev", [&](Run& r) { cmd_sobolev(r, sob); });
        else if (*fourier) go("analyze vline-fourier", [&](Run& r) { cmd_vline_fourier(r, fou); });
        else if (*sing) go("analyze sing-order", [&](Run& r) { cmd_sing_order(r, sng); });
        else if (*ratio) go("analyze edge-ratio", [&](Run& r) { cmd_edge_ratio(r, rat); });
    } catch (const Error& e) {
        std::fprintf(stderr, "cst: %s\n", e.what());
        return exit_code(e.code());
    } catch (const fs::filesystem_error& e) {
        std::fprintf(stderr, "cst: write-failure: %s\n", e.what());
        return exit_code(ErrorCode::io_write);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "cst: %s\n", e.what());
        return 1;
    }
    return 0;
}
