#include "sccoex/validation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>

#include "sccoex/chi2.hpp"
#include "sccoex/coexpression.hpp"
#include "sccoex/downstream.hpp"
#include "sccoex/estimation.hpp"
#include "sccoex/sqrt_poisson.hpp"
#include "sccoex/synthetic.hpp"
#include "sccoex/zero_model.hpp"

namespace sccoex {

namespace {

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

bool within(double x, double target, double tol) { return std::abs(x - target) <= tol; }

CriterionResult criterion(int id, const char* name, double time_limit) {
    CriterionResult r;
    r.id = id;
    r.name = name;
    r.time_limit = time_limit;
    return r;
}

// Criterion 1 ------------------------------------------------------------------

CriterionResult special_functions() {
    auto r = criterion(1, "special-function certificates", 5.0);

    // Coarse grid, then golden-section refinement around the peak.
    double best_x = 0.0, best = -1.0;
    for (double x = 0.05; x <= 10.0; x += 0.05) {
        if (const double t = tau(x); t > best) best = t, best_x = x;
    }
    double lo = best_x - 0.05, hi = best_x + 0.05;
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    for (int i = 0; i < 80; ++i) {
        const double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
        if (tau(x1) > tau(x2)) hi = x2; else lo = x1;
    }
    const double tau_max = tau(0.5 * (lo + hi));
    const bool ok_max = within(tau_max, 0.4125, 5e-4);

    double identity = 0.0;
    for (int i = 0; i <= 4000; ++i) {
        const double x = 0.05 * i;
        const double f = phi(x);
        identity = std::max(identity, std::abs(f * f + tau(x) - x));
    }
    const bool ok_identity = identity <= 1e-9;

    double gap_lo = 1e300, gap_hi = -1e300;
    for (int i = 0; i <= 2000; ++i) {
        const double y = 0.01 * i;
        const double gap = psi(y) - y * y;
        gap_lo = std::min(gap_lo, gap);
        gap_hi = std::max(gap_hi, gap);
    }
    const bool ok_gap = gap_lo >= 0.0 && gap_hi <= 0.4125 + 1e-6;

    double d3 = 0.0;
    const double h = 1e-3;
    for (int i = 0; i <= 1000; ++i) {
        const double y = 0.01 * i;
        const double a = psi_second(std::max(0.0, y - h));
        const double b = psi_second(y + h);
        d3 = std::max(d3, std::abs(b - a) / (y + h - std::max(0.0, y - h)));
    }
    const bool ok_d3 = d3 <= 1.21;

    r.pass = ok_max && ok_identity && ok_gap && ok_d3;
    r.detail = fmt("max tau=%.6f; |phi^2+tau-x|<=%.2e; psi-x^2 in [%.3g, %.6f]; |psi'''|<=%.4f",
                   tau_max, identity, gap_lo, gap_hi, d3);
    return r;
}

// Criterion 2 ------------------------------------------------------------------

CriterionResult paper_fixture() {
    auto r = criterion(2, "paper fixture statistics", 1.0);
    const auto e = classical_expected(709, 670, 1359, 20, 1379);
    const std::array<double, 4> want{698.7, 10.3, 660.3, 9.7};
    bool ok_table = true;
    for (std::size_t k = 0; k < 4; ++k) ok_table = ok_table && within(e[k], want[k], 0.05);

    CoexTable t;
    t.observed = {705, 4, 654, 16};
    t.expected = {703.6, 5.4, 655.4, 14.6};
    t.m = 1379;
    const auto s = coex_stats(t);
    const bool ok_w = within(s.w, 0.503, 0.005);
    const bool ok_r = within(s.r, 0.709, 0.005);
    r.pass = ok_table && ok_w && ok_r;
    r.detail = fmt("classical=(%.2f, %.2f, %.2f, %.2f); W=%.5f; R=%+.5f", e[0], e[1], e[2], e[3],
                   s.w, s.r);
    return r;
}

// Criterion 3 ------------------------------------------------------------------

CriterionResult gdi_constants() {
    auto r = criterion(3, "GDI constants", 1.0);
    const double q = chi2_upper_quantile(1e-4, 1);
    const double g = gdi_from_s(15.137);
    r.pass = within(q, 15.137, 0.001) && within(g, 2.2203, 0.001);
    r.detail = fmt("chi2(1) upper 1e-4 quantile=%.6f; GDI(15.137)=%.6f", q, g);
    return r;
}

// Null study shared by criteria 4, 5 and 6 ----------------------------------------

struct NullStudy {
    std::size_t genes = 0, cells = 0;
    std::vector<double> p_values;
    GdiScores gdi;
    DispersionFit fit;
    std::vector<double> residual_ratio;  ///< |sum(1 - rho) - zeros| / m per fitted gene
    double seconds = 0.0;
};

class CollectSink : public PairSink {
public:
    CollectSink(std::vector<double>& p, GdiAccumulator& gdi) : p_(p), gdi_(gdi) {}
    void consume(std::span<const PairRecord> batch, const TileInfo& tile) override {
        gdi_.consume(batch, tile);
        std::lock_guard lock(mutex_);
        for (const auto& rec : batch) p_.push_back(rec.result.p_value);
    }

private:
    std::vector<double>& p_;
    GdiAccumulator& gdi_;
    std::mutex mutex_;
};

NullStudy run_null_study(const ValidationOptions& opt) {
    const auto t0 = std::chrono::steady_clock::now();
    DeskPreset preset;
    preset.seed = opt.seed;
    const auto data = generate(desk_config(preset), opt.threads);
    const auto filtered = filter_genes(data.matrix, 1).matrix;

    NullStudy s;
    s.genes = filtered.n_genes();
    s.cells = filtered.n_cells();
    const auto params = estimate(filtered, EstimatorKind::Average, opt.threads);
    s.fit = fit_dispersion(filtered, params, 1e-8, opt.threads);
    const auto rho = chance_of_expression(params, s.fit, opt.threads);

    for (std::size_t g = 0; g < s.genes; ++g) {
        if (!s.fit.fitted[g]) continue;
        double expected = 0.0;
        for (double v : rho.row(g)) expected += 1.0 - v;
        const double zeros = static_cast<double>(s.cells - filtered.row(g).size());
        s.residual_ratio.push_back(std::abs(expected - zeros) / static_cast<double>(s.cells));
    }

    GdiAccumulator gdi(s.genes);
    s.p_values.reserve(s.genes * (s.genes - 1) / 2);
    CollectSink sink(s.p_values, gdi);
    EngineOptions eo;
    eo.threads = opt.threads;
    pairwise_coex(filtered, rho, sink, eo);
    s.gdi = gdi.finalize();
    s.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return s;
}

CriterionResult null_calibration(const NullStudy& s) {
    auto r = criterion(4, "null calibration of the co-expression test", 120.0);
    const double dev = ecdf_uniform_deviation(s.p_values, 0.005);
    r.pass = dev <= 0.01;
    r.detail = fmt("%zu genes x %zu cells, %zu pairs; sup |ECDF(p)-p| on [0.005,1] = %.5f", s.genes,
                   s.cells, s.p_values.size(), dev);
    return r;
}

CriterionResult gdi_envelope(const NullStudy& s) {
    auto r = criterion(5, "GDI false-positive envelope", 120.0);
    const auto flags = gdi_threshold_test(s.gdi, 1e-4);
    const double frac =
        static_cast<double>(std::count(flags.begin(), flags.end(), 1)) / static_cast<double>(flags.size());
    r.pass = frac >= 0.01 && frac <= 0.08;
    r.detail = fmt("flagged fraction = %.4f (%zu genes)", frac, flags.size());
    return r;
}

CriterionResult dispersion_exactness(const NullStudy& s) {
    auto r = criterion(6, "dispersion-fit exactness", 10.0);
    const std::vector<double> ones(10, 1.0);
    const double a1 = solve_dispersion(ones, 5).a;
    const double a2 = solve_dispersion(ones, 2).a;
    const bool ok_analytic = within(a1, 1.0, 1e-6) && within(a2, 1.0 - std::log(5.0), 1e-6);

    const double worst = s.residual_ratio.empty()
                             ? 0.0
                             : *std::max_element(s.residual_ratio.begin(), s.residual_ratio.end());
    std::size_t fitted = 0, negative = 0;
    for (std::size_t g = 0; g < s.fit.n_genes(); ++g) {
        if (!s.fit.fitted[g]) continue;
        ++fitted;
        negative += s.fit.a[g] < 0.0;
    }
    const double frac = fitted ? static_cast<double>(negative) / static_cast<double>(fitted) : 0.0;
    r.pass = ok_analytic && worst <= 1e-6 && frac >= 0.01 && frac <= 0.40;
    r.detail = fmt("a(5/10)=%.9f; a(2/10)=%.9f; max residual/m=%.2e; negative-a fraction=%.4f",
                   a1, a2, worst, frac);
    return r;
}

// Criterion 7 ------------------------------------------------------------------

struct Accuracy {
    double nu_cv = 0.0;
    double lambda_rmse_avg = 0.0;
    double lambda_rmse_sqrt = 0.0;
};

Accuracy estimator_accuracy(std::size_t cells, const ValidationOptions& opt) {
    DeskPreset preset;
    preset.cells = cells;
    preset.seed = opt.seed + 7;
    const auto data = generate(desk_config(preset), opt.threads);
    const auto& truth = data.truth;
    const auto avg = estimate(data.matrix, EstimatorKind::Average, opt.threads);
    const auto sq = estimate(data.matrix, EstimatorKind::SqrtCorrected, opt.threads);

    Accuracy acc;
    double s = 0.0;
    for (std::size_t c = 0; c < cells; ++c) {
        const double e = sq.nu[c] / truth.nu[c] - 1.0;
        s += e * e;
    }
    acc.nu_cv = std::sqrt(s / static_cast<double>(cells));
    double sa = 0.0, ss = 0.0;
    std::size_t n = 0;
    for (std::size_t g = 0; g < data.matrix.n_genes(); ++g) {
        const double l = truth.lambda[0][g];
        if (!(l > 0.0)) continue;
        const double ea = avg.lambda[g] / l - 1.0;
        const double es = sq.lambda[g] / l - 1.0;
        sa += ea * ea;
        ss += es * es;
        ++n;
    }
    acc.lambda_rmse_avg = std::sqrt(sa / static_cast<double>(n));
    acc.lambda_rmse_sqrt = std::sqrt(ss / static_cast<double>(n));
    return acc;
}

CriterionResult estimator_accuracy(const ValidationOptions& opt) {
    auto r = criterion(7, "estimator accuracy", 60.0);
    const auto small = estimator_accuracy(800, opt);
    const auto large = estimator_accuracy(4000, opt);
    r.pass = large.nu_cv <= 0.08 && large.lambda_rmse_avg < small.lambda_rmse_avg &&
             large.lambda_rmse_sqrt < small.lambda_rmse_sqrt;
    r.detail = fmt("CV(nu check)@4000=%.4f; rel. RMSE lambda avg %.4f -> %.4f, sqrt %.4f -> %.4f",
                   large.nu_cv, small.lambda_rmse_avg, large.lambda_rmse_avg,
                   small.lambda_rmse_sqrt, large.lambda_rmse_sqrt);
    return r;
}

// Criterion 8 ------------------------------------------------------------------

class VectorSink : public PairSink {
public:
    void consume(std::span<const PairRecord> batch, const TileInfo&) override {
        std::lock_guard lock(mutex_);
        records.insert(records.end(), batch.begin(), batch.end());
    }
    std::vector<PairRecord> records;

private:
    std::mutex mutex_;
};

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

bool same_record(const PairRecord& x, const CoexTable& t, const CoexResult& s) {
    if (x.table.observed != t.observed || x.table.m != t.m) return false;
    for (std::size_t k = 0; k < 4; ++k) {
        if (!same_bits(x.table.expected[k], t.expected[k])) return false;
    }
    return same_bits(x.result.w, s.w) && same_bits(x.result.r, s.r) &&
           same_bits(x.result.p_value, s.p_value);
}

CriterionResult engine_equivalence(const ValidationOptions& opt) {
    auto r = criterion(8, "engine equivalence", 30.0);
    std::size_t mismatches = 0, pairs = 0, matrices = 0;
    std::vector<const kernels::KernelTable*> variants{&kernels::scalar()};
    if (&kernels::best() != &kernels::scalar()) variants.push_back(&kernels::best());
    for (int trial = 0; trial < 20; ++trial) {
        auto rng = keyed_stream(opt.seed, 0xe9e, static_cast<std::uint64_t>(trial));
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        std::vector<std::vector<count_t>> rows(100, std::vector<count_t>(200));
        for (std::size_t g = 0; g < 100; ++g) {
            const double level = std::exp(4.0 * unit(rng) - 2.5);
            for (auto& v : rows[g]) {
                std::poisson_distribution<int> pois(level * (0.3 + 1.4 * unit(rng)));
                v = static_cast<count_t>(pois(rng));
            }
        }
        // Keep every gene non-empty so the matrix passes through unfiltered.
        for (std::size_t g = 0; g < 100; ++g) rows[g][g] += 1;
        const auto m = CountMatrix::from_dense(rows);
        const auto params = estimate(m, EstimatorKind::Average, 1);
        const auto fit = fit_dispersion(m, params, 1e-8, 1);
        const auto rho = chance_of_expression(params, fit, 1);
        ++matrices;

        for (const auto* k : variants) {
            for (std::size_t tile : {std::size_t{7}, std::size_t{32}, std::size_t{256}}) {
                VectorSink sink;
                EngineOptions eo;
                eo.tile = tile;
                eo.threads = opt.threads;
                eo.kernels = k;
                pairwise_coex(m, rho, sink, eo);
                if (sink.records.size() != 100 * 99 / 2) ++mismatches;
                std::vector<std::uint8_t> seen(100 * 100, 0);
                for (const auto& rec : sink.records) {
                    ++pairs;
                    auto& flag = seen[rec.g1 * 100 + rec.g2];
                    if (rec.g1 >= rec.g2 || flag) {
                        ++mismatches;
                        continue;
                    }
                    flag = 1;
                    const auto t = coex_table(m, rho, rec.g1, rec.g2);
                    if (!same_record(rec, t, coex_stats(t))) ++mismatches;
                }
            }
        }
    }
    r.pass = mismatches == 0;
    std::string isas;
    for (const auto* k : variants) isas += std::string(isas.empty() ? "" : ",") + std::string(kernels::to_string(k->isa));
    r.detail = fmt("%zu matrices, %zu pairs checked (kernels: %s), %zu mismatches", matrices, pairs,
                   isas.c_str(), mismatches);
    return r;
}

// Criterion 9 ------------------------------------------------------------------

CriterionResult variance_law(const ValidationOptions& opt) {
    auto r = criterion(9, "variance law", 30.0);
    const std::vector<double> lambdas{0.5, 2.0, 8.0};
    const std::vector<double> as{0.0, 0.25, 1.0};
    constexpr std::size_t draws = 100000;
    SynthConfig cfg;
    cfg.seed = opt.seed + 9;
    cfg.nu.kind = NuLaw::Kind::Explicit;
    cfg.nu.values.assign(draws, 1.0);
    ClusterSpec spec;
    spec.cells = draws;
    for (double l : lambdas) {
        for (double a : as) {
            spec.lambda.push_back(l);
            spec.a.push_back(a);
        }
    }
    cfg.clusters.push_back(spec);
    const auto data = generate(cfg, opt.threads);

    double worst_z = 0.0;
    std::ostringstream worst;
    for (std::size_t g = 0; g < spec.lambda.size(); ++g) {
        std::vector<double> x(draws, 0.0);
        const auto row = data.matrix.row(g);
        for (std::size_t i = 0; i < row.size(); ++i) x[row.cells[i]] = row.counts[i];
        double mean = 0.0;
        for (double v : x) mean += v;
        mean /= draws;
        double ss = 0.0;
        for (double v : x) ss += (v - mean) * (v - mean);
        const double var = ss / (draws - 1);
        // Negative-binomial cumulants give the sampling sd of the variance.
        const double mu = spec.lambda[g], a = spec.a[g];
        const double k2 = mu * (1.0 + a * mu);
        const double k4 = k2 * (1.0 + 6.0 * a * mu + 6.0 * a * a * mu * mu);
        const double sd = std::sqrt(k4 / draws + 2.0 * k2 * k2 / (draws - 1));
        const double z = std::abs(var - k2) / sd;
        if (z > worst_z) {
            worst_z = z;
            worst.str("");
            worst << "lambda=" << mu << ",a=" << a;
        }
    }
    r.pass = worst_z <= 3.0;
    r.detail = fmt("9 (lambda, a) cells x %zu draws; worst |z| = %.3f at %s", draws, worst_z,
                   worst.str().c_str());
    return r;
}

}  // namespace

double ecdf_uniform_deviation(std::vector<double> p, double lo) {
    if (p.empty()) return 1.0;
    std::sort(p.begin(), p.end());
    const double n = static_cast<double>(p.size());
    // ECDF at lo itself, then both sides of every jump inside [lo, 1].
    const auto first = std::upper_bound(p.begin(), p.end(), lo);
    double dev = std::abs(static_cast<double>(first - p.begin()) / n - lo);
    for (auto it = first; it != p.end(); ++it) {
        if (*it > 1.0) break;
        const double x = *it;
        const double below = static_cast<double>(it - p.begin()) / n;
        const auto last = std::upper_bound(it, p.end(), x);
        const double at = static_cast<double>(last - p.begin()) / n;
        dev = std::max({dev, std::abs(below - x), std::abs(at - x)});
        it = last - 1;
    }
    return dev;
}

std::vector<CriterionResult> run_acceptance(const ValidationOptions& opt,
                                            const std::function<void(const CriterionResult&)>& progress) {
    auto wanted = [&](int id) {
        return opt.only.empty() || std::find(opt.only.begin(), opt.only.end(), id) != opt.only.end();
    };
    std::vector<CriterionResult> out;
    auto timed = [&](auto&& fn) {
        const auto t0 = std::chrono::steady_clock::now();
        auto r = fn();
        r.seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (r.time_limit > 0.0 && r.seconds > r.time_limit) {
            r.pass = false;
            r.detail += fmt(" [runtime %.1fs over %.0fs limit]", r.seconds, r.time_limit);
        }
        out.push_back(r);
        if (progress) progress(out.back());
    };
    if (wanted(1)) timed(special_functions);
    if (wanted(2)) timed(paper_fixture);
    if (wanted(3)) timed(gdi_constants);

    std::optional<NullStudy> null;
    if (wanted(4) || wanted(5) || wanted(6)) null = run_null_study(opt);
    // The shared dataset is charged to criterion 4; 5 and 6 only reuse it.
    if (wanted(4)) timed([&] { auto r = null_calibration(*null); r.seconds = null->seconds; return r; });
    if (wanted(5)) timed([&] { return gdi_envelope(*null); });
    if (wanted(6)) timed([&] { return dispersion_exactness(*null); });
    if (wanted(7)) timed([&] { return estimator_accuracy(opt); });
    if (wanted(8)) timed([&] { return engine_equivalence(opt); });
    if (wanted(9)) timed([&] { return variance_law(opt); });
    return out;
}

}  // namespace sccoex
