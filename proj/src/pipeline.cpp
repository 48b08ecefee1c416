#include "sccoex/pipeline.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <sstream>

#include "sccoex/downstream.hpp"
#include "sccoex/error.hpp"
#include "sccoex/synthetic.hpp"
#include "sccoex/zero_model.hpp"

namespace sccoex {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

// Config ------------------------------------------------------------------------

const std::set<std::string>& PipelineConfig::keys() {
    static const std::set<std::string> k{"input",        "output_dir", "estimator", "alpha",
                                         "gdi_quantile", "gdi_floor",  "zero_tolerance",
                                         "min_total",    "tile",       "threads",   "seed",
                                         "coex_output",  "write_rho"};
    return k;
}

PipelineConfig PipelineConfig::from(const KeyValueConfig& kv, const fs::path& base_dir) {
    kv.reject_unknown(keys());
    auto path = [&](const std::string& key, const fs::path& fallback) {
        const auto v = kv.get(key);
        if (!v) return fallback;
        const fs::path p(*v);
        return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
    };
    PipelineConfig c;
    c.input = path("input", c.input);
    c.output_dir = path("output_dir", c.output_dir);
    c.estimator = parse_estimator(kv.get_string("estimator", std::string(to_string(c.estimator))));
    c.alpha = kv.get_double("alpha", c.alpha);
    c.gdi_quantile = kv.get_double("gdi_quantile", c.gdi_quantile);
    c.gdi_floor = kv.get_double("gdi_floor", c.gdi_floor);
    c.zero_tolerance = kv.get_double("zero_tolerance", c.zero_tolerance);
    c.min_total = kv.get_uint("min_total", c.min_total);
    c.tile = kv.get_uint("tile", c.tile);
    c.threads = static_cast<unsigned>(kv.get_uint("threads", c.threads));
    c.seed = kv.get_uint("seed", c.seed);
    c.coex_output = kv.get_string("coex_output", c.coex_output);
    const auto rho = kv.get_string("write_rho", c.write_rho ? "true" : "false");
    if (rho != "true" && rho != "false") throw InputError("write_rho must be true or false");
    c.write_rho = rho == "true";
    c.validate();
    return c;
}

void PipelineConfig::validate() const {
    if (input.empty()) throw InputError("no input matrix given");
    if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("alpha must lie in (0, 1)");
    if (!(gdi_quantile > 0.0 && gdi_quantile < 1.0)) throw InputError("gdi_quantile must lie in (0, 1)");
    if (!std::isfinite(gdi_floor)) throw InputError("gdi_floor must be finite");
    if (!(zero_tolerance > 0.0 && zero_tolerance < 1e-2)) {
        throw InputError("zero_tolerance must lie in (0, 1e-2)");
    }
    if (min_total < 1) throw InputError("min_total must be >= 1");
    if (tile < 1) throw InputError("tile must be >= 1");
    if (coex_output != "csv" && coex_output != "binary" && coex_output != "none") {
        throw InputError("coex_output must be csv, binary or none");
    }
}

// Pipeline ----------------------------------------------------------------------------

namespace {

struct Manifest {
    std::map<std::string, std::string> stage_keys;
    std::map<std::string, std::string> artifact_hash;
};

std::optional<Manifest> read_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) return std::nullopt;
    try {
        const auto j = ordered_json::parse(in);
        Manifest m;
        for (const auto& s : j.at("stages")) m.stage_keys[s.at("name")] = s.at("key");
        for (const auto& a : j.at("artifacts")) m.artifact_hash[a.at("name")] = a.at("sha256");
        return m;
    } catch (const std::exception&) {
        return std::nullopt;  // unreadable manifest: rerun everything
    }
}

class Runner {
public:
    Runner(const PipelineConfig& c, std::ostream* log)
        : c_(c), log_(log), dir_(c.output_dir), previous_(read_manifest(dir_ / "manifest.json")) {}

    PipelineResult run();

private:
    struct Stage {
        std::string name;
        std::string key;
        std::vector<std::string> outputs;
    };

    fs::path at(const std::string& name) const { return dir_ / name; }
    std::string hash_of(const std::string& artifact) {
        auto& h = hashes_[artifact];
        if (h.empty()) h = sha256_file(at(artifact));
        return h;
    }
    std::string key_for(const std::string& stage, const std::vector<std::string>& settings,
                        const std::vector<std::string>& inputs);
    bool is_cached(const Stage& s);
    void run_stage(Stage s, const std::function<void()>& body);

    const CountMatrix& matrix() {
        if (!matrix_) matrix_ = load_matrix_market(at("matrix.mtx"));
        return *matrix_;
    }
    const ModelParams& params() {
        if (!params_) params_ = read_estimates(matrix(), at("gene_estimates.csv"), at("cell_estimates.csv"));
        return *params_;
    }
    const DispersionFit& fit() {
        if (!fit_) fit_ = read_dispersion(matrix(), at("dispersion.csv"));
        return *fit_;
    }

    const PipelineConfig& c_;
    std::ostream* log_;
    fs::path dir_;
    std::optional<Manifest> previous_;
    std::map<std::string, std::string> hashes_;
    std::vector<Stage> stages_;
    PipelineResult result_;
    std::optional<CountMatrix> matrix_;
    std::optional<ModelParams> params_;
    std::optional<DispersionFit> fit_;
};

std::string Runner::key_for(const std::string& stage, const std::vector<std::string>& settings,
                            const std::vector<std::string>& inputs) {
    std::string text = "stage=" + stage + "\n";
    for (const auto& s : settings) text += s + "\n";
    for (const auto& i : inputs) text += "input " + i + "=" + hash_of(i) + "\n";
    return sha256_string(text);
}

bool Runner::is_cached(const Stage& s) {
    if (!previous_) return false;
    const auto k = previous_->stage_keys.find(s.name);
    if (k == previous_->stage_keys.end() || k->second != s.key) return false;
    for (const auto& out : s.outputs) {
        const auto h = previous_->artifact_hash.find(out);
        if (h == previous_->artifact_hash.end() || !fs::exists(at(out))) return false;
        if (hash_of(out) != h->second) return false;
    }
    return true;
}

void Runner::run_stage(Stage s, const std::function<void()>& body) {
    StageReport rep{s.name, false};
    try {
        rep.cached = is_cached(s);
        if (!rep.cached) {
            for (const auto& out : s.outputs) hashes_.erase(out);
            body();
            for (const auto& out : s.outputs) hash_of(out);
        }
    } catch (const StageError&) {
        throw;
    } catch (const InputError& e) {
        throw StageError(s.name, e.what(), kExitInput);
    } catch (const std::invalid_argument& e) {
        throw StageError(s.name, e.what(), kExitInput);
    } catch (const std::exception& e) {
        throw StageError(s.name, e.what(), kExitNumeric);
    }
    if (log_) *log_ << "stage " << s.name << ": " << (rep.cached ? "cached" : "ran") << '\n';
    result_.stages.push_back(rep);
    stages_.push_back(std::move(s));
}

PipelineResult Runner::run() {
    // Hash the raw input under a reserved name so it never collides with an artifact.
    try {
        hashes_["<input>"] = sha256_file(c_.input);
    } catch (const std::exception& e) {
        throw StageError("ingest", e.what(), kExitInput);
    }
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw StageError("ingest", "cannot create '" + dir_.string() + "'", kExitInput);

    const auto input_key = [&](const std::string& stage, std::vector<std::string> settings) {
        settings.push_back("input=" + hashes_["<input>"]);
        return sha256_string("stage=" + stage + "\n" + [&] {
            std::string t;
            for (const auto& s : settings) t += s + "\n";
            return t;
        }());
    };

    run_stage({"ingest", input_key("ingest", {"min_total=" + std::to_string(c_.min_total)}),
               {"matrix.mtx"}},
              [&] {
                  const auto raw = load_matrix(c_.input, format_from_path(c_.input));
                  auto filtered = filter_genes(raw, c_.min_total);
                  if (filtered.matrix.n_genes() == 0) throw InputError("no gene passes the filter");
                  write_matrix_market(filtered.matrix, at("matrix.mtx"));
                  matrix_ = std::move(filtered.matrix);
              });

    const std::string est(to_string(c_.estimator));
    run_stage({"estimate", key_for("estimate", {"estimator=" + est}, {"matrix.mtx"}),
               {"gene_estimates.csv", "cell_estimates.csv"}},
              [&] {
                  params_ = estimate(matrix(), c_.estimator, c_.threads);
                  write_estimates(*params_, matrix(), at("gene_estimates.csv"), at("cell_estimates.csv"));
              });

    std::vector<std::string> fit_outputs{"dispersion.csv"};
    if (c_.write_rho) fit_outputs.push_back("rho.bin");
    const std::vector<std::string> est_inputs{"matrix.mtx", "gene_estimates.csv", "cell_estimates.csv"};
    run_stage({"fit-zero",
               key_for("fit-zero",
                       {"zero_tolerance=" + format_double(c_.zero_tolerance),
                        std::string("write_rho=") + (c_.write_rho ? "true" : "false")},
                       est_inputs),
               fit_outputs},
              [&] {
                  fit_ = fit_dispersion(matrix(), params(), c_.zero_tolerance, c_.threads);
                  write_dispersion(*fit_, matrix(), at("dispersion.csv"));
                  if (c_.write_rho) write_rho_binary(chance_of_expression(params(), *fit_, c_.threads), at("rho.bin"));
              });

    auto pair_inputs = est_inputs;
    pair_inputs.push_back("dispersion.csv");
    const std::string coex_name = c_.coex_output == "binary" ? "coex.bin" : "coex.csv";
    Stage coex{"coex", key_for("coex", {"coex_output=" + c_.coex_output}, pair_inputs), {}};
    if (c_.coex_output != "none") coex.outputs.push_back(coex_name);
    Stage gdi{"gdi",
              key_for("gdi",
                      {"alpha=" + format_double(c_.alpha), "gdi_quantile=" + format_double(c_.gdi_quantile),
                       "gdi_floor=" + format_double(c_.gdi_floor)},
                      pair_inputs),
              {"gdi.csv"}};

    // Both stages consume the same all-pairs stream; one engine pass serves
    // whichever of them has to run.
    const bool gdi_cached = is_cached(gdi);
    std::optional<GdiAccumulator> acc;
    auto engine_pass = [&](bool want_coex, bool want_gdi) {
        const auto rho = chance_of_expression(params(), fit(), c_.threads);
        std::optional<CoexWriter> writer;
        std::vector<PairSink*> sinks;
        if (want_coex && c_.coex_output != "none") {
            writer.emplace(at(coex_name), parse_coex_format(c_.coex_output), matrix(), true);
            sinks.push_back(&*writer);
        }
        if (want_gdi) {
            acc.emplace(matrix().n_genes(), GdiOptions{c_.alpha, c_.gdi_floor});
            sinks.push_back(&*acc);
        }
        TeeSink tee(sinks);
        EngineOptions eo;
        eo.tile = c_.tile;
        eo.threads = c_.threads;
        try {
            pairwise_coex(matrix(), rho, tee, eo);
        } catch (const PairwiseAborted& e) {
            if (writer) writer->abort(e.pairs_emitted, e.what());
            throw;
        }
        if (writer) writer->finish();
    };
    bool pass_done = false;
    run_stage(coex, [&] {
        engine_pass(true, !gdi_cached);
        pass_done = true;
    });
    run_stage(gdi, [&] {
        if (!pass_done || !acc) engine_pass(false, true);
        const auto scores = acc->finalize();
        write_gdi(scores, gdi_threshold_test(scores, c_.gdi_quantile), matrix(), at("gdi.csv"));
    });

    ordered_json j;
    j["format"] = "sccoex-manifest/1";
    j["input"] = {{"name", c_.input.filename().string()}, {"sha256", hashes_["<input>"]}};
    j["settings"] = {{"estimator", est},
                     {"alpha", c_.alpha},
                     {"gdi_quantile", c_.gdi_quantile},
                     {"gdi_floor", c_.gdi_floor},
                     {"zero_tolerance", c_.zero_tolerance},
                     {"min_total", c_.min_total},
                     {"coex_output", c_.coex_output},
                     {"write_rho", c_.write_rho},
                     {"seed", c_.seed}};
    j["stages"] = ordered_json::array();
    j["artifacts"] = ordered_json::array();
    for (const auto& s : stages_) {
        j["stages"].push_back({{"name", s.name}, {"key", s.key}, {"outputs", s.outputs}});
        for (const auto& out : s.outputs) {
            ArtifactEntry a{out, hash_of(out), static_cast<std::uint64_t>(fs::file_size(at(out)))};
            j["artifacts"].push_back({{"name", a.name}, {"sha256", a.sha256}, {"bytes", a.bytes}});
            result_.artifacts.push_back(std::move(a));
        }
    }
    result_.manifest = at("manifest.json");
    std::ofstream out(result_.manifest, std::ios::binary);
    out << j.dump(2) << '\n';
    if (!out) throw StageError("manifest", "cannot write manifest", kExitInput);
    return result_;
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& config, std::ostream* log) {
    config.validate();
    return Runner(config, log).run();
}

// Plot data ---------------------------------------------------------------------------

PlotKind parse_plot_kind(std::string_view name) {
    if (name == "pvalue-ecdf") return PlotKind::PvalueEcdf;
    if (name == "gdi-hist") return PlotKind::GdiHist;
    if (name == "estimator-scatter") return PlotKind::EstimatorScatter;
    throw InputError("unknown plot kind '" + std::string(name) +
                     "' (pvalue-ecdf|gdi-hist|estimator-scatter)");
}

namespace {

void require(const fs::path& p, const char* what) {
    if (p.empty()) throw InputError(std::string("missing artifact: ") + what);
    if (!fs::exists(p)) throw InputError("missing artifact '" + p.string() + "'");
}

std::vector<std::pair<std::string, double>> read_id_value(const fs::path& path, const std::string& header,
                                                          std::size_t value_col, std::size_t cols,
                                                          std::string* kind) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open '" + path.string() + "'");
    std::vector<std::pair<std::string, double>> out;
    std::string line;
    std::size_t lineno = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line.front() == '#') {
            if (kind && line.rfind("# estimator:", 0) == 0) {
                *kind = line.substr(12);
                kind->erase(0, kind->find_first_not_of(' '));
            }
            continue;
        }
        if (!header_seen) {
            if (line != header) throw InputError("expected header '" + header + "'", lineno);
            header_seen = true;
            continue;
        }
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string item;
        while (std::getline(ss, item, ',')) f.push_back(item);
        if (f.size() != cols) throw InputError("wrong number of fields", lineno);
        out.emplace_back(f[0], parse_double(f[value_col], lineno));
    }
    return out;
}

}  // namespace

void emit_plot_data(PlotKind kind, const PlotInputs& in, std::ostream& out) {
    out << "x,y,series\n";
    switch (kind) {
        case PlotKind::PvalueEcdf: {
            require(in.coex, "co-expression results");
            auto p = read_coex(in.coex, nullptr).p;
            if (p.size() > in.max_points) {
                // Uniform subsample without replacement, seeded.
                std::mt19937_64 rng(in.seed);
                for (std::size_t i = 0; i < in.max_points; ++i) {
                    std::uniform_int_distribution<std::size_t> pick(i, p.size() - 1);
                    std::swap(p[i], p[pick(rng)]);
                }
                p.resize(in.max_points);
            }
            std::sort(p.begin(), p.end());
            const double n = static_cast<double>(p.size());
            for (std::size_t i = 0; i < p.size(); ++i) {
                if (i + 1 < p.size() && p[i + 1] == p[i]) continue;  // one point per distinct value
                out << format_double(p[i]) << ',' << format_double((i + 1) / n) << ",ecdf\n";
            }
            break;
        }
        case PlotKind::GdiHist: {
            require(in.gdi, "GDI scores");
            if (!(in.bin_width > 0.0)) throw InputError("bin width must be > 0");
            const auto t = read_gdi(in.gdi);
            std::map<long long, std::size_t> bins;
            for (double g : t.gdi) ++bins[static_cast<long long>(std::floor(g / in.bin_width))];
            for (const auto& [b, count] : bins) {
                out << format_double((static_cast<double>(b) + 0.5) * in.bin_width) << ',' << count
                    << ",gdi\n";
            }
            break;
        }
        case PlotKind::EstimatorScatter: {
            if (in.truth_prefix.empty()) throw InputError("missing artifact: ground truth");
            const fs::path cells_truth = in.truth_prefix.string() + "_cells.csv";
            const fs::path genes_truth = in.truth_prefix.string() + "_genes.csv";
            require(cells_truth, "ground-truth cells");
            require(genes_truth, "ground-truth genes");
            if (in.gene_estimates.empty() && in.cell_estimates.empty()) {
                throw InputError("missing artifact: estimates");
            }
            // Multi-cluster truth has one lambda per cluster; only cluster 0 of a
            // single-cluster truth maps onto a global lambda.
            std::map<std::string, double> nu_true, lambda_true;
            for (const auto& [id, v] : read_id_value(cells_truth, "cell,cluster,nu", 2, 3, nullptr)) {
                nu_true[id] = v;
            }
            std::map<std::string, int> clusters_seen;
            for (const auto& [id, v] : read_id_value(genes_truth, "gene,cluster,lambda,a", 2, 4, nullptr)) {
                if (++clusters_seen[id] > 1) throw InputError("estimator-scatter needs single-cluster ground truth");
                lambda_true[id] = v;
            }
            auto emit = [&](const fs::path& path, const std::map<std::string, double>& truth,
                            const char* param) {
                require(path, param);
                std::string est = "unknown";
                const auto rows = read_id_value(path, "id,value,flag", 1, 3, &est);
                for (const auto& [id, v] : rows) {
                    const auto it = truth.find(id);
                    if (it == truth.end()) continue;  // filtered genes have no estimate row
                    out << format_double(it->second) << ',' << format_double(v) << ',' << param
                        << ':' << est << '\n';
                }
            };
            for (const auto& p : in.cell_estimates) emit(p, nu_true, "nu");
            for (const auto& p : in.gene_estimates) emit(p, lambda_true, "lambda");
            break;
        }
    }
}

}  // namespace sccoex
