#include "sccoex/artifacts.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <charconv>
#include <cstring>
#include <sstream>
#include <unordered_map>

#include "binary_io.hpp"
#include "sccoex/error.hpp"

namespace sccoex {

namespace {

constexpr char kCoexMagic[8] = {'S', 'C', 'C', 'O', 'E', 'X', '\0', '\1'};

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write '" + path.string() + "'");
    return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path.string() + "'");
    return in;
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (true) {
        const auto next = line.find(sep, pos);
        out.push_back(line.substr(pos, next - pos));
        if (next == std::string::npos) break;
        pos = next + 1;
    }
    return out;
}

// Data lines of a CSV with the expected header; '#' lines are returned
// through `comments`.
struct CsvReader {
    std::ifstream in;
    std::string path;
    std::size_t line = 0;
    std::vector<std::string> comments;

    CsvReader(const std::filesystem::path& p, const std::string& header)
        : in(open_in(p)), path(p.string()) {
        std::string text;
        while (std::getline(in, text)) {
            ++line;
            strip(text);
            if (!text.empty() && text.front() == '#') {
                comments.push_back(text);
                continue;
            }
            if (text != header) {
                throw InputError("'" + path + "': expected header '" + header + "'", line);
            }
            return;
        }
        throw InputError("'" + path + "': missing header '" + header + "'");
    }

    static void strip(std::string& s) {
        if (!s.empty() && s.back() == '\r') s.pop_back();
    }

    bool next(std::vector<std::string>& fields, std::size_t expected) {
        std::string text;
        while (std::getline(in, text)) {
            ++line;
            strip(text);
            if (text.empty()) continue;
            if (text.front() == '#') {
                comments.push_back(text);
                continue;
            }
            fields = split(text, ',');
            if (fields.size() != expected) {
                throw InputError("'" + path + "': expected " + std::to_string(expected) + " fields", line);
            }
            return true;
        }
        return false;
    }

    std::string comment_value(const std::string& key) const {
        const std::string prefix = "# " + key + ":";
        for (const auto& c : comments) {
            if (c.rfind(prefix, 0) == 0) {
                auto v = c.substr(prefix.size());
                v.erase(0, v.find_first_not_of(' '));
                return v;
            }
        }
        throw InputError("'" + path + "': missing '" + prefix + "' line");
    }
};

std::uint8_t parse_flag(const std::string& s, std::size_t line) {
    if (s == "0") return 0;
    if (s == "1") return 1;
    throw InputError("expected flag 0 or 1, got '" + s + "'", line);
}

void expect_id(const std::string& got, const std::string& want, std::size_t line) {
    if (got != want) throw InputError("id '" + got + "' does not match matrix id '" + want + "'", line);
}

}  // namespace

std::string format_double(double v) {
    char buf[64];
    const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

double parse_double(const std::string& s, std::size_t line) {
    double v = 0.0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) {
        throw InputError("malformed number '" + s + "'", line);
    }
    return v;
}

std::string sha256_string(const std::string& data) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("SHA-256 failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 0xf];
    }
    return out;
}

std::string sha256_file(const std::filesystem::path& path) {
    auto in = open_in(path);
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("SHA-256 init failed");
    }
    std::vector<char> buf(1 << 16);
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx.get(), md.data(), &len);
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 0xf];
    }
    return out;
}

// Estimates ---------------------------------------------------------------------

void write_estimates(const ModelParams& p, const CountMatrix& m,
                     const std::filesystem::path& genes_csv, const std::filesystem::path& cells_csv) {
    auto write = [&](const std::filesystem::path& path, const std::vector<std::string>& ids,
                     const std::vector<double>& values, const std::vector<std::uint8_t>& flags) {
        auto out = open_out(path);
        out << "# estimator: " << to_string(p.kind) << "\nid,value,flag\n";
        for (std::size_t i = 0; i < ids.size(); ++i) {
            out << ids[i] << ',' << format_double(values[i]) << ',' << int(flags.empty() ? 0 : flags[i])
                << '\n';
        }
        if (!out) throw InputError("write failed for '" + path.string() + "'");
    };
    write(genes_csv, m.gene_ids(), p.lambda, p.lambda_clamped);
    write(cells_csv, m.cell_ids(), p.nu, p.nu_clamped);
}

ModelParams read_estimates(const CountMatrix& m, const std::filesystem::path& genes_csv,
                           const std::filesystem::path& cells_csv) {
    ModelParams p;
    auto read = [&](const std::filesystem::path& path, const std::vector<std::string>& ids,
                    std::vector<double>& values, std::vector<std::uint8_t>& flags) {
        CsvReader r(path, "id,value,flag");
        const auto kind = parse_estimator(r.comment_value("estimator"));
        std::vector<std::string> f;
        while (r.next(f, 3)) {
            if (values.size() >= ids.size()) throw InputError("more rows than the matrix has", r.line);
            expect_id(f[0], ids[values.size()], r.line);
            values.push_back(parse_double(f[1], r.line));
            flags.push_back(parse_flag(f[2], r.line));
        }
        if (values.size() != ids.size()) {
            throw InputError("'" + path.string() + "' has " + std::to_string(values.size()) +
                             " rows, matrix has " + std::to_string(ids.size()));
        }
        return kind;
    };
    p.kind = read(genes_csv, m.gene_ids(), p.lambda, p.lambda_clamped);
    if (read(cells_csv, m.cell_ids(), p.nu, p.nu_clamped) != p.kind) {
        throw InputError("gene and cell estimates come from different estimators");
    }
    return p;
}

// Dispersion ----------------------------------------------------------------------

void write_dispersion(const DispersionFit& fit, const CountMatrix& m,
                      const std::filesystem::path& path) {
    auto out = open_out(path);
    out << "# mu_source: " << to_string(fit.mu_source) << "\n# rel_tol: " << format_double(fit.rel_tol)
        << "\ngene,a,residual,negative_a,fitted\n";
    for (std::size_t g = 0; g < fit.n_genes(); ++g) {
        out << m.gene_ids()[g] << ',' << format_double(fit.a[g]) << ','
            << format_double(fit.residual[g]) << ',' << int(fit.a[g] < 0.0) << ','
            << int(fit.fitted[g]) << '\n';
    }
    if (!out) throw InputError("write failed for '" + path.string() + "'");
}

DispersionFit read_dispersion(const CountMatrix& m, const std::filesystem::path& path) {
    CsvReader r(path, "gene,a,residual,negative_a,fitted");
    DispersionFit fit;
    fit.mu_source = parse_estimator(r.comment_value("mu_source"));
    fit.rel_tol = parse_double(r.comment_value("rel_tol"), 0);
    std::vector<std::string> f;
    while (r.next(f, 5)) {
        if (fit.a.size() >= m.n_genes()) throw InputError("more rows than the matrix has", r.line);
        expect_id(f[0], m.gene_ids()[fit.a.size()], r.line);
        fit.a.push_back(parse_double(f[1], r.line));
        fit.residual.push_back(parse_double(f[2], r.line));
        parse_flag(f[3], r.line);
        fit.fitted.push_back(parse_flag(f[4], r.line));
    }
    if (fit.a.size() != m.n_genes()) throw InputError("dispersion file does not cover every gene");
    return fit;
}

// GDI -------------------------------------------------------------------------------

void write_gdi(const GdiScores& scores, std::span<const std::uint8_t> flags, const CountMatrix& m,
               const std::filesystem::path& path) {
    auto out = open_out(path);
    out << "gene,S,GDI,flagged\n";
    for (std::size_t g = 0; g < scores.s.size(); ++g) {
        out << m.gene_ids()[g] << ',' << format_double(scores.s[g]) << ','
            << format_double(scores.gdi[g]) << ',' << int(flags[g]) << '\n';
    }
    if (!out) throw InputError("write failed for '" + path.string() + "'");
}

GdiTable read_gdi(const std::filesystem::path& path) {
    CsvReader r(path, "gene,S,GDI,flagged");
    GdiTable t;
    std::vector<std::string> f;
    while (r.next(f, 4)) {
        t.genes.push_back(f[0]);
        t.s.push_back(parse_double(f[1], r.line));
        t.gdi.push_back(parse_double(f[2], r.line));
        t.flagged.push_back(parse_flag(f[3], r.line));
    }
    return t;
}

// Co-expression output ------------------------------------------------------------------

CoexFormat parse_coex_format(std::string_view name) {
    if (name == "csv") return CoexFormat::Csv;
    if (name == "binary") return CoexFormat::Binary;
    throw InputError("unknown output format '" + std::string(name) + "' (csv|binary)");
}

CoexWriter::CoexWriter(const std::filesystem::path& path, CoexFormat format, const CountMatrix& m,
                       bool all_pairs)
    : path_(path),
      partial_(path.string() + ".partial"),
      format_(format),
      m_(m),
      all_pairs_(all_pairs),
      out_(open_out(partial_)) {
    if (format_ == CoexFormat::Csv) {
        out_ << "g1,g2,O11,O10,O01,O00,e11,e10,e01,e00,W,R,p\n";
    } else {
        out_.write(kCoexMagic, sizeof kCoexMagic);
        count_pos_ = out_.tellp();
        detail::put_le<std::uint64_t>(out_, 0);
    }
}

void CoexWriter::write_records(std::span<const PairRecord> recs) {
    if (format_ == CoexFormat::Csv) {
        std::string line;
        for (const auto& r : recs) {
            line.clear();
            line += m_.gene_ids()[r.g1];
            line += ',';
            line += m_.gene_ids()[r.g2];
            for (auto o : r.table.observed) line += ',' + std::to_string(o);
            for (auto e : r.table.expected) line += ',' + format_double(e);
            line += ',' + format_double(r.result.w);
            line += ',' + format_double(r.result.r);
            line += ',' + format_double(r.result.p_value);
            line += '\n';
            out_ << line;
        }
    } else {
        for (const auto& r : recs) {
            detail::put_le(out_, r.g1);
            detail::put_le(out_, r.g2);
            for (auto o : r.table.observed) detail::put_le(out_, o);
            for (auto e : r.table.expected) detail::put_le(out_, e);
            detail::put_le(out_, r.result.w);
            detail::put_le(out_, r.result.r);
            detail::put_le(out_, r.result.p_value);
        }
    }
    written_ += recs.size();
    if (!out_) throw InputError("write failed for '" + partial_.string() + "'");
}

void CoexWriter::flush_ready() {
    while (next_band_ < band_tiles_.size() && band_tiles_[next_band_] == band_tiles_.size() - next_band_) {
        auto& recs = band_[next_band_];
        std::sort(recs.begin(), recs.end(), [](const PairRecord& a, const PairRecord& b) {
            return a.g1 != b.g1 ? a.g1 < b.g1 : a.g2 < b.g2;
        });
        write_records(recs);
        std::vector<PairRecord>().swap(recs);
        ++next_band_;
    }
}

void CoexWriter::consume(std::span<const PairRecord> batch, const TileInfo& tile) {
    std::lock_guard lock(mutex_);
    if (!all_pairs_) {
        write_records(batch);
        return;
    }
    if (band_.empty()) {
        band_.resize(tile.tiles);
        band_tiles_.assign(tile.tiles, 0);
    }
    auto& recs = band_[tile.row_tile];
    recs.insert(recs.end(), batch.begin(), batch.end());
    ++band_tiles_[tile.row_tile];
    flush_ready();
}

void CoexWriter::finish() {
    std::lock_guard lock(mutex_);
    if (all_pairs_ && next_band_ != band_tiles_.size()) {
        throw std::logic_error("coex writer finished with incomplete tile rows");
    }
    if (format_ == CoexFormat::Binary) {
        out_.seekp(count_pos_);
        detail::put_le<std::uint64_t>(out_, written_);
    }
    out_.close();
    if (!out_) throw InputError("write failed for '" + partial_.string() + "'");
    std::filesystem::rename(partial_, path_);
}

void CoexWriter::abort(std::uint64_t pairs_emitted, const std::string& reason) {
    std::lock_guard lock(mutex_);
    if (format_ == CoexFormat::Csv) {
        out_ << "# partial: " << written_ << " of " << pairs_emitted
             << " emitted pairs written; " << reason << '\n';
    }
    out_.close();
}

CoexColumns read_coex(const std::filesystem::path& path, const CountMatrix* m) {
    CoexColumns out;
    std::unordered_map<std::string, std::uint32_t> index;
    if (m) {
        for (std::size_t g = 0; g < m->n_genes(); ++g) {
            index.emplace(m->gene_ids()[g], static_cast<std::uint32_t>(g));
        }
    }
    auto in = open_in(path);
    char magic[8] = {};
    in.read(magic, sizeof magic);
    if (in.gcount() == sizeof magic && std::memcmp(magic, kCoexMagic, sizeof magic) == 0) {
        const auto n = detail::get_le<std::uint64_t>(in, "coex file");
        for (std::uint64_t i = 0; i < n; ++i) {
            const auto g1 = detail::get_le<std::uint32_t>(in, "coex file");
            const auto g2 = detail::get_le<std::uint32_t>(in, "coex file");
            for (int k = 0; k < 4; ++k) detail::get_le<std::uint32_t>(in, "coex file");
            for (int k = 0; k < 5; ++k) detail::get_le<double>(in, "coex file");
            const double r = detail::get_le<double>(in, "coex file");
            const double p = detail::get_le<double>(in, "coex file");
            if (m && (g1 >= m->n_genes() || g2 >= m->n_genes())) {
                throw InputError("coex file refers to gene index beyond the matrix");
            }
            out.r.push_back({g1, g2, r});
            out.p.push_back(p);
        }
        // An aborted writer never patches the count, so records trail it.
        if (in.peek() != std::ifstream::traits_type::eof()) {
            throw InputError("'" + path.string() + "' is a partial result");
        }
        return out;
    }
    in.close();
    CsvReader r(path, "g1,g2,O11,O10,O01,O00,e11,e10,e01,e00,W,R,p");
    std::vector<std::string> f;
    while (r.next(f, 13)) {
        out.p.push_back(parse_double(f[12], r.line));
        if (m) {
            const auto a = index.find(f[0]);
            const auto b = index.find(f[1]);
            if (a == index.end() || b == index.end()) throw InputError("unknown gene in pair", r.line);
            out.r.push_back({a->second, b->second, parse_double(f[11], r.line)});
        }
    }
    for (const auto& c : r.comments) {
        if (c.rfind("# partial", 0) == 0) throw InputError("'" + path.string() + "' is a partial result");
    }
    return out;
}

std::vector<std::pair<std::uint32_t, std::uint32_t>> load_pair_list(
    const std::filesystem::path& path, const CountMatrix& m) {
    std::unordered_map<std::string, std::uint32_t> index;
    for (std::size_t g = 0; g < m.n_genes(); ++g) index.emplace(m.gene_ids()[g], static_cast<std::uint32_t>(g));
    auto lookup = [&](const std::string& s, std::size_t line) -> std::uint32_t {
        if (const auto it = index.find(s); it != index.end()) return it->second;
        std::uint64_t v = 0;
        const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec == std::errc{} && p == s.data() + s.size() && v >= 1 && v <= m.n_genes()) {
            return static_cast<std::uint32_t>(v - 1);
        }
        throw InputError("unknown gene '" + s + "'", line);
    };
    auto in = open_in(path);
    std::vector<std::pair<std::uint32_t, std::uint32_t>> out;
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        CsvReader::strip(text);
        if (text.empty() || text.front() == '#') continue;
        const char sep = text.find('\t') != std::string::npos ? '\t' : ',';
        const auto f = split(text, sep);
        if (f.size() != 2) throw InputError("expected two gene columns", line);
        const auto a = lookup(f[0], line);
        const auto b = lookup(f[1], line);
        if (a == b) throw InputError("self-pair '" + f[0] + "' is not allowed", line);
        out.emplace_back(a, b);
    }
    return out;
}

}  // namespace sccoex
