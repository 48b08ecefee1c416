#include <algorithm>
#include <charconv>
#include <fstream>
#include <limits>

#include "sccoex/count_matrix.hpp"
#include "sccoex/error.hpp"

namespace sccoex {

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
        const auto b = i;
        while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
        if (i > b) out.push_back(line.substr(b, i - b));
    }
    return out;
}

// Tab-separated when the line contains a tab (ids may then hold spaces).
std::vector<std::string_view> split_fields(std::string_view line) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find('\t') == std::string_view::npos) return split_ws(line);
    std::vector<std::string_view> out;
    std::size_t b = 0;
    for (;;) {
        const auto e = line.find('\t', b);
        out.push_back(line.substr(b, e == std::string_view::npos ? line.npos : e - b));
        if (e == std::string_view::npos) break;
        b = e + 1;
    }
    return out;
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    return out;
}

bool parse_int(std::string_view tok, std::int64_t& out) {
    if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
    const auto* end = tok.data() + tok.size();
    const auto [p, ec] = std::from_chars(tok.data(), end, out);
    return ec == std::errc() && p == end;
}

count_t parse_count(std::string_view tok, std::size_t line) {
    std::int64_t v = 0;
    if (!parse_int(tok, v)) {
        throw InputError("non-integer count '" + std::string(tok) + "'", line);
    }
    if (v < 0) throw InputError("negative count", line);
    if (v > std::numeric_limits<count_t>::max()) throw InputError("count too large", line);
    return static_cast<count_t>(v);
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open '" + path.string() + "'");
    return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write '" + path.string() + "'");
    return out;
}

}  // namespace

MatrixFormat format_from_path(const std::filesystem::path& path) {
    const auto ext = lower(path.extension().string());
    if (ext == ".mtx") return MatrixFormat::MatrixMarket;
    if (ext == ".tsv" || ext == ".txt") return MatrixFormat::DenseTsv;
    throw InputError("cannot infer matrix format from '" + path.string() + "'");
}

CountMatrix load_matrix_market(const std::filesystem::path& path) {
    auto in = open_in(path);
    std::string line;
    std::size_t lineno = 0;

    if (!std::getline(in, line)) throw InputError("empty file", 1);
    ++lineno;
    {
        const auto tok = split_ws(line);
        if (tok.size() != 5 || tok[0] != "%%MatrixMarket" || lower(tok[1]) != "matrix" ||
            lower(tok[2]) != "coordinate" || lower(tok[3]) != "integer" ||
            lower(tok[4]) != "general") {
            throw InputError(
                "malformed header, expected '%%MatrixMarket matrix coordinate integer general'",
                lineno);
        }
    }

    std::vector<std::string> gene_ids, cell_ids;
    std::int64_t n = -1, m = -1, nnz = -1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.front() == '%') {
            auto body = std::string_view(line).substr(1);
            body.remove_prefix(std::min(body.find_first_not_of(' '), body.size()));
            const auto tok = split_fields(body);
            if (tok.size() == 2 && tok[0] == "gene") gene_ids.emplace_back(tok[1]);
            if (tok.size() == 2 && tok[0] == "cell") cell_ids.emplace_back(tok[1]);
            continue;
        }
        const auto tok = split_ws(line);
        if (tok.empty()) continue;
        if (tok.size() != 3 || !parse_int(tok[0], n) || !parse_int(tok[1], m) ||
            !parse_int(tok[2], nnz) || n < 0 || m < 0 || nnz < 0) {
            throw InputError("malformed size line", lineno);
        }
        break;
    }
    if (n < 0) throw InputError("missing size line", lineno);
    if (n > std::numeric_limits<index_t>::max() || m > std::numeric_limits<index_t>::max()) {
        throw InputError("matrix dimensions too large", lineno);
    }

    struct Entry {
        index_t row, col;
        count_t value;
        std::size_t line;
    };
    std::vector<Entry> entries;
    entries.reserve(static_cast<std::size_t>(nnz));
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.front() == '%') continue;
        const auto tok = split_ws(line);
        if (tok.empty()) continue;
        if (tok.size() != 3) throw InputError("expected 'row col value'", lineno);
        std::int64_t i = 0, j = 0;
        if (!parse_int(tok[0], i) || !parse_int(tok[1], j)) {
            throw InputError("malformed index", lineno);
        }
        const auto v = parse_count(tok[2], lineno);
        if (i < 1 || i > n || j < 1 || j > m) throw InputError("index out of range", lineno);
        if (static_cast<std::int64_t>(entries.size()) == nnz) {
            throw InputError("more entries than declared", lineno);
        }
        entries.push_back({static_cast<index_t>(i - 1), static_cast<index_t>(j - 1), v, lineno});
    }
    if (static_cast<std::int64_t>(entries.size()) != nnz) {
        throw InputError("declared " + std::to_string(nnz) + " entries, found " +
                             std::to_string(entries.size()),
                         lineno);
    }

    std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    for (std::size_t k = 1; k < entries.size(); ++k) {
        if (entries[k].row == entries[k - 1].row && entries[k].col == entries[k - 1].col) {
            const auto& later =
                entries[k].line > entries[k - 1].line ? entries[k] : entries[k - 1];
            throw InputError("duplicate entry (" + std::to_string(later.row + 1) + "," +
                                 std::to_string(later.col + 1) + ")",
                             later.line);
        }
    }

    const auto ng = static_cast<std::size_t>(n);
    const auto nc = static_cast<std::size_t>(m);
    if (!gene_ids.empty() && gene_ids.size() != ng) {
        throw InputError("gene id comments do not match row count");
    }
    if (!cell_ids.empty() && cell_ids.size() != nc) {
        throw InputError("cell id comments do not match column count");
    }
    std::vector<std::size_t> offsets(ng + 1, 0);
    std::vector<index_t> cells;
    std::vector<count_t> counts;
    cells.reserve(entries.size());
    counts.reserve(entries.size());
    for (const auto& e : entries) {
        if (e.value == 0) continue;
        ++offsets[e.row + 1];
        cells.push_back(e.col);
        counts.push_back(e.value);
    }
    for (std::size_t g = 0; g < ng; ++g) offsets[g + 1] += offsets[g];

    if (gene_ids.empty()) {
        for (std::size_t g = 0; g < ng; ++g) gene_ids.push_back("g" + std::to_string(g + 1));
    }
    if (cell_ids.empty()) {
        for (std::size_t c = 0; c < nc; ++c) cell_ids.push_back("c" + std::to_string(c + 1));
    }
    return CountMatrix(std::move(gene_ids), std::move(cell_ids), std::move(offsets),
                       std::move(cells), std::move(counts));
}

CountMatrix load_dense_tsv(const std::filesystem::path& path) {
    auto in = open_in(path);
    std::string line;
    std::size_t lineno = 0;
    std::vector<std::string_view> header;
    std::string header_line;
    while (std::getline(in, header_line)) {
        ++lineno;
        header = split_fields(header_line);
        if (!header.empty()) break;
    }
    if (header.empty()) throw InputError("empty file", lineno);

    std::vector<std::string> gene_ids;
    std::vector<std::size_t> offsets{0};
    std::vector<index_t> cells;
    std::vector<count_t> counts;
    std::size_t width = 0;  // fields per body row
    while (std::getline(in, line)) {
        ++lineno;
        const auto tok = split_fields(line);
        if (tok.empty() || (tok.size() == 1 && tok[0].empty())) continue;
        if (width == 0) {
            // The header either has a corner label or lists only the cells.
            width = tok.size();
            if (header.size() != width && header.size() + 1 != width) {
                throw InputError("ragged row: header has " + std::to_string(header.size()) +
                                     " fields, row has " + std::to_string(width),
                                 lineno);
            }
        } else if (tok.size() != width) {
            throw InputError("ragged row: expected " + std::to_string(width) + " fields, got " +
                                 std::to_string(tok.size()),
                             lineno);
        }
        gene_ids.emplace_back(tok[0]);
        for (std::size_t c = 1; c < tok.size(); ++c) {
            const auto v = parse_count(tok[c], lineno);
            if (v != 0) {
                cells.push_back(static_cast<index_t>(c - 1));
                counts.push_back(v);
            }
        }
        offsets.push_back(cells.size());
    }
    // Header only (no genes): the header is taken as the cell list.
    const std::size_t skip = (width != 0 && header.size() == width) ? 1 : 0;
    std::vector<std::string> cell_ids;
    for (std::size_t k = skip; k < header.size(); ++k) cell_ids.emplace_back(header[k]);
    return CountMatrix(std::move(gene_ids), std::move(cell_ids), std::move(offsets),
                       std::move(cells), std::move(counts));
}

CountMatrix load_matrix(const std::filesystem::path& path, MatrixFormat format) {
    return format == MatrixFormat::MatrixMarket ? load_matrix_market(path) : load_dense_tsv(path);
}

void write_matrix_market(const CountMatrix& m, const std::filesystem::path& path) {
    auto out = open_out(path);
    out << "%%MatrixMarket matrix coordinate integer general\n";
    for (const auto& id : m.gene_ids()) out << "% gene\t" << id << '\n';
    for (const auto& id : m.cell_ids()) out << "% cell\t" << id << '\n';
    out << m.n_genes() << ' ' << m.n_cells() << ' ' << m.nnz() << '\n';
    for (std::size_t g = 0; g < m.n_genes(); ++g) {
        const auto r = m.row(g);
        for (std::size_t k = 0; k < r.size(); ++k) {
            out << g + 1 << ' ' << r.cells[k] + 1 << ' ' << r.counts[k] << '\n';
        }
    }
    if (!out) throw InputError("write failed for '" + path.string() + "'");
}

void write_dense_tsv(const CountMatrix& m, const std::filesystem::path& path) {
    auto out = open_out(path);
    out << "gene";
    for (const auto& id : m.cell_ids()) out << '\t' << id;
    out << '\n';
    std::vector<count_t> dense(m.n_cells());
    for (std::size_t g = 0; g < m.n_genes(); ++g) {
        std::fill(dense.begin(), dense.end(), 0);
        const auto r = m.row(g);
        for (std::size_t k = 0; k < r.size(); ++k) dense[r.cells[k]] = r.counts[k];
        out << m.gene_ids()[g];
        for (auto v : dense) out << '\t' << v;
        out << '\n';
    }
    if (!out) throw InputError("write failed for '" + path.string() + "'");
}

void write_matrix(const CountMatrix& m, const std::filesystem::path& path, MatrixFormat format) {
    if (format == MatrixFormat::MatrixMarket) {
        write_matrix_market(m, path);
    } else {
        write_dense_tsv(m, path);
    }
}

}  // namespace sccoex
