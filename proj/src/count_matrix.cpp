#include "sccoex/count_matrix.hpp"

#include <algorithm>
#include <unordered_set>

#include "sccoex/error.hpp"

namespace sccoex {

namespace {

void check_unique(const std::vector<std::string>& ids, const char* what) {
    std::unordered_set<std::string_view> seen;
    seen.reserve(ids.size());
    for (const auto& id : ids) {
        if (!seen.insert(id).second) {
            throw InputError(std::string("duplicate ") + what + " id '" + id + "'");
        }
    }
}

std::vector<std::string> generated_ids(char prefix, std::size_t n) {
    std::vector<std::string> ids;
    ids.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        ids.push_back(prefix + std::to_string(i + 1));
    }
    return ids;
}

}  // namespace

CountMatrix::CountMatrix(std::vector<std::string> gene_ids, std::vector<std::string> cell_ids,
                         std::vector<std::size_t> row_offsets, std::vector<index_t> cells,
                         std::vector<count_t> counts)
    : gene_ids_(std::move(gene_ids)),
      cell_ids_(std::move(cell_ids)),
      row_offsets_(std::move(row_offsets)),
      cells_(std::move(cells)),
      counts_(std::move(counts)) {
    if (row_offsets_.size() != gene_ids_.size() + 1 || row_offsets_.front() != 0 ||
        row_offsets_.back() != cells_.size() || cells_.size() != counts_.size()) {
        throw InputError("inconsistent sparse layout");
    }
    check_unique(gene_ids_, "gene");
    check_unique(cell_ids_, "cell");
    const auto m = cell_ids_.size();
    for (std::size_t g = 0; g < gene_ids_.size(); ++g) {
        if (row_offsets_[g] > row_offsets_[g + 1]) {
            throw InputError("row offsets not monotone");
        }
        for (auto k = row_offsets_[g]; k < row_offsets_[g + 1]; ++k) {
            if (cells_[k] >= m) {
                throw InputError("cell index out of range in gene '" + gene_ids_[g] + "'");
            }
            if (k > row_offsets_[g] && cells_[k] <= cells_[k - 1]) {
                throw InputError("unsorted or duplicate cell in gene '" + gene_ids_[g] + "'");
            }
            if (counts_[k] == 0) {
                throw InputError("explicit zero stored in gene '" + gene_ids_[g] + "'");
            }
        }
    }
}

CountMatrix CountMatrix::from_dense(std::span<const std::vector<count_t>> rows,
                                    std::vector<std::string> gene_ids,
                                    std::vector<std::string> cell_ids) {
    const std::size_t n = rows.size();
    const std::size_t m = n == 0 ? cell_ids.size() : rows.front().size();
    if (gene_ids.empty()) gene_ids = generated_ids('g', n);
    if (cell_ids.empty()) cell_ids = generated_ids('c', m);
    std::vector<std::size_t> offsets{0};
    std::vector<index_t> cells;
    std::vector<count_t> counts;
    for (const auto& r : rows) {
        if (r.size() != m) throw InputError("ragged dense rows");
        for (std::size_t c = 0; c < m; ++c) {
            if (r[c] != 0) {
                cells.push_back(static_cast<index_t>(c));
                counts.push_back(r[c]);
            }
        }
        offsets.push_back(cells.size());
    }
    return CountMatrix(std::move(gene_ids), std::move(cell_ids), std::move(offsets),
                       std::move(cells), std::move(counts));
}

CountMatrix::Row CountMatrix::row(std::size_t gene) const {
    const auto b = row_offsets_[gene];
    const auto e = row_offsets_[gene + 1];
    return {std::span(cells_).subspan(b, e - b), std::span(counts_).subspan(b, e - b)};
}

count_t CountMatrix::at(std::size_t gene, std::size_t cell) const {
    const auto r = row(gene);
    const auto it = std::lower_bound(r.cells.begin(), r.cells.end(), cell);
    if (it == r.cells.end() || *it != cell) return 0;
    return r.counts[static_cast<std::size_t>(it - r.cells.begin())];
}

CountMatrix CountMatrix::select_cells(std::span<const std::size_t> cells) const {
    std::vector<std::int64_t> remap(n_cells(), -1);
    std::vector<std::string> ids;
    ids.reserve(cells.size());
    for (std::size_t j = 0; j < cells.size(); ++j) {
        remap.at(cells[j]) = static_cast<std::int64_t>(j);
        ids.push_back(cell_ids_[cells[j]]);
    }
    std::vector<std::size_t> offsets{0};
    std::vector<index_t> out_cells;
    std::vector<count_t> out_counts;
    std::vector<std::pair<index_t, count_t>> buf;
    for (std::size_t g = 0; g < n_genes(); ++g) {
        buf.clear();
        const auto r = row(g);
        for (std::size_t k = 0; k < r.size(); ++k) {
            const auto to = remap[r.cells[k]];
            if (to >= 0) buf.emplace_back(static_cast<index_t>(to), r.counts[k]);
        }
        std::sort(buf.begin(), buf.end());
        for (const auto& [c, v] : buf) {
            out_cells.push_back(c);
            out_counts.push_back(v);
        }
        offsets.push_back(out_cells.size());
    }
    return CountMatrix(gene_ids_, std::move(ids), std::move(offsets), std::move(out_cells),
                       std::move(out_counts));
}

Marginals marginals(const CountMatrix& m) {
    Marginals out;
    const auto n = m.n_genes();
    out.genes.row_sum.assign(n, 0);
    out.genes.nonzero_cells.assign(n, 0);
    out.genes.zero_cells.assign(n, 0);
    out.cell_totals.assign(m.n_cells(), 0);
    out.cell_nonzero.assign(m.n_cells(), 0);
    for (std::size_t g = 0; g < n; ++g) {
        const auto r = m.row(g);
        std::uint64_t s = 0;
        for (std::size_t k = 0; k < r.size(); ++k) {
            s += r.counts[k];
            out.cell_totals[r.cells[k]] += r.counts[k];
            ++out.cell_nonzero[r.cells[k]];
        }
        out.genes.row_sum[g] = s;
        out.genes.nonzero_cells[g] = static_cast<std::uint32_t>(r.size());
        out.genes.zero_cells[g] = static_cast<std::uint32_t>(m.n_cells() - r.size());
        out.grand_total += s;
    }
    return out;
}

FilterResult filter_genes(const CountMatrix& m, std::uint64_t min_total) {
    if (min_total < 1) throw std::invalid_argument("filter_genes: min_total must be >= 1");
    FilterResult out;
    std::vector<std::string> ids;
    std::vector<std::size_t> offsets{0};
    std::vector<index_t> cells;
    std::vector<count_t> counts;
    for (std::size_t g = 0; g < m.n_genes(); ++g) {
        const auto r = m.row(g);
        std::uint64_t total = 0;
        for (auto v : r.counts) total += v;
        if (total < min_total) continue;
        out.kept.push_back(g);
        ids.push_back(m.gene_ids()[g]);
        cells.insert(cells.end(), r.cells.begin(), r.cells.end());
        counts.insert(counts.end(), r.counts.begin(), r.counts.end());
        offsets.push_back(cells.size());
    }
    out.empty = out.kept.empty();
    out.matrix = CountMatrix(std::move(ids), m.cell_ids(), std::move(offsets), std::move(cells),
                             std::move(counts));
    return out;
}

}  // namespace sccoex
