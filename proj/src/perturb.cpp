#include "tqa/perturb.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

namespace tqa {

namespace {

using Rng = std::mt19937_64;

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

int rand_int(Rng& rng, int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
}

std::vector<int> identity_map(int n) {
    std::vector<int> m(static_cast<std::size_t>(n));
    std::iota(m.begin(), m.end(), 0);
    return m;
}

}  // namespace

std::string perturbation_name(PerturbationKind kind) {
    switch (kind) {
        case PerturbationKind::RowAddition: return "ra";
        case PerturbationKind::RowPermutation: return "rp";
        case PerturbationKind::ColumnPermutation: return "cp";
        case PerturbationKind::CellReplacement: return "cr";
    }
    throw std::logic_error("unreachable perturbation kind");
}

PerturbationKind perturbation_from_name(const std::string& name) {
    if (name == "ra") return PerturbationKind::RowAddition;
    if (name == "rp") return PerturbationKind::RowPermutation;
    if (name == "cp") return PerturbationKind::ColumnPermutation;
    if (name == "cr") return PerturbationKind::CellReplacement;
    throw ConfigError("unknown perturbation kind: " + name + " (expected ra|rp|cp|cr)");
}

int row_addition_count(int cell_count) {
    if (cell_count <= 150) return 1;
    if (cell_count <= 300) return 2;
    if (cell_count <= 450) return 5;
    return 8;
}

double cell_replacement_fraction(int cell_count, bool literal_percentages) {
    double f;
    if (cell_count <= 150) {
        f = 0.02;
    } else if (cell_count <= 300) {
        f = 0.05;
    } else if (cell_count <= 450) {
        f = 0.10;
    } else {
        f = 0.12;
    }
    return literal_percentages ? f / 100.0 : f;
}

PerturbedTable row_addition(const Table& table, const std::vector<Table>& donors,
                            std::uint64_t seed) {
    validate_table(table);
    std::vector<const Table*> compatible;
    for (const auto& d : donors) {
        if (&d != &table && d.n_cols() == table.n_cols()) compatible.push_back(&d);
    }
    if (compatible.empty()) {
        throw StructureError("row_addition: no donor with " + std::to_string(table.n_cols()) +
                             " columns");
    }
    Rng rng(seed);
    const int n = row_addition_count(table.cell_count());
    std::vector<std::vector<std::string>> block;
    for (int i = 0; i < n; ++i) {
        const Table* donor =
            compatible[static_cast<std::size_t>(rand_int(rng, 0, static_cast<int>(compatible.size()) - 1))];
        block.push_back(donor->rows[static_cast<std::size_t>(rand_int(rng, 0, donor->n_rows() - 1))]);
    }
    const int at = rand_int(rng, 0, table.n_rows());  // block goes before original row `at`

    PerturbedTable out;
    out.table.header = table.header;
    out.col_map = identity_map(table.n_cols());
    out.row_map.resize(static_cast<std::size_t>(table.n_rows()));
    for (int r = 0; r < table.n_rows(); ++r) {
        out.row_map[static_cast<std::size_t>(r)] = r < at ? r : r + n;
    }
    out.table.rows.reserve(table.rows.size() + block.size());
    out.table.rows.insert(out.table.rows.end(), table.rows.begin(), table.rows.begin() + at);
    out.table.rows.insert(out.table.rows.end(), block.begin(), block.end());
    out.table.rows.insert(out.table.rows.end(), table.rows.begin() + at, table.rows.end());
    validate_table(out.table);
    return out;
}

PerturbedTable row_permutation(const Table& table, std::uint64_t seed) {
    validate_table(table);
    Rng rng(seed);
    PerturbedTable out;
    out.col_map = identity_map(table.n_cols());
    std::vector<int> order = identity_map(table.n_rows());
    std::shuffle(order.begin(), order.end(), rng);
    out.table.header = table.header;
    out.table.rows.resize(table.rows.size());
    out.row_map.resize(table.rows.size());
    for (int dst = 0; dst < table.n_rows(); ++dst) {
        const int src = order[static_cast<std::size_t>(dst)];
        out.table.rows[static_cast<std::size_t>(dst)] = table.rows[static_cast<std::size_t>(src)];
        out.row_map[static_cast<std::size_t>(src)] = dst;
    }
    return out;
}

PerturbedTable column_permutation(const Table& table, std::uint64_t seed) {
    validate_table(table);
    Rng rng(seed);
    PerturbedTable out;
    out.row_map = identity_map(table.n_rows());
    std::vector<int> order = identity_map(table.n_cols());
    std::shuffle(order.begin(), order.end(), rng);
    out.table.header.resize(table.header.size());
    out.table.rows.assign(table.rows.size(),
                          std::vector<std::string>(table.header.size()));
    out.col_map.resize(table.header.size());
    for (int dst = 0; dst < table.n_cols(); ++dst) {
        const int src = order[static_cast<std::size_t>(dst)];
        out.col_map[static_cast<std::size_t>(src)] = dst;
        out.table.header[static_cast<std::size_t>(dst)] = table.header[static_cast<std::size_t>(src)];
        for (int r = 0; r < table.n_rows(); ++r) {
            out.table.rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(dst)] =
                table.rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(src)];
        }
    }
    return out;
}

PerturbedTable cell_replacement(const Table& table, const std::vector<Table>& donors,
                                std::uint64_t seed, bool literal_percentages) {
    validate_table(table);
    // Pool of donor cell contents (data cells only).
    std::vector<std::string> donor_cells;
    for (const auto& d : donors) {
        if (&d == &table) continue;
        for (const auto& row : d.rows) {
            donor_cells.insert(donor_cells.end(), row.begin(), row.end());
        }
    }
    if (donor_cells.empty()) throw StructureError("cell_replacement: empty donor pool");

    Rng rng(seed);
    const int m = table.cell_count();
    const double f = cell_replacement_fraction(m, literal_percentages);
    int k = std::max(1, static_cast<int>(std::lround(f * m)));
    const int data_cells = table.n_rows() * table.n_cols();
    k = std::min(k, data_cells);

    PerturbedTable out;
    out.table = table;
    out.row_map = identity_map(table.n_rows());
    out.col_map = identity_map(table.n_cols());

    std::vector<int> flat = identity_map(data_cells);
    std::shuffle(flat.begin(), flat.end(), rng);
    int replaced = 0;
    for (int idx : flat) {
        if (replaced == k) break;
        const int r = idx / table.n_cols();
        const int c = idx % table.n_cols();
        auto& cell = out.table.rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
        // Draw until the content actually changes so exactly k cells differ.
        std::string repl;
        bool found = false;
        for (int attempt = 0; attempt < 64; ++attempt) {
            repl = donor_cells[static_cast<std::size_t>(
                rand_int(rng, 0, static_cast<int>(donor_cells.size()) - 1))];
            if (repl != cell) {
                found = true;
                break;
            }
        }
        if (!found) continue;  // donor pool cannot change this cell; try another
        cell = repl;
        out.replaced.push_back(CellCoord{r + 1, c});
        ++replaced;
    }
    if (replaced < k) {
        throw StructureError("cell_replacement: donor pool too uniform to change " +
                             std::to_string(k) + " cells");
    }
    std::sort(out.replaced.begin(), out.replaced.end());
    return out;
}

PerturbedTable apply_perturbation(const Table& table, const PerturbationSpec& spec) {
    switch (spec.kind) {
        case PerturbationKind::RowAddition: return row_addition(table, spec.donors, spec.seed);
        case PerturbationKind::RowPermutation: return row_permutation(table, spec.seed);
        case PerturbationKind::ColumnPermutation: return column_permutation(table, spec.seed);
        case PerturbationKind::CellReplacement:
            return cell_replacement(table, spec.donors, spec.seed, spec.literal_percentages);
    }
    throw std::logic_error("unreachable perturbation kind");
}

std::vector<QAExample> perturb_dataset(const std::vector<QAExample>& dataset,
                                       const PerturbationSpec& spec) {
    std::vector<QAExample> out;
    out.reserve(dataset.size());
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        PerturbationSpec local = spec;
        local.seed = mix_seed(spec.seed, i);
        const auto perturbed = apply_perturbation(dataset[i].table, local);
        QAExample ex = dataset[i];
        ex.table = perturbed.table;
        for (auto& cell : ex.gold_cells) {
            if (cell.row > 0) cell.row = perturbed.row_map[static_cast<std::size_t>(cell.row - 1)] + 1;
            cell.col = perturbed.col_map[static_cast<std::size_t>(cell.col)];
        }
        std::sort(ex.gold_cells.begin(), ex.gold_cells.end());
        out.push_back(std::move(ex));
    }
    return out;
}

std::optional<double> relative_drop(double metric_clean, double metric_perturbed) {
    if (metric_clean == 0.0) return std::nullopt;
    return 100.0 * (metric_clean - metric_perturbed) / metric_clean;
}

}  // namespace tqa
