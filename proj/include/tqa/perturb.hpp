#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tqa/synth.hpp"
#include "tqa/table.hpp"

namespace tqa {

enum class PerturbationKind { RowAddition, RowPermutation, ColumnPermutation, CellReplacement };

std::string perturbation_name(PerturbationKind kind);
PerturbationKind perturbation_from_name(const std::string& name);

struct PerturbationSpec {
    PerturbationKind kind = PerturbationKind::RowPermutation;
    std::uint64_t seed = 0;
    /// Donor tables for RowAddition / CellReplacement.
    std::vector<Table> donors;
    /// CellReplacement magnitude: the size-bucket percentages read as
    /// fractions (2%..12%, the default) or taken literally (0.02%..0.12%).
    bool literal_percentages = false;
};

/// A perturbed table plus the row/column index remapping needed to carry
/// cell coordinates (e.g. gold annotations) across the perturbation.
struct PerturbedTable {
    Table table;
    /// new data-row index (0-based) for each original data row.
    std::vector<int> row_map;
    /// new column index for each original column.
    std::vector<int> col_map;
    /// cells whose content was replaced (CellReplacement), new coordinates.
    std::vector<CellCoord> replaced;
};

/// Number of rows to insert for a table of m cells (header included):
/// 1 / 2 / 5 / 8 for m <= 150 / <= 300 / <= 450 / > 450.
int row_addition_count(int cell_count);

/// CellReplacement fraction for the same four buckets: 0.02 / 0.05 / 0.10 /
/// 0.12 (divided by 100 in literal mode).
double cell_replacement_fraction(int cell_count, bool literal_percentages);

/// Inserts row_addition_count(m) donor rows as one contiguous block at a
/// random position. Donors must share the table's column count; throws
/// StructureError when none does.
PerturbedTable row_addition(const Table& table, const std::vector<Table>& donors,
                            std::uint64_t seed);

PerturbedTable row_permutation(const Table& table, std::uint64_t seed);

/// Permutes columns; the header moves together with its column.
PerturbedTable column_permutation(const Table& table, std::uint64_t seed);

/// Replaces k = max(1, round(f*m)) distinct data cells (never header cells)
/// with content drawn from donor cells; each replacement differs from the
/// original content. k is clamped to the number of data cells.
PerturbedTable cell_replacement(const Table& table, const std::vector<Table>& donors,
                                std::uint64_t seed, bool literal_percentages = false);

PerturbedTable apply_perturbation(const Table& table, const PerturbationSpec& spec);

/// Applies the perturbation to every example in the dataset, remapping gold
/// cell coordinates. Per-example seeds derive from (spec.seed, index).
std::vector<QAExample> perturb_dataset(const std::vector<QAExample>& dataset,
                                       const PerturbationSpec& spec);

/// 100 * (clean - perturbed) / clean; nullopt when clean == 0.
std::optional<double> relative_drop(double metric_clean, double metric_perturbed);

}  // namespace tqa
