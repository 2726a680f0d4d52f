#pragma once

#include <string>
#include <vector>

#include "tqa/linearize.hpp"
#include "tqa/synth.hpp"
#include "tqa/table.hpp"

namespace tqa {

/// Output of the statement-driven cell predictor: the highlighted cell
/// contents (joined conceptually by "||"), the coordinates they came from,
/// and the binary per-token score once assigned against a token stream.
struct HighlightResult {
    std::vector<std::string> highlighted_strings;
    std::vector<CellCoord> matched_coords;
    std::vector<double> eta_cell;  // filled by assign_cell_scores
    bool column_missing = false;   // statement referenced a column the table lacks
};

/// Interprets a parsing statement against the table and returns the contents
/// of every cell satisfying its criteria, in row order (cells of one row in
/// column order). A statement naming a column the table does not have yields
/// an empty result with column_missing set.
HighlightResult highlight_cells(const Table& table, const std::string& statement);

/// Same predicate semantics, driven by the raw question instead of the
/// parsing statement (the question-as-input ablation path).
HighlightResult highlight_from_question(const Table& table, const std::string& question);

/// Exact-match cell scoring: token p gets 1 iff its cell's full content
/// string-equals one of the highlighted strings (after whitespace
/// normalization); marker tokens and header cells get 0.
std::vector<double> assign_cell_scores(const LinearizedTable& lin,
                                       const std::vector<std::string>& highlighted);

/// Collapses runs of whitespace and trims; the normalization used before
/// exact matching.
std::string normalize_whitespace(const std::string& s);

}  // namespace tqa
