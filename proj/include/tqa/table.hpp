#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace tqa {

/// Error for inputs that violate a structural contract (bad table shape,
/// reserved markers inside cells, malformed token streams).
class StructureError : public std::runtime_error {
public:
    explicit StructureError(const std::string& what) : std::runtime_error(what) {}
};

/// Error for invalid run/generator configurations.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

inline constexpr const char* kHeadMarker = "[HEAD]";
inline constexpr const char* kRowMarker = "[ROW]";
inline constexpr const char* kPipe = "|";
inline constexpr const char* kCellDelim = "||";

/// Coordinate of one cell. Row 0 is the header row, rows 1..n_rows are data
/// rows; col is the 0-based column index.
struct CellCoord {
    int row = 0;
    int col = 0;

    bool operator==(const CellCoord&) const = default;
    auto operator<=>(const CellCoord&) const = default;
};

/// Rectangular grid of cell strings with one header row.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int n_cols() const { return static_cast<int>(header.size()); }
    int n_rows() const { return static_cast<int>(rows.size()); }

    /// Total cell count including the header row: (n_rows+1) * n_cols.
    int cell_count() const { return (n_rows() + 1) * n_cols(); }

    const std::string& cell(const CellCoord& c) const {
        return c.row == 0 ? header.at(c.col) : rows.at(c.row - 1).at(c.col);
    }
    std::string& cell(const CellCoord& c) {
        return c.row == 0 ? header.at(c.col) : rows.at(c.row - 1).at(c.col);
    }

    bool operator==(const Table&) const = default;
};

/// Throws StructureError unless the table is rectangular, non-empty, and no
/// cell contains a reserved marker ("[HEAD]", "[ROW]", "|").
void validate_table(const Table& table);

/// True if the string contains any reserved marker substring.
bool contains_reserved_marker(const std::string& text);

/// Flattens a table into the marker string
///   "[HEAD]: h1 | h2 [ROW] 1: c11 | c12 [ROW] 2: ..."
/// Row indices after [ROW] are 1-based. Deterministic; throws StructureError
/// on invalid tables.
std::string flatten_table(const Table& table);

/// JSON round-trip for the on-disk table format {"header": [...], "rows": [[...]]}.
std::string table_to_json(const Table& table);
Table table_from_json(const std::string& json_text);

}  // namespace tqa
