#include "tqa/highlight.hpp"

#include <algorithm>
#include <cctype>
#include <optional>
#include <set>

namespace tqa {

std::string normalize_whitespace(const std::string& s) {
    std::string out;
    bool in_space = true;  // trims leading space
    for (char c : s) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            in_space = true;
        } else {
            if (in_space && !out.empty()) out += ' ';
            out += c;
            in_space = false;
        }
    }
    return out;
}

namespace {

int find_column(const Table& table, const std::string& header) {
    for (int j = 0; j < table.n_cols(); ++j) {
        if (table.header[static_cast<std::size_t>(j)] == header) return j;
    }
    return -1;
}

bool numeric_value(const std::string& s, long& out) {
    if (s.empty()) return false;
    std::size_t i = s[0] == '-' ? 1 : 0;
    if (i >= s.size()) return false;
    for (; i < s.size(); ++i) {
        if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
    }
    out = std::stol(s);
    return true;
}

HighlightResult interpret(const Table& table, const Criteria& crit) {
    HighlightResult res;
    const int jc = find_column(table, crit.criteria_column);
    const int jt = crit.target_column.empty() ? -1 : find_column(table, crit.target_column);
    if (jc < 0 || (!crit.target_column.empty() && jt < 0)) {
        res.column_missing = true;
        return res;  // mirrors the model "missing" a referenced column
    }

    auto emit_row = [&](int data_row, std::initializer_list<int> cols) {
        // Within a row, emit in column order so output order is stable.
        std::vector<int> ordered(cols);
        std::sort(ordered.begin(), ordered.end());
        ordered.erase(std::unique(ordered.begin(), ordered.end()), ordered.end());
        for (int j : ordered) {
            res.highlighted_strings.push_back(
                table.rows[static_cast<std::size_t>(data_row)][static_cast<std::size_t>(j)]);
            res.matched_coords.push_back(CellCoord{data_row + 1, j});
        }
    };

    switch (crit.kind) {
        case TaskKind::Count:
            for (int r = 0; r < table.n_rows(); ++r) {
                if (table.rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(jc)] ==
                    crit.criteria_value) {
                    emit_row(r, {jc});
                }
            }
            break;
        case TaskKind::Lookup:
        case TaskKind::Sum:
            for (int r = 0; r < table.n_rows(); ++r) {
                if (table.rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(jc)] ==
                    crit.criteria_value) {
                    emit_row(r, {jc, jt});
                }
            }
            break;
        case TaskKind::ArgmaxLookup: {
            long best = 0;
            bool any = false;
            for (int r = 0; r < table.n_rows(); ++r) {
                long v;
                if (numeric_value(
                        table.rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(jc)], v)) {
                    if (!any || v > best) best = v;
                    any = true;
                }
            }
            if (!any) break;  // no numeric cell satisfies "highest value"
            for (int r = 0; r < table.n_rows(); ++r) {
                long v;
                if (numeric_value(
                        table.rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(jc)], v) &&
                    v == best) {
                    emit_row(r, {jc, jt});
                }
            }
            break;
        }
        case TaskKind::Comparison:
            for (int r = 0; r < table.n_rows(); ++r) {
                const auto& key = table.rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(jc)];
                if (key == crit.value_a || key == crit.value_b) {
                    emit_row(r, {jc, jt});
                }
            }
            break;
    }
    return res;
}

}  // namespace

HighlightResult highlight_cells(const Table& table, const std::string& statement) {
    validate_table(table);
    auto crit = parse_statement(statement);
    if (!crit) {
        HighlightResult res;
        res.column_missing = true;
        return res;
    }
    return interpret(table, *crit);
}

HighlightResult highlight_from_question(const Table& table, const std::string& question) {
    validate_table(table);
    auto crit = parse_question(question, table.header);
    if (!crit) {
        HighlightResult res;
        res.column_missing = true;
        return res;
    }
    return interpret(table, *crit);
}

std::vector<double> assign_cell_scores(const LinearizedTable& lin,
                                       const std::vector<std::string>& highlighted) {
    std::set<std::string> wanted;
    for (const auto& s : highlighted) wanted.insert(normalize_whitespace(s));

    std::vector<double> eta(lin.size(), 0.0);
    if (wanted.empty()) return eta;

    // Match whole cells, then mark every token of each matching cell so the
    // score never splits a cell.
    std::set<CellCoord> seen;
    std::set<CellCoord> matching;
    for (const auto& tag : lin.token_cell_map) {
        if (tag.is_cell() && tag.row > 0) seen.insert(tag.coord());
    }
    // Reassemble each data cell's content from its token spans.
    for (const auto& coord : seen) {
        std::size_t begin = std::string::npos;
        std::size_t end = 0;
        for (std::size_t p = 0; p < lin.token_cell_map.size(); ++p) {
            if (lin.token_cell_map[p].is_cell() && lin.token_cell_map[p].coord() == coord) {
                begin = std::min(begin, lin.char_spans[p].begin);
                end = std::max(end, lin.char_spans[p].end);
            }
        }
        const std::string content =
            normalize_whitespace(lin.flat_text.substr(begin, end - begin));
        if (wanted.count(content)) matching.insert(coord);
    }
    for (std::size_t p = 0; p < lin.token_cell_map.size(); ++p) {
        const auto& tag = lin.token_cell_map[p];
        if (tag.is_cell() && tag.row > 0 && matching.count(tag.coord())) eta[p] = 1.0;
    }
    return eta;
}

}  // namespace tqa
