#include "tqa/table.hpp"

#include <nlohmann/json.hpp>

#include <sstream>

namespace tqa {

bool contains_reserved_marker(const std::string& text) {
    return text.find(kHeadMarker) != std::string::npos ||
           text.find(kRowMarker) != std::string::npos ||
           text.find(kPipe) != std::string::npos;
}

void validate_table(const Table& table) {
    if (table.header.empty()) {
        throw StructureError("table must have at least one column");
    }
    if (table.rows.empty()) {
        throw StructureError("table must have at least one data row");
    }
    const std::size_t n_cols = table.header.size();
    for (const auto& row : table.rows) {
        if (row.size() != n_cols) {
            throw StructureError("ragged table: row width " + std::to_string(row.size()) +
                                 " != column count " + std::to_string(n_cols));
        }
    }
    auto check_cell = [](const std::string& cell) {
        if (contains_reserved_marker(cell)) {
            throw StructureError("cell contains a reserved marker: \"" + cell + "\"");
        }
    };
    for (const auto& h : table.header) check_cell(h);
    for (const auto& row : table.rows) {
        for (const auto& c : row) check_cell(c);
    }
}

std::string flatten_table(const Table& table) {
    validate_table(table);
    std::ostringstream out;
    out << kHeadMarker << ":";
    for (int j = 0; j < table.n_cols(); ++j) {
        if (j > 0) out << " " << kPipe;
        out << " " << table.header[j];
    }
    for (int i = 0; i < table.n_rows(); ++i) {
        out << " " << kRowMarker << " " << (i + 1) << ":";
        for (int j = 0; j < table.n_cols(); ++j) {
            if (j > 0) out << " " << kPipe;
            out << " " << table.rows[i][j];
        }
    }
    return out.str();
}

std::string table_to_json(const Table& table) {
    nlohmann::json j;
    j["header"] = table.header;
    j["rows"] = table.rows;
    return j.dump();
}

Table table_from_json(const std::string& json_text) {
    nlohmann::json j = nlohmann::json::parse(json_text);
    Table t;
    t.header = j.at("header").get<std::vector<std::string>>();
    t.rows = j.at("rows").get<std::vector<std::vector<std::string>>>();
    validate_table(t);
    return t;
}

}  // namespace tqa
