#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "tqa/table.hpp"
#include "tqa/vocab.hpp"

namespace tqa {

/// What a table-region token position stands for.
enum class TokenKind { Head, RowMarker, Separator, Cell };

struct TokenTag {
    TokenKind kind = TokenKind::Separator;
    /// Valid for Cell (row 0 = header) and RowMarker (1-based data row).
    int row = -1;
    /// Valid for Cell only.
    int col = -1;

    bool is_cell() const { return kind == TokenKind::Cell; }
    CellCoord coord() const { return CellCoord{row, col}; }
};

/// Token view of one flattened table: ids, a per-token tag mapping each
/// position to a cell coordinate or marker, the flattened string, and the
/// byte span of each token inside it.
struct LinearizedTable {
    std::vector<int> tokens;
    std::vector<TokenTag> token_cell_map;
    std::string flat_text;
    std::vector<TokenSpan> char_spans;

    std::size_t size() const { return tokens.size(); }
};

/// Question + table token stream fed to the models. Table-region positions
/// are [question_len, question_len + table.size()).
struct ModelInput {
    std::vector<int> tokens;      // question tokens followed by table tokens
    std::size_t question_len = 0;  // |Q_tokens|, the region boundary
    LinearizedTable table;

    std::size_t table_len() const { return table.size(); }
    std::size_t total_len() const { return tokens.size(); }
};

/// Flattens and tokenizes the table, prefixes the tokenized question, and
/// returns the combined stream with the question/table boundary exposed.
/// Unknown words map to UNK (counted in `unk_count` when given).
ModelInput tokenize_linearize(const Table& table, const std::string& question,
                              const Vocabulary& vocab, int* unk_count = nullptr);

/// Inverse of the table part of tokenize_linearize. Exact for any table the
/// flattener accepts; throws StructureError on malformed marker structure.
Table reconstruct_table(const LinearizedTable& lin);

}  // namespace tqa
