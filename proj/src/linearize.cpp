#include "tqa/linearize.hpp"

#include <algorithm>
#include <map>

namespace tqa {

namespace {

// Tags one flattened-table token stream. Walks the token strings in lockstep
// with the structure implied by the markers; the flattener is the only
// producer, so the walk is strict and throws on anything unexpected.
std::vector<TokenTag> tag_table_tokens(const std::vector<std::string>& words) {
    std::vector<TokenTag> tags(words.size());
    if (words.empty() || words[0] != kHeadMarker) {
        throw StructureError("flattened table must start with [HEAD]");
    }
    std::size_t i = 0;
    tags[i++] = TokenTag{TokenKind::Head, -1, -1};
    if (i >= words.size() || words[i] != ":") {
        throw StructureError("[HEAD] must be followed by ':'");
    }
    tags[i++] = TokenTag{TokenKind::Separator, -1, -1};

    int row = 0;  // header
    int col = 0;
    bool saw_cell_token = false;
    for (; i < words.size(); ++i) {
        const std::string& w = words[i];
        if (w == kRowMarker) {
            if (!saw_cell_token) throw StructureError("empty cell before [ROW]");
            if (i + 2 >= words.size() || words[i + 2] != ":") {
                throw StructureError("[ROW] must be followed by an index and ':'");
            }
            int idx = 0;
            try {
                idx = std::stoi(words[i + 1]);
            } catch (const std::exception&) {
                throw StructureError("non-numeric row index after [ROW]");
            }
            if (idx != row + 1) {
                throw StructureError("row indices must be consecutive and 1-based");
            }
            row = idx;
            col = 0;
            saw_cell_token = false;
            tags[i] = TokenTag{TokenKind::RowMarker, row, -1};
            tags[i + 1] = TokenTag{TokenKind::RowMarker, row, -1};
            tags[i + 2] = TokenTag{TokenKind::Separator, -1, -1};
            i += 2;
        } else if (w == kPipe) {
            if (!saw_cell_token) throw StructureError("empty cell before '|'");
            tags[i] = TokenTag{TokenKind::Separator, -1, -1};
            ++col;
            saw_cell_token = false;
        } else {
            tags[i] = TokenTag{TokenKind::Cell, row, col};
            saw_cell_token = true;
        }
    }
    if (!saw_cell_token) throw StructureError("flattened table ends without cell content");
    return tags;
}

}  // namespace

ModelInput tokenize_linearize(const Table& table, const std::string& question,
                              const Vocabulary& vocab, int* unk_count) {
    if (question.empty()) {
        throw StructureError("question must be non-empty");
    }
    ModelInput input;
    int unks = 0;
    auto encode_counting = [&](const std::vector<std::string>& words) {
        std::vector<int> ids;
        ids.reserve(words.size());
        for (const auto& w : words) {
            const int id = vocab.lookup(w);
            if (id == Vocabulary::kUnkId) ++unks;
            ids.push_back(id);
        }
        return ids;
    };

    const auto q_words = tokenize_words(question);
    input.tokens = encode_counting(q_words);
    input.question_len = input.tokens.size();

    LinearizedTable lin;
    lin.flat_text = flatten_table(table);
    const auto t_words = tokenize_words_with_spans(lin.flat_text, lin.char_spans);
    lin.tokens = encode_counting(t_words);
    lin.token_cell_map = tag_table_tokens(t_words);
    input.table = std::move(lin);

    input.tokens.insert(input.tokens.end(), input.table.tokens.begin(),
                        input.table.tokens.end());
    if (unk_count) *unk_count = unks;
    return input;
}

Table reconstruct_table(const LinearizedTable& lin) {
    if (lin.tokens.size() != lin.token_cell_map.size() ||
        lin.tokens.size() != lin.char_spans.size()) {
        throw StructureError("linearized table fields are misaligned");
    }
    // Gather the byte span covered by each cell, then cut the cell text out of
    // flat_text. Exact regardless of how the tokenizer split the content.
    std::map<CellCoord, TokenSpan> cell_spans;
    int max_row = -1;
    int max_col = -1;
    for (std::size_t p = 0; p < lin.token_cell_map.size(); ++p) {
        const TokenTag& tag = lin.token_cell_map[p];
        if (!tag.is_cell()) continue;
        max_row = std::max(max_row, tag.row);
        max_col = std::max(max_col, tag.col);
        auto [it, inserted] = cell_spans.emplace(tag.coord(), lin.char_spans[p]);
        if (!inserted) {
            it->second.begin = std::min(it->second.begin, lin.char_spans[p].begin);
            it->second.end = std::max(it->second.end, lin.char_spans[p].end);
        }
    }
    if (max_row < 1 || max_col < 0) {
        throw StructureError("linearized table has no data rows");
    }
    Table t;
    t.header.resize(static_cast<std::size_t>(max_col) + 1);
    t.rows.assign(static_cast<std::size_t>(max_row),
                  std::vector<std::string>(static_cast<std::size_t>(max_col) + 1));
    for (const auto& [coord, span] : cell_spans) {
        t.cell(coord) = lin.flat_text.substr(span.begin, span.end - span.begin);
    }
    // A missing (row, col) span means the marker walk skipped a cell.
    for (int r = 0; r <= max_row; ++r) {
        for (int c = 0; c <= max_col; ++c) {
            if (!cell_spans.count(CellCoord{r, c})) {
                throw StructureError("reconstruction is missing cell (" + std::to_string(r) +
                                     "," + std::to_string(c) + ")");
            }
        }
    }
    validate_table(t);
    return t;
}

}  // namespace tqa
