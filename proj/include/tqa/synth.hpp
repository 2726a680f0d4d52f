#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tqa/table.hpp"
#include "tqa/vocab.hpp"

namespace tqa {

enum class TaskKind { Lookup, Count, ArgmaxLookup, Comparison, Sum };

constexpr std::array<TaskKind, 5> kAllTaskKinds = {
    TaskKind::Lookup, TaskKind::Count, TaskKind::ArgmaxLookup, TaskKind::Comparison,
    TaskKind::Sum};

std::string task_kind_name(TaskKind kind);
TaskKind task_kind_from_name(const std::string& name);

/// Answer categorization: numeric vs non-numeric crossed with retrieval
/// (answer copied from one cell) vs aggregation.
struct AnswerType {
    bool numeric = false;
    bool retrieval = false;

    bool operator==(const AnswerType&) const = default;
};

struct QAExample {
    std::string id;
    Table table;
    std::string question;
    std::string answer;
    std::vector<CellCoord> gold_cells;  // sorted, unique
    std::string parsing_statement;
    AnswerType answer_type;
    TaskKind task_kind = TaskKind::Lookup;
};

/// Structured criteria behind a question / parsing statement: which column is
/// filtered on, the predicate value(s), and which column holds the answer.
/// Columns are referenced by header name.
struct Criteria {
    TaskKind kind = TaskKind::Lookup;
    std::string criteria_column;
    std::string criteria_value;  // Lookup/Count/Sum; empty for Argmax
    std::string target_column;   // empty for Count
    std::string value_a;         // Comparison only
    std::string value_b;
};

/// Value pool for one column type.
struct ColumnPool {
    std::string header;
    std::vector<std::string> values;
    bool numeric = false;
};

struct GeneratorConfig {
    int min_rows = 2;
    int max_rows = 8;
    int min_cols = 2;
    int max_cols = 4;
    /// Lower bound on the fraction of rows that must not match the criteria
    /// of count/sum tasks.
    double distractor_row_fraction = 0.5;
    /// Mixture weights in kAllTaskKinds order; normalized internally.
    std::array<double, 5> task_weights = {0.3, 0.25, 0.2, 0.15, 0.1};
    std::uint64_t seed = 7;

    /// Key column (distinct values identifying rows).
    ColumnPool key_pool;
    /// Categorical columns with small repeated value sets.
    std::vector<ColumnPool> category_pools;
    /// Numeric column headers; values are integers in [1, max_numeric_value].
    std::vector<std::string> numeric_headers;
    int max_numeric_value = 30;

    /// Defaults with all pools filled in.
    static GeneratorConfig defaults();

    /// Throws ConfigError when ranges are empty, weights degenerate, or the
    /// mixture requests a task the ranges cannot host (e.g. argmax with
    /// max_rows < 2, sum with max_cols < 3).
    void validate() const;
};

/// Deterministic synthetic dataset: n examples, byte-identical for one seed.
/// Sharding by index is safe; example i depends only on (seed, i).
std::vector<QAExample> generate_dataset(const GeneratorConfig& cfg, int n);

/// Template parsing statement naming the criteria columns/values of the
/// example's question, e.g.
///   "to find the answer, look at the column tv and count rows with value cbs".
std::string make_parsing_statement(const QAExample& example);

std::string statement_from_criteria(const Criteria& criteria);

/// Recovers the structured criteria from a question by template matching.
/// Header names are needed to split "column value" adjacencies.
std::optional<Criteria> parse_question(const std::string& question,
                                       const std::vector<std::string>& headers);

/// Recovers the structured criteria from a parsing statement. Returns
/// nullopt for text that matches no statement template.
std::optional<Criteria> parse_statement(const std::string& statement);

/// Six table-size bins by cell count (n_rows+1)*n_cols with upper-inclusive
/// edges {25, 50, 100, 200, 500}; bin 5 is everything above 500 cells.
int size_bin(const Table& table);
int size_bin_from_cells(int cell_count);

/// Vocabulary covering everything the generator can emit for this config:
/// pools, headers, question/statement words, and the integer range reachable
/// by count/sum answers. Stable for a fixed config.
Vocabulary vocabulary_for(const GeneratorConfig& cfg);

/// JSONL dataset I/O. First line is a schema header record; one example per
/// line after that.
std::string dataset_to_jsonl(const std::vector<QAExample>& examples);
std::vector<QAExample> dataset_from_jsonl(const std::string& text);
std::string example_to_json(const QAExample& ex);
QAExample example_from_json(const std::string& line);

}  // namespace tqa
