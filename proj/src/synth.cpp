#include "tqa/synth.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace tqa {

namespace {

// splitmix64; decouples per-example streams from the master seed so sharded
// generation stays deterministic.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

using Rng = std::mt19937_64;

int rand_int(Rng& rng, int lo, int hi) {  // inclusive range
    return std::uniform_int_distribution<int>(lo, hi)(rng);
}

template <typename T>
const T& pick(Rng& rng, const std::vector<T>& pool) {
    return pool[static_cast<std::size_t>(rand_int(rng, 0, static_cast<int>(pool.size()) - 1))];
}

bool is_integer(const std::string& s) {
    if (s.empty()) return false;
    for (char c : s) {
        if (!std::isdigit(static_cast<unsigned char>(c))) return false;
    }
    return true;
}

std::vector<std::string> default_key_values() {
    static const std::vector<std::string> bases = {
        "alice",   "bruno",   "carmen",  "dmitri",  "elena",    "farid",    "greta",
        "hiro",    "ingrid",  "jamal",   "keiko",   "liam",     "maria",    "nadia",
        "oscar",   "priya",   "quentin", "rosa",    "stefan",   "tara",     "umar",
        "vera",    "walter",  "ximena",  "yusuf",   "zofia",    "new york", "los angeles",
        "san juan", "novel",  "falcon",  "harbor",  "meadow",   "ember",    "cobalt",
        "juniper", "marble",  "onyx",    "prairie", "quartz"};
    std::vector<std::string> pool = bases;
    for (int suffix = 2; suffix <= 4; ++suffix) {
        for (const auto& b : bases) {
            if (b.find(' ') != std::string::npos) continue;  // keep suffixed keys one word
            pool.push_back(b + std::to_string(suffix));
        }
    }
    return pool;
}

struct ColumnSpec {
    enum class Type { Key, Category, Numeric } type;
    std::string header;
    const ColumnPool* pool = nullptr;  // Category only
};

std::string join_criteria_cols(const Criteria& c) {
    return c.criteria_column + "/" + c.target_column;
}

}  // namespace

std::string task_kind_name(TaskKind kind) {
    switch (kind) {
        case TaskKind::Lookup: return "lookup";
        case TaskKind::Count: return "count";
        case TaskKind::ArgmaxLookup: return "argmax-lookup";
        case TaskKind::Comparison: return "comparison";
        case TaskKind::Sum: return "sum";
    }
    throw std::logic_error("unreachable task kind");
}

TaskKind task_kind_from_name(const std::string& name) {
    for (TaskKind k : kAllTaskKinds) {
        if (task_kind_name(k) == name) return k;
    }
    throw ConfigError("unknown task kind: " + name);
}

GeneratorConfig GeneratorConfig::defaults() {
    GeneratorConfig cfg;
    cfg.key_pool.header = "name";
    cfg.key_pool.values = default_key_values();
    cfg.category_pools = {
        {"result", {"win", "loss", "draw"}, false},
        {"tv", {"cbs", "nbc", "abc", "fox"}, false},
        {"color", {"red", "blue", "green", "amber"}, false},
        {"grade", {"a", "b", "c"}, false},
        {"league", {"east", "west", "north", "south"}, false},
    };
    cfg.numeric_headers = {"score", "points", "wins", "goals", "caps"};
    return cfg;
}

void GeneratorConfig::validate() const {
    if (min_rows < 1 || min_rows > max_rows) throw ConfigError("empty row-count range");
    if (min_cols < 2 || min_cols > max_cols) throw ConfigError("column range must allow key + 1 column");
    if (distractor_row_fraction < 0.0 || distractor_row_fraction >= 1.0) {
        throw ConfigError("distractor_row_fraction must be in [0, 1)");
    }
    double total = 0;
    for (double w : task_weights) {
        if (w < 0) throw ConfigError("task weights must be non-negative");
        total += w;
    }
    if (total <= 0) throw ConfigError("task mixture weights sum to zero");
    auto weight = [&](TaskKind k) { return task_weights[static_cast<std::size_t>(k)]; };
    if ((weight(TaskKind::ArgmaxLookup) > 0 || weight(TaskKind::Comparison) > 0) && max_rows < 2) {
        throw ConfigError("argmax/comparison tasks need at least 2 rows");
    }
    if (weight(TaskKind::Sum) > 0 && max_cols < 3) {
        throw ConfigError("sum tasks need a category and a numeric column (max_cols >= 3)");
    }
    if (key_pool.values.size() < static_cast<std::size_t>(max_rows)) {
        throw ConfigError("key pool smaller than max_rows; keys must be distinct per row");
    }
    if (category_pools.empty() || numeric_headers.empty()) {
        throw ConfigError("category and numeric pools must be non-empty");
    }
    for (const auto& p : category_pools) {
        if (p.values.size() < 2) throw ConfigError("category pools need >= 2 values");
    }
    if (max_numeric_value < 2) throw ConfigError("max_numeric_value must be >= 2");
}

namespace {

TaskKind sample_task(Rng& rng, const GeneratorConfig& cfg) {
    double total = std::accumulate(cfg.task_weights.begin(), cfg.task_weights.end(), 0.0);
    double u = std::uniform_real_distribution<double>(0.0, total)(rng);
    for (std::size_t i = 0; i < kAllTaskKinds.size(); ++i) {
        u -= cfg.task_weights[i];
        if (u <= 0) return kAllTaskKinds[i];
    }
    return TaskKind::Lookup;
}

/// Builds the column layout for one example. Column 0 is always the key
/// column; the rest mixes category and numeric columns, with the types the
/// task needs guaranteed to be present.
std::vector<ColumnSpec> sample_columns(Rng& rng, const GeneratorConfig& cfg, TaskKind task,
                                       int n_cols) {
    std::vector<ColumnSpec> cols;
    cols.push_back({ColumnSpec::Type::Key, cfg.key_pool.header, nullptr});

    const bool needs_category = task == TaskKind::Count || task == TaskKind::Sum;
    const bool needs_numeric =
        task == TaskKind::ArgmaxLookup || task == TaskKind::Comparison || task == TaskKind::Sum;

    std::vector<const ColumnPool*> cat_remaining;
    for (const auto& p : cfg.category_pools) cat_remaining.push_back(&p);
    std::shuffle(cat_remaining.begin(), cat_remaining.end(), rng);
    std::vector<std::string> num_remaining = cfg.numeric_headers;
    std::shuffle(num_remaining.begin(), num_remaining.end(), rng);

    auto take_category = [&]() {
        const ColumnPool* p = cat_remaining.back();
        cat_remaining.pop_back();
        cols.push_back({ColumnSpec::Type::Category, p->header, p});
    };
    auto take_numeric = [&]() {
        cols.push_back({ColumnSpec::Type::Numeric, num_remaining.back(), nullptr});
        num_remaining.pop_back();
    };

    if (needs_category) take_category();
    if (needs_numeric) take_numeric();
    while (static_cast<int>(cols.size()) < n_cols) {
        const bool can_cat = !cat_remaining.empty();
        const bool can_num = !num_remaining.empty();
        if (can_cat && (!can_num || rand_int(rng, 0, 1) == 0)) {
            take_category();
        } else if (can_num) {
            take_numeric();
        } else {
            break;  // pools exhausted; table just ends up narrower
        }
    }
    // Keep the key column first, shuffle the rest so column order carries no signal.
    std::shuffle(cols.begin() + 1, cols.end(), rng);
    return cols;
}

std::vector<int> sample_distinct_rows(Rng& rng, int n_rows, int k) {
    std::vector<int> all(static_cast<std::size_t>(n_rows));
    std::iota(all.begin(), all.end(), 0);
    std::shuffle(all.begin(), all.end(), rng);
    all.resize(static_cast<std::size_t>(k));
    std::sort(all.begin(), all.end());
    return all;
}

}  // namespace

std::string statement_from_criteria(const Criteria& c) {
    switch (c.kind) {
        case TaskKind::Count:
            return "to find the answer, look at the column " + c.criteria_column +
                   " and count rows with value " + c.criteria_value;
        case TaskKind::Sum:
            return "to find the answer, look at the column " + c.target_column +
                   " and add the values in rows where the column " + c.criteria_column +
                   " has value " + c.criteria_value;
        case TaskKind::Lookup:
            return "to find the answer, look at the column " + c.target_column +
                   " in the row where the column " + c.criteria_column + " has value " +
                   c.criteria_value;
        case TaskKind::ArgmaxLookup:
            return "to find the answer, look at the column " + c.target_column +
                   " in the row where the column " + c.criteria_column + " has the highest value";
        case TaskKind::Comparison:
            return "to find the answer, compare the values of the column " + c.target_column +
                   " in the rows where the column " + c.criteria_column + " has value " +
                   c.value_a + " or value " + c.value_b;
    }
    throw std::logic_error("unreachable: " + join_criteria_cols(c));
}

namespace {

std::string question_from_criteria(const Criteria& c) {
    switch (c.kind) {
        case TaskKind::Lookup:
            return "what is the " + c.target_column + " of the row where " + c.criteria_column +
                   " is " + c.criteria_value + " ?";
        case TaskKind::Count:
            return "how many rows have " + c.criteria_column + " " + c.criteria_value + " ?";
        case TaskKind::ArgmaxLookup:
            return "which " + c.target_column + " has the highest " + c.criteria_column + " ?";
        case TaskKind::Comparison:
            return "which " + c.criteria_column + " has a higher " + c.target_column + " , " +
                   c.value_a + " or " + c.value_b + " ?";
        case TaskKind::Sum:
            return "what is the total " + c.target_column + " for rows with " +
                   c.criteria_column + " " + c.criteria_value + " ?";
    }
    throw std::logic_error("unreachable");
}

std::vector<std::string> template_words() {
    std::ostringstream all;
    Criteria c;
    c.criteria_column = "x";
    c.criteria_value = "x";
    c.target_column = "x";
    c.value_a = "x";
    c.value_b = "x";
    for (TaskKind k : kAllTaskKinds) {
        c.kind = k;
        all << question_from_criteria(c) << " " << statement_from_criteria(c) << " ";
    }
    return tokenize_words(all.str());
}

}  // namespace

std::vector<QAExample> generate_dataset(const GeneratorConfig& cfg, int n) {
    cfg.validate();
    if (n < 1) throw ConfigError("dataset size must be >= 1");

    std::vector<QAExample> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(i)));
        QAExample ex;
        char idbuf[16];
        std::snprintf(idbuf, sizeof(idbuf), "ex%06d", i);
        ex.id = idbuf;
        ex.task_kind = sample_task(rng, cfg);

        int min_rows = cfg.min_rows;
        if (ex.task_kind == TaskKind::ArgmaxLookup || ex.task_kind == TaskKind::Comparison) {
            min_rows = std::max(min_rows, 2);
        }
        const int n_rows = rand_int(rng, min_rows, cfg.max_rows);
        int min_cols = cfg.min_cols;
        if (ex.task_kind == TaskKind::Sum) min_cols = std::max(min_cols, 3);
        const int n_cols = rand_int(rng, min_cols, cfg.max_cols);

        const auto cols = sample_columns(rng, cfg, ex.task_kind, n_cols);

        // Fill the grid column by column.
        Table& t = ex.table;
        t.header.resize(cols.size());
        t.rows.assign(static_cast<std::size_t>(n_rows),
                      std::vector<std::string>(cols.size()));
        std::vector<std::string> keys = cfg.key_pool.values;
        std::shuffle(keys.begin(), keys.end(), rng);
        for (std::size_t j = 0; j < cols.size(); ++j) {
            t.header[j] = cols[j].header;
            for (int r = 0; r < n_rows; ++r) {
                switch (cols[j].type) {
                    case ColumnSpec::Type::Key:
                        t.rows[static_cast<std::size_t>(r)][j] = keys[static_cast<std::size_t>(r)];
                        break;
                    case ColumnSpec::Type::Category:
                        t.rows[static_cast<std::size_t>(r)][j] = pick(rng, cols[j].pool->values);
                        break;
                    case ColumnSpec::Type::Numeric:
                        t.rows[static_cast<std::size_t>(r)][j] =
                            std::to_string(rand_int(rng, 1, cfg.max_numeric_value));
                        break;
                }
            }
        }

        auto find_col = [&](ColumnSpec::Type type) {
            std::vector<int> idx;
            for (std::size_t j = 0; j < cols.size(); ++j) {
                if (cols[j].type == type) idx.push_back(static_cast<int>(j));
            }
            return idx;
        };

        Criteria crit;
        crit.kind = ex.task_kind;
        switch (ex.task_kind) {
            case TaskKind::Lookup: {
                const int r = rand_int(rng, 0, n_rows - 1);
                const int j = rand_int(rng, 1, static_cast<int>(cols.size()) - 1);
                crit.criteria_column = t.header[0];
                crit.criteria_value = t.rows[static_cast<std::size_t>(r)][0];
                crit.target_column = t.header[static_cast<std::size_t>(j)];
                ex.answer = t.rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(j)];
                ex.gold_cells = {CellCoord{r + 1, j}};
                break;
            }
            case TaskKind::Count: {
                const int j = pick(rng, find_col(ColumnSpec::Type::Category));
                const ColumnPool& pool = *cols[static_cast<std::size_t>(j)].pool;
                const std::string v = pick(rng, pool.values);
                const int max_match = std::max(
                    1, static_cast<int>((1.0 - cfg.distractor_row_fraction) * n_rows));
                const int m = rand_int(rng, 1, std::min({9, n_rows, max_match}));
                const auto match_rows = sample_distinct_rows(rng, n_rows, m);
                std::set<int> matched(match_rows.begin(), match_rows.end());
                for (int r = 0; r < n_rows; ++r) {
                    auto& cell = t.rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(j)];
                    if (matched.count(r)) {
                        cell = v;
                    } else if (cell == v) {
                        std::string alt = cell;
                        while (alt == v) alt = pick(rng, pool.values);
                        cell = alt;
                    }
                }
                crit.criteria_column = t.header[static_cast<std::size_t>(j)];
                crit.criteria_value = v;
                ex.answer = std::to_string(m);
                for (int r : match_rows) ex.gold_cells.push_back(CellCoord{r + 1, j});
                break;
            }
            case TaskKind::ArgmaxLookup: {
                const int j = pick(rng, find_col(ColumnSpec::Type::Numeric));
                // Force a unique maximum.
                int best = 0;
                int best_val = -1;
                for (int r = 0; r < n_rows; ++r) {
                    const int v = std::stoi(t.rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(j)]);
                    if (v > best_val) {
                        best_val = v;
                        best = r;
                    }
                }
                bool dup = false;
                for (int r = 0; r < n_rows; ++r) {
                    if (r != best &&
                        t.rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(j)] ==
                            std::to_string(best_val)) {
                        dup = true;
                    }
                }
                if (dup) {
                    t.rows[static_cast<std::size_t>(best)][static_cast<std::size_t>(j)] =
                        std::to_string(best_val + 1);
                }
                crit.criteria_column = t.header[static_cast<std::size_t>(j)];
                crit.target_column = t.header[0];
                ex.answer = t.rows[static_cast<std::size_t>(best)][0];
                ex.gold_cells = {CellCoord{best + 1, 0}, CellCoord{best + 1, j}};
                break;
            }
            case TaskKind::Comparison: {
                const int j = pick(rng, find_col(ColumnSpec::Type::Numeric));
                const auto rows = sample_distinct_rows(rng, n_rows, 2);
                auto& cell_a = t.rows[static_cast<std::size_t>(rows[0])][static_cast<std::size_t>(j)];
                auto& cell_b = t.rows[static_cast<std::size_t>(rows[1])][static_cast<std::size_t>(j)];
                if (cell_a == cell_b) {
                    const int v = std::stoi(cell_b);
                    cell_b = std::to_string(v < cfg.max_numeric_value ? v + 1 : v - 1);
                }
                crit.criteria_column = t.header[0];
                crit.target_column = t.header[static_cast<std::size_t>(j)];
                crit.value_a = t.rows[static_cast<std::size_t>(rows[0])][0];
                crit.value_b = t.rows[static_cast<std::size_t>(rows[1])][0];
                const bool a_wins = std::stoi(cell_a) > std::stoi(cell_b);
                ex.answer = a_wins ? crit.value_a : crit.value_b;
                ex.gold_cells = {CellCoord{rows[0] + 1, 0}, CellCoord{rows[0] + 1, j},
                                 CellCoord{rows[1] + 1, 0}, CellCoord{rows[1] + 1, j}};
                break;
            }
            case TaskKind::Sum: {
                const int jc = pick(rng, find_col(ColumnSpec::Type::Category));
                const int jn = pick(rng, find_col(ColumnSpec::Type::Numeric));
                const ColumnPool& pool = *cols[static_cast<std::size_t>(jc)].pool;
                const std::string v = pick(rng, pool.values);
                const int max_match = std::max(
                    1, static_cast<int>((1.0 - cfg.distractor_row_fraction) * n_rows));
                const int m = rand_int(rng, 1, std::min({9, n_rows, max_match}));
                const auto match_rows = sample_distinct_rows(rng, n_rows, m);
                std::set<int> matched(match_rows.begin(), match_rows.end());
                int total = 0;
                for (int r = 0; r < n_rows; ++r) {
                    auto& cell = t.rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(jc)];
                    if (matched.count(r)) {
                        cell = v;
                        total += std::stoi(
                            t.rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(jn)]);
                    } else if (cell == v) {
                        std::string alt = cell;
                        while (alt == v) alt = pick(rng, pool.values);
                        cell = alt;
                    }
                }
                crit.criteria_column = t.header[static_cast<std::size_t>(jc)];
                crit.criteria_value = v;
                crit.target_column = t.header[static_cast<std::size_t>(jn)];
                ex.answer = std::to_string(total);
                for (int r : match_rows) ex.gold_cells.push_back(CellCoord{r + 1, jn});
                break;
            }
        }

        std::sort(ex.gold_cells.begin(), ex.gold_cells.end());
        ex.question = question_from_criteria(crit);
        ex.parsing_statement = statement_from_criteria(crit);
        const bool retrieval =
            ex.task_kind == TaskKind::Lookup || ex.task_kind == TaskKind::ArgmaxLookup;
        ex.answer_type = AnswerType{is_integer(ex.answer), retrieval};
        out.push_back(std::move(ex));
    }
    return out;
}

std::string make_parsing_statement(const QAExample& example) {
    auto crit = parse_question(example.question, example.table.header);
    if (!crit) {
        throw StructureError("question does not match any template: " + example.question);
    }
    return statement_from_criteria(*crit);
}

namespace {

/// Splits "column-name value" by longest matching header prefix.
bool split_by_header(const std::string& text, const std::vector<std::string>& headers,
                     std::string& col, std::string& val) {
    std::size_t best = 0;
    for (const auto& h : headers) {
        if (text.size() > h.size() + 1 && text.compare(0, h.size(), h) == 0 &&
            text[h.size()] == ' ' && h.size() > best) {
            best = h.size();
            col = h;
        }
    }
    if (best == 0) return false;
    val = text.substr(best + 1);
    return !val.empty();
}

std::optional<std::string> between(const std::string& s, const std::string& left,
                                   const std::string& right) {
    const auto a = s.find(left);
    if (a == std::string::npos) return std::nullopt;
    const auto start = a + left.size();
    const auto b = s.find(right, start);
    if (b == std::string::npos) return std::nullopt;
    return s.substr(start, b - start);
}

std::string strip_suffix(const std::string& s, const std::string& suffix) {
    if (s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0) {
        return s.substr(0, s.size() - suffix.size());
    }
    return s;
}

}  // namespace

std::optional<Criteria> parse_question(const std::string& question,
                                       const std::vector<std::string>& headers) {
    Criteria c;
    if (question.rfind("how many rows have ", 0) == 0) {
        c.kind = TaskKind::Count;
        std::string rest = strip_suffix(question.substr(19), " ?");
        if (!split_by_header(rest, headers, c.criteria_column, c.criteria_value)) return std::nullopt;
        return c;
    }
    if (question.rfind("what is the total ", 0) == 0) {
        c.kind = TaskKind::Sum;
        auto target = between(question, "what is the total ", " for rows with ");
        if (!target) return std::nullopt;
        c.target_column = *target;
        const auto pos = question.find(" for rows with ");
        std::string rest = strip_suffix(question.substr(pos + 15), " ?");
        if (!split_by_header(rest, headers, c.criteria_column, c.criteria_value)) return std::nullopt;
        return c;
    }
    if (question.rfind("what is the ", 0) == 0) {
        c.kind = TaskKind::Lookup;
        auto target = between(question, "what is the ", " of the row where ");
        auto col = between(question, " of the row where ", " is ");
        if (!target || !col) return std::nullopt;
        c.target_column = *target;
        c.criteria_column = *col;
        const auto pos = question.find(" is ", question.find(" of the row where "));
        c.criteria_value = strip_suffix(question.substr(pos + 4), " ?");
        return c.criteria_value.empty() ? std::nullopt : std::optional<Criteria>(c);
    }
    if (question.find(" has the highest ") != std::string::npos) {
        c.kind = TaskKind::ArgmaxLookup;
        auto target = between(question, "which ", " has the highest ");
        if (!target) return std::nullopt;
        c.target_column = *target;
        const auto pos = question.find(" has the highest ");
        c.criteria_column = strip_suffix(question.substr(pos + 17), " ?");
        return c.criteria_column.empty() ? std::nullopt : std::optional<Criteria>(c);
    }
    if (question.find(" has a higher ") != std::string::npos) {
        c.kind = TaskKind::Comparison;
        auto col = between(question, "which ", " has a higher ");
        auto target = between(question, " has a higher ", " , ");
        auto va = between(question, " , ", " or ");
        if (!col || !target || !va) return std::nullopt;
        c.criteria_column = *col;
        c.target_column = *target;
        c.value_a = *va;
        const auto pos = question.find(" or ", question.find(" , "));
        c.value_b = strip_suffix(question.substr(pos + 4), " ?");
        return c.value_b.empty() ? std::nullopt : std::optional<Criteria>(c);
    }
    return std::nullopt;
}

std::optional<Criteria> parse_statement(const std::string& statement) {
    Criteria c;
    if (statement.find(" and count rows with value ") != std::string::npos) {
        c.kind = TaskKind::Count;
        auto col = between(statement, "look at the column ", " and count rows with value ");
        if (!col) return std::nullopt;
        c.criteria_column = *col;
        const auto pos = statement.find(" and count rows with value ");
        c.criteria_value = statement.substr(pos + 27);
        return c.criteria_value.empty() ? std::nullopt : std::optional<Criteria>(c);
    }
    if (statement.find(" and add the values in rows where the column ") != std::string::npos) {
        c.kind = TaskKind::Sum;
        auto target =
            between(statement, "look at the column ", " and add the values in rows where the column ");
        auto col = between(statement, " and add the values in rows where the column ", " has value ");
        if (!target || !col) return std::nullopt;
        c.target_column = *target;
        c.criteria_column = *col;
        const auto pos = statement.find(" has value ");
        c.criteria_value = statement.substr(pos + 11);
        return c.criteria_value.empty() ? std::nullopt : std::optional<Criteria>(c);
    }
    if (statement.find(" has the highest value") != std::string::npos) {
        c.kind = TaskKind::ArgmaxLookup;
        auto target = between(statement, "look at the column ", " in the row where the column ");
        auto col = between(statement, " in the row where the column ", " has the highest value");
        if (!target || !col) return std::nullopt;
        c.target_column = *target;
        c.criteria_column = *col;
        return c;
    }
    if (statement.find(" in the row where the column ") != std::string::npos) {
        c.kind = TaskKind::Lookup;
        auto target = between(statement, "look at the column ", " in the row where the column ");
        auto col = between(statement, " in the row where the column ", " has value ");
        if (!target || !col) return std::nullopt;
        c.target_column = *target;
        c.criteria_column = *col;
        const auto pos = statement.find(" has value ");
        c.criteria_value = statement.substr(pos + 11);
        return c.criteria_value.empty() ? std::nullopt : std::optional<Criteria>(c);
    }
    if (statement.find("compare the values of the column ") != std::string::npos) {
        c.kind = TaskKind::Comparison;
        auto target =
            between(statement, "compare the values of the column ", " in the rows where the column ");
        auto col = between(statement, " in the rows where the column ", " has value ");
        auto va = between(statement, " has value ", " or value ");
        if (!target || !col || !va) return std::nullopt;
        c.target_column = *target;
        c.criteria_column = *col;
        c.value_a = *va;
        const auto pos = statement.find(" or value ");
        c.value_b = statement.substr(pos + 10);
        return c.value_b.empty() ? std::nullopt : std::optional<Criteria>(c);
    }
    return std::nullopt;
}

int size_bin_from_cells(int cell_count) {
    static constexpr int kEdges[5] = {25, 50, 100, 200, 500};
    for (int b = 0; b < 5; ++b) {
        if (cell_count <= kEdges[b]) return b;
    }
    return 5;
}

int size_bin(const Table& table) {
    validate_table(table);
    return size_bin_from_cells(table.cell_count());
}

Vocabulary vocabulary_for(const GeneratorConfig& cfg) {
    cfg.validate();
    Vocabulary v;
    auto add_words = [&v](const std::string& text) {
        for (const auto& w : tokenize_words(text)) v.add(w);
    };
    add_words(cfg.key_pool.header);
    for (const auto& kv : cfg.key_pool.values) add_words(kv);
    for (const auto& p : cfg.category_pools) {
        add_words(p.header);
        for (const auto& val : p.values) add_words(val);
    }
    for (const auto& h : cfg.numeric_headers) add_words(h);
    // All integers a count/sum answer or numeric cell can reach. Sums touch at
    // most 9 rows, argmax bumps can exceed the cell cap by one.
    const int max_int = std::max(cfg.max_numeric_value + 1, 9 * cfg.max_numeric_value);
    for (int i = 0; i <= max_int; ++i) v.add(std::to_string(i));
    for (const auto& w : template_words()) v.add(w);
    return v;
}

std::string example_to_json(const QAExample& ex) {
    nlohmann::json j;
    j["id"] = ex.id;
    j["table"] = {{"header", ex.table.header}, {"rows", ex.table.rows}};
    j["question"] = ex.question;
    j["answer"] = ex.answer;
    std::vector<std::array<int, 2>> cells;
    for (const auto& c : ex.gold_cells) cells.push_back({c.row, c.col});
    j["gold_cells"] = cells;
    j["parsing_statement"] = ex.parsing_statement;
    j["answer_type"] = {ex.answer_type.numeric ? "numeric" : "non-numeric",
                        ex.answer_type.retrieval ? "retrieval" : "aggregation"};
    j["task_kind"] = task_kind_name(ex.task_kind);
    return j.dump();
}

QAExample example_from_json(const std::string& line) {
    nlohmann::json j = nlohmann::json::parse(line);
    QAExample ex;
    ex.id = j.at("id").get<std::string>();
    ex.table.header = j.at("table").at("header").get<std::vector<std::string>>();
    ex.table.rows = j.at("table").at("rows").get<std::vector<std::vector<std::string>>>();
    ex.question = j.at("question").get<std::string>();
    ex.answer = j.at("answer").get<std::string>();
    for (const auto& c : j.at("gold_cells")) {
        ex.gold_cells.push_back(CellCoord{c.at(0).get<int>(), c.at(1).get<int>()});
    }
    ex.parsing_statement = j.at("parsing_statement").get<std::string>();
    const auto type = j.at("answer_type").get<std::vector<std::string>>();
    ex.answer_type.numeric = type.at(0) == "numeric";
    ex.answer_type.retrieval = type.at(1) == "retrieval";
    ex.task_kind = task_kind_from_name(j.at("task_kind").get<std::string>());
    validate_table(ex.table);
    return ex;
}

std::string dataset_to_jsonl(const std::vector<QAExample>& examples) {
    nlohmann::json header;
    header["schema"] = "tqa.dataset";
    header["version"] = 1;
    header["count"] = examples.size();
    std::string out = header.dump();
    out += '\n';
    for (const auto& ex : examples) {
        out += example_to_json(ex);
        out += '\n';
    }
    return out;
}

std::vector<QAExample> dataset_from_jsonl(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw StructureError("empty dataset file");
    nlohmann::json header = nlohmann::json::parse(line);
    if (header.value("schema", "") != "tqa.dataset") {
        throw StructureError("missing tqa.dataset schema header record");
    }
    std::vector<QAExample> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        out.push_back(example_from_json(line));
    }
    return out;
}

}  // namespace tqa
