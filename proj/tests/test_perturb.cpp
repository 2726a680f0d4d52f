#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>

#include "tqa/perturb.hpp"
#include "tqa/synth.hpp"
#include "tqa/table.hpp"

using namespace tqa;

namespace {

Table sized_table(int n_rows, int n_cols, const std::string& tag = "v") {
    Table t;
    for (int j = 0; j < n_cols; ++j) t.header.push_back("h" + std::to_string(j));
    for (int i = 0; i < n_rows; ++i) {
        std::vector<std::string> row;
        for (int j = 0; j < n_cols; ++j) {
            row.push_back(tag + std::to_string(i) + "-" + std::to_string(j));
        }
        t.rows.push_back(row);
    }
    return t;
}

std::multiset<std::vector<std::string>> row_multiset(const Table& t) {
    return {t.rows.begin(), t.rows.end()};
}

}  // namespace

TEST_CASE("row_addition magnitudes follow the cell-count thresholds") {
    CHECK(row_addition_count(150) == 1);
    CHECK(row_addition_count(151) == 2);
    CHECK(row_addition_count(300) == 2);
    CHECK(row_addition_count(301) == 5);
    CHECK(row_addition_count(450) == 5);
    CHECK(row_addition_count(451) == 8);
    CHECK(row_addition_count(6) == 1);
}

TEST_CASE("row_addition inserts donor rows and keeps the originals") {
    // 29 data rows x 5 cols -> 150 cells incl header -> n = 1
    Table t = sized_table(29, 5);
    CHECK(t.cell_count() == 150);
    Table donor = sized_table(4, 5, "d");
    const auto out = row_addition(t, {donor}, 99);
    CHECK(out.table.n_rows() == t.n_rows() + 1);
    // originals survive, in order, at the remapped positions
    for (int r = 0; r < t.n_rows(); ++r) {
        CHECK(out.table.rows[static_cast<std::size_t>(out.row_map[static_cast<std::size_t>(r)])] ==
              t.rows[static_cast<std::size_t>(r)]);
    }
    // m = 155 -> bucket 2 rows
    Table t2 = sized_table(30, 5);
    CHECK(row_addition(t2, {donor}, 1).table.n_rows() == t2.n_rows() + 2);
}

TEST_CASE("row_addition needs a donor with matching column count") {
    Table t = sized_table(3, 4);
    Table narrow = sized_table(3, 3);
    CHECK_THROWS_AS(row_addition(t, {narrow}, 0), StructureError);
    CHECK_THROWS_AS(row_addition(t, {}, 0), StructureError);
}

TEST_CASE("row and column permutations preserve the cell multiset") {
    Table t = sized_table(7, 4);
    const auto rp = row_permutation(t, 5);
    CHECK(row_multiset(rp.table) == row_multiset(t));
    CHECK(rp.table.header == t.header);

    const auto cp = column_permutation(t, 5);
    // header moves together with its column
    for (int src = 0; src < t.n_cols(); ++src) {
        const int dst = cp.col_map[static_cast<std::size_t>(src)];
        CHECK(cp.table.header[static_cast<std::size_t>(dst)] ==
              t.header[static_cast<std::size_t>(src)]);
        for (int r = 0; r < t.n_rows(); ++r) {
            CHECK(cp.table.rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(dst)] ==
                  t.rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(src)]);
        }
    }

    // single-row table is unchanged up to identity
    Table one = sized_table(1, 3);
    CHECK(row_permutation(one, 9).table == one);
}

TEST_CASE("permutations are deterministic under a seed") {
    Table t = sized_table(9, 3);
    CHECK(row_permutation(t, 42).table == row_permutation(t, 42).table);
    CHECK(column_permutation(t, 42).table == column_permutation(t, 42).table);
    const auto a = row_addition(t, {sized_table(5, 3, "d")}, 42).table;
    const auto b = row_addition(t, {sized_table(5, 3, "d")}, 42).table;
    CHECK(a == b);
}

TEST_CASE("cell_replacement fractions and counts") {
    CHECK(cell_replacement_fraction(150, false) == 0.02);
    CHECK(cell_replacement_fraction(151, false) == 0.05);
    CHECK(cell_replacement_fraction(301, false) == 0.10);
    CHECK(cell_replacement_fraction(451, false) == 0.12);
    CHECK(cell_replacement_fraction(100, true) == doctest::Approx(0.0002));

    // m=100 bucket-0 -> k = max(1, round(0.02*100)) = 2
    Table t = sized_table(19, 5);
    CHECK(t.cell_count() == 100);
    Table donor = sized_table(10, 5, "d");
    const auto out = cell_replacement(t, {donor}, 3);
    CHECK(out.replaced.size() == 2);

    // m=40 -> k=1 via the floor-of-one rule
    Table small = sized_table(7, 5);
    CHECK(small.cell_count() == 40);
    CHECK(cell_replacement(small, {donor}, 3).replaced.size() == 1);

    // literal mode: 0.02% of 100 cells rounds to zero, floor keeps one
    CHECK(cell_replacement(t, {donor}, 3, /*literal=*/true).replaced.size() == 1);
}

TEST_CASE("cell_replacement changes exactly k data cells") {
    std::mt19937_64 rng(2024);
    Table donor = sized_table(6, 4, "d");
    for (int trial = 0; trial < 50; ++trial) {
        const int rows = 2 + static_cast<int>(rng() % 30);
        Table t = sized_table(rows, 4);
        const int m = t.cell_count();
        const int k = std::min(
            std::max(1, static_cast<int>(std::lround(cell_replacement_fraction(m, false) * m))),
            rows * 4);
        const auto out = cell_replacement(t, {donor}, rng());
        CHECK(static_cast<int>(out.replaced.size()) == k);
        // diff oracle
        int diff = 0;
        for (int r = 0; r < t.n_rows(); ++r) {
            for (int c = 0; c < t.n_cols(); ++c) {
                if (t.rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] !=
                    out.table.rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)]) {
                    ++diff;
                }
            }
        }
        CHECK(diff == k);
        CHECK(out.table.header == t.header);  // header row never replaced
    }
}

TEST_CASE("perturb_dataset remaps gold cells") {
    auto cfg = GeneratorConfig::defaults();
    cfg.seed = 66;
    const auto data = generate_dataset(cfg, 40);

    PerturbationSpec spec;
    spec.kind = PerturbationKind::RowPermutation;
    spec.seed = 5;
    const auto rp = perturb_dataset(data, spec);
    for (std::size_t i = 0; i < data.size(); ++i) {
        REQUIRE(rp[i].gold_cells.size() == data[i].gold_cells.size());
        std::multiset<std::string> before, after;
        for (const auto& c : data[i].gold_cells) before.insert(data[i].table.cell(c));
        for (const auto& c : rp[i].gold_cells) after.insert(rp[i].table.cell(c));
        CHECK(before == after);
    }

    spec.kind = PerturbationKind::ColumnPermutation;
    const auto cp = perturb_dataset(data, spec);
    for (std::size_t i = 0; i < data.size(); ++i) {
        std::multiset<std::string> before, after;
        for (const auto& c : data[i].gold_cells) before.insert(data[i].table.cell(c));
        for (const auto& c : cp[i].gold_cells) after.insert(cp[i].table.cell(c));
        CHECK(before == after);
    }

    // RA keeps gold-cell content intact too
    spec.kind = PerturbationKind::RowAddition;
    std::vector<Table> donors;
    for (const auto& ex : data) donors.push_back(ex.table);
    spec.donors = donors;
    const auto ra = perturb_dataset(data, spec);
    for (std::size_t i = 0; i < data.size(); ++i) {
        std::multiset<std::string> before, after;
        for (const auto& c : data[i].gold_cells) before.insert(data[i].table.cell(c));
        for (const auto& c : ra[i].gold_cells) after.insert(ra[i].table.cell(c));
        CHECK(before == after);
    }
}

TEST_CASE("relative_drop formula and the zero-clean guard") {
    CHECK(relative_drop(50, 45) == doctest::Approx(10.0));
    CHECK(relative_drop(37.5, 37.5) == doctest::Approx(0.0));
    CHECK(!relative_drop(0, 5).has_value());
    CHECK(relative_drop(40, 44) == doctest::Approx(-10.0));  // improvements go negative
}

TEST_CASE("perturbation kind names round-trip") {
    for (auto kind : {PerturbationKind::RowAddition, PerturbationKind::RowPermutation,
                      PerturbationKind::ColumnPermutation, PerturbationKind::CellReplacement}) {
        CHECK(perturbation_from_name(perturbation_name(kind)) == kind);
    }
    CHECK_THROWS_AS(perturbation_from_name("xx"), ConfigError);
}
