#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include "tqa/linearize.hpp"
#include "tqa/synth.hpp"
#include "tqa/table.hpp"
#include "tqa/vocab.hpp"

using namespace tqa;

namespace {

Vocabulary test_vocab() { return vocabulary_for(GeneratorConfig::defaults()); }

// Independent random-table maker for round-trip properties; deliberately not
// the synth generator.
Table random_table(std::mt19937_64& rng) {
    static const std::vector<std::string> words = {"ab",   "cd",  "x9",    "blue", "7",
                                                   "12-4", "nyc", "a.b",   "q,r",  "08",
                                                   "zz",   "me",  "uv wx", "t:u"};
    std::uniform_int_distribution<int> rows(1, 6), cols(1, 5), pick(0, static_cast<int>(words.size()) - 1);
    Table t;
    const int nc = cols(rng);
    for (int j = 0; j < nc; ++j) t.header.push_back(words[static_cast<std::size_t>(pick(rng))]);
    const int nr = rows(rng);
    for (int i = 0; i < nr; ++i) {
        std::vector<std::string> row;
        for (int j = 0; j < nc; ++j) row.push_back(words[static_cast<std::size_t>(pick(rng))]);
        t.rows.push_back(row);
    }
    return t;
}

}  // namespace

TEST_CASE("flatten_table matches the marker format") {
    Table t{{"year", "score"}, {{"2006", "38-12"}}};
    CHECK(flatten_table(t) == "[HEAD]: year | score [ROW] 1: 2006 | 38-12");

    Table one{{"a"}, {{"x"}}};
    CHECK(flatten_table(one) == "[HEAD]: a [ROW] 1: x");
}

TEST_CASE("flatten_table separator count follows (Ncol-1)*(Nrow+1)") {
    Table t{{"h1", "h2", "h3"}, {{"a", "b", "c"}, {"d", "e", "f"}}};
    const std::string flat = flatten_table(t);
    // brute-force string scan
    const long pipes = std::count(flat.begin(), flat.end(), '|');
    CHECK(pipes == (3 - 1) * (2 + 1));
    CHECK(pipes == 6);
}

TEST_CASE("flatten_table rejects reserved markers inside cells") {
    CHECK_THROWS_AS(flatten_table(Table{{"a|b"}, {{"x"}}}), StructureError);
    CHECK_THROWS_AS(flatten_table(Table{{"a"}, {{"has [ROW] inside"}}}), StructureError);
    CHECK_THROWS_AS(flatten_table(Table{{"[HEAD]er"}, {{"x"}}}), StructureError);
    CHECK_THROWS_AS(flatten_table(Table{{"a"}, {{"x", "y"}}}), StructureError);  // ragged
    CHECK_THROWS_AS(flatten_table(Table{{"a"}, {}}), StructureError);            // no rows
}

TEST_CASE("tokenize_linearize exposes the question boundary") {
    const auto vocab = test_vocab();
    Table t{{"name"}, {{"alice"}}};
    auto in = tokenize_linearize(t, "who won ?", vocab);
    CHECK(in.question_len == tokenize_words("who won ?").size());
    CHECK(in.question_len == 3);
    CHECK(in.total_len() == in.question_len + in.table.size());
    // marker floor: a 1x1 table still carries [HEAD] : h [ROW] 1 : c
    CHECK(in.table.size() >= 5);
    CHECK(in.table.size() == 7);
}

TEST_CASE("tokenize_linearize rejects empty questions and counts UNKs") {
    const auto vocab = test_vocab();
    Table t{{"name"}, {{"alice"}}};
    CHECK_THROWS_AS(tokenize_linearize(t, "", vocab), StructureError);
    int unks = -1;
    tokenize_linearize(t, "qqqzzz unknownword ?", vocab, &unks);
    CHECK(unks == 2);
}

TEST_CASE("token_cell_map partitions the table region") {
    const auto vocab = test_vocab();
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const Table t = random_table(rng);
        auto in = tokenize_linearize(t, "q ?", vocab);
        REQUIRE(in.table.token_cell_map.size() == in.table.size());
        std::set<CellCoord> seen;
        for (const auto& tag : in.table.token_cell_map) {
            if (tag.is_cell()) {
                CHECK(tag.row >= 0);
                CHECK(tag.row <= t.n_rows());
                CHECK(tag.col >= 0);
                CHECK(tag.col < t.n_cols());
                seen.insert(tag.coord());
            }
        }
        // every cell owns at least one token
        CHECK(static_cast<int>(seen.size()) == (t.n_rows() + 1) * t.n_cols());
    }
}

TEST_CASE("round-trip: reconstruct_table inverts tokenize_linearize") {
    const auto vocab = test_vocab();
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        const Table t = random_table(rng);
        auto in = tokenize_linearize(t, "does it round trip ?", vocab);
        CHECK(reconstruct_table(in.table) == t);
        // tokenizing flat_text again reproduces the token ids exactly
        CHECK(vocab.encode(in.table.flat_text) == in.table.tokens);
    }
}

TEST_CASE("flattening is injective on distinct random tables") {
    std::mt19937_64 rng(23);
    std::vector<Table> tables;
    for (int i = 0; i < 60; ++i) tables.push_back(random_table(rng));
    for (std::size_t i = 0; i < tables.size(); ++i) {
        for (std::size_t j = i + 1; j < tables.size(); ++j) {
            if (!(tables[i] == tables[j])) {
                CHECK(flatten_table(tables[i]) != flatten_table(tables[j]));
            }
        }
    }
}

TEST_CASE("reconstruct_table rejects malformed marker structure") {
    const auto vocab = test_vocab();
    Table t{{"a", "b"}, {{"x", "y"}}};
    auto in = tokenize_linearize(t, "q ?", vocab);
    LinearizedTable broken = in.table;
    broken.token_cell_map.pop_back();
    CHECK_THROWS_AS(reconstruct_table(broken), StructureError);
}

TEST_CASE("table JSON round-trips") {
    Table t{{"name", "score"}, {{"alice", "3"}, {"bruno", "9"}}};
    CHECK(table_from_json(table_to_json(t)) == t);
    CHECK_THROWS_AS(table_from_json(R"({"header":["a"],"rows":[["x","y"]]})"), StructureError);
}

TEST_CASE("vocabulary ids are dense, stable and serializable") {
    Vocabulary v;
    const int a = v.add("alpha");
    const int b = v.add("beta");
    CHECK(b == a + 1);
    CHECK(v.add("alpha") == a);  // idempotent
    CHECK(v.lookup("alpha") == a);
    CHECK(v.lookup("nope") == Vocabulary::kUnkId);

    const auto json = v.to_json();
    Vocabulary w = Vocabulary::from_json(json);
    CHECK(w.size() == v.size());
    CHECK(w.hash() == v.hash());
    CHECK(w.lookup("beta") == b);

    w.add("gamma");
    CHECK(w.hash() != v.hash());
}

TEST_CASE("vocabulary decode skips pad/bos/eos") {
    Vocabulary v;
    const int a = v.add("alpha");
    std::vector<int> ids = {Vocabulary::kBosId, a, Vocabulary::kEosId, Vocabulary::kPadId};
    CHECK(v.decode(ids) == "alpha");
}
