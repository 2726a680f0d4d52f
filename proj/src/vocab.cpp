#include "tqa/vocab.hpp"

#include <nlohmann/json.hpp>

#include <cctype>
#include <stdexcept>

#include "tqa/table.hpp"

namespace tqa {

namespace {

bool is_detached_punct(char c) {
    // '|' is handled by whitespace splitting already; '-' deliberately stays
    // inside tokens so scores like "38-12" survive as one word.
    return c == ':' || c == ',' || c == '?' || c == '.';
}

}  // namespace

std::vector<std::string> tokenize_words_with_spans(const std::string& text,
                                                   std::vector<TokenSpan>& spans) {
    std::vector<std::string> out;
    spans.clear();
    std::size_t i = 0;
    const std::size_t n = text.size();
    while (i < n) {
        if (std::isspace(static_cast<unsigned char>(text[i]))) {
            ++i;
            continue;
        }
        if (is_detached_punct(text[i])) {
            out.push_back(std::string(1, text[i]));
            spans.push_back({i, i + 1});
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < n && !std::isspace(static_cast<unsigned char>(text[j])) &&
               !is_detached_punct(text[j])) {
            ++j;
        }
        out.push_back(text.substr(i, j - i));
        spans.push_back({i, j});
        i = j;
    }
    return out;
}

std::vector<std::string> tokenize_words(const std::string& text) {
    std::vector<TokenSpan> spans;
    return tokenize_words_with_spans(text, spans);
}

Vocabulary::Vocabulary() {
    add("<pad>");
    add("<unk>");
    add("<bos>");
    add("<eos>");
    head_id_ = add(kHeadMarker);
    row_id_ = add(kRowMarker);
    pipe_id_ = add(kPipe);
    cell_delim_id_ = add(kCellDelim);
}

int Vocabulary::add(const std::string& token) {
    auto it = ids_.find(token);
    if (it != ids_.end()) return it->second;
    const int id = static_cast<int>(tokens_.size());
    tokens_.push_back(token);
    ids_.emplace(token, id);
    return id;
}

int Vocabulary::lookup(const std::string& token) const {
    auto it = ids_.find(token);
    return it == ids_.end() ? kUnkId : it->second;
}

bool Vocabulary::contains(const std::string& token) const {
    return ids_.find(token) != ids_.end();
}

const std::string& Vocabulary::token(int id) const {
    if (id < 0 || id >= size()) {
        throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary of size " +
                                std::to_string(size()));
    }
    return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(const std::string& text) const {
    std::vector<int> ids;
    for (const auto& w : tokenize_words(text)) ids.push_back(lookup(w));
    return ids;
}

std::string Vocabulary::decode(const std::vector<int>& ids) const {
    std::string out;
    for (int id : ids) {
        if (id == kPadId || id == kBosId || id == kEosId) continue;
        if (!out.empty()) out += ' ';
        out += token(id);
    }
    return out;
}

std::uint64_t Vocabulary::hash() const {
    std::uint64_t h = 14695981039346656037ull;
    auto mix = [&h](unsigned char c) {
        h ^= c;
        h *= 1099511628211ull;
    };
    for (const auto& t : tokens_) {
        for (unsigned char c : t) mix(c);
        mix(0x1f);  // token separator so ["ab","c"] != ["a","bc"]
    }
    return h;
}

std::string Vocabulary::to_json() const {
    nlohmann::json j;
    j["schema"] = "tqa.vocab";
    j["version"] = 1;
    j["tokens"] = tokens_;
    return j.dump();
}

Vocabulary Vocabulary::from_json(const std::string& json_text) {
    nlohmann::json j = nlohmann::json::parse(json_text);
    if (j.value("schema", "") != "tqa.vocab") {
        throw StructureError("not a vocabulary file");
    }
    auto tokens = j.at("tokens").get<std::vector<std::string>>();
    Vocabulary v;
    if (tokens.size() < static_cast<std::size_t>(v.size())) {
        throw StructureError("vocabulary file missing special tokens");
    }
    for (int i = 0; i < v.size(); ++i) {
        if (tokens[static_cast<std::size_t>(i)] != v.token(i)) {
            throw StructureError("vocabulary special-token layout mismatch");
        }
    }
    for (std::size_t i = static_cast<std::size_t>(v.size()); i < tokens.size(); ++i) {
        v.add(tokens[i]);
    }
    return v;
}

}  // namespace tqa
