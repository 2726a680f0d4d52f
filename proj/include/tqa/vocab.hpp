#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace tqa {

/// Word-level tokenizer shared by the whole pipeline: splits on whitespace
/// and detaches the punctuation characters ':', ',', '?', '.' as their own
/// tokens. "[HEAD]", "[ROW]", "|" and "||" come out as atomic tokens because
/// they are whitespace-delimited in flattened tables. Hyphenated content such
/// as "38-12" stays one token.
std::vector<std::string> tokenize_words(const std::string& text);

/// Token span bookkeeping: [begin, end) byte offsets into the source string.
struct TokenSpan {
    std::size_t begin = 0;
    std::size_t end = 0;
};

/// tokenize_words plus the byte span of every token in the input.
std::vector<std::string> tokenize_words_with_spans(const std::string& text,
                                                   std::vector<TokenSpan>& spans);

/// Dense, stable token<->id mapping with reserved special tokens.
/// Ids are assigned in insertion order and never change afterwards.
class Vocabulary {
public:
    Vocabulary();

    static constexpr int kPadId = 0;
    static constexpr int kUnkId = 1;
    static constexpr int kBosId = 2;  // begin-of-answer
    static constexpr int kEosId = 3;  // end-of-answer

    int head_id() const { return head_id_; }
    int row_id() const { return row_id_; }
    int pipe_id() const { return pipe_id_; }
    int cell_delim_id() const { return cell_delim_id_; }

    /// Adds a token if absent; returns its id either way.
    int add(const std::string& token);

    /// Id of a known token, or kUnkId for unknown ones.
    int lookup(const std::string& token) const;

    /// True if the token has an id other than UNK.
    bool contains(const std::string& token) const;

    const std::string& token(int id) const;
    int size() const { return static_cast<int>(tokens_.size()); }

    std::vector<int> encode(const std::string& text) const;
    /// Space-joins the tokens for ids, skipping pad/bos/eos.
    std::string decode(const std::vector<int>& ids) const;

    /// FNV-1a hash over the ordered token list; used to pair checkpoints
    /// with the vocabulary they were trained on.
    std::uint64_t hash() const;

    std::string to_json() const;
    static Vocabulary from_json(const std::string& json_text);

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> ids_;
    int head_id_ = -1;
    int row_id_ = -1;
    int pipe_id_ = -1;
    int cell_delim_id_ = -1;
};

}  // namespace tqa
