#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace clipin {

inline constexpr int kVocabSize = 64;

// The fixed whitespace-tokenized vocabulary: scene attribute words, digits for
// grid coordinates, edit verbs, and glue words for caption templates.
const std::vector<std::string>& vocabulary();

int token_id(std::string_view word);          // throws ConfigError on unknown word
const std::string& token_word(int id);        // throws ConfigError on bad id

struct TokenSequence {
    std::vector<int> ids;

    int length() const { return static_cast<int>(ids.size()); }
    void validate() const;  // nonempty, every id within the vocabulary
    TokenSequence truncated(int max_len) const;  // keeps the first max_len tokens
};

TokenSequence tokenize(std::string_view text);
std::string detokenize(const TokenSequence& seq);

}  // namespace clipin
