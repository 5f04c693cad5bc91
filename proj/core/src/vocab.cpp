#include "clipin/vocab.hpp"

#include <sstream>
#include <unordered_map>

#include "clipin/error.hpp"

namespace clipin {

const std::vector<std::string>& vocabulary() {
    static const std::vector<std::string> words = {
        // glue
        "a", "the", "to", "of", "at", "on", "in", "and", "is", "it", "its", "this", "with",
        ".", ",",
        // scene structure
        "background", "image", "scene", "shows", "contains", "object", "objects", "located",
        "row", "col", "cell", "corner", "center", "top", "bottom", "left", "right", "above",
        "below", "color", "size", "shape",
        // attributes
        "small", "large",
        "square", "circle", "triangle",
        "red", "blue", "green", "yellow", "purple", "orange", "white", "black",
        "0", "1", "2", "3",
        // edit verbs
        "recolor", "move", "resize", "add", "remove", "swap",
        // counts
        "one", "two", "three", "four",
    };
    return words;
}

namespace {

const std::unordered_map<std::string_view, int>& word_index() {
    static const auto* index = [] {
        auto* m = new std::unordered_map<std::string_view, int>;
        const auto& words = vocabulary();
        for (int i = 0; i < static_cast<int>(words.size()); ++i) m->emplace(words[static_cast<std::size_t>(i)], i);
        return m;
    }();
    return *index;
}

}  // namespace

int token_id(std::string_view word) {
    const auto& idx = word_index();
    const auto it = idx.find(word);
    if (it == idx.end()) throw ConfigError("unknown word: " + std::string(word));
    return it->second;
}

const std::string& token_word(int id) {
    const auto& words = vocabulary();
    if (id < 0 || id >= static_cast<int>(words.size()))
        throw ConfigError("token id out of range: " + std::to_string(id));
    return words[static_cast<std::size_t>(id)];
}

void TokenSequence::validate() const {
    if (ids.empty()) throw ConfigError("token sequence must be nonempty");
    for (int id : ids)
        if (id < 0 || id >= kVocabSize)
            throw ConfigError("token id out of range: " + std::to_string(id));
}

TokenSequence TokenSequence::truncated(int max_len) const {
    if (length() <= max_len) return *this;
    TokenSequence out;
    out.ids.assign(ids.begin(), ids.begin() + max_len);
    return out;
}

TokenSequence tokenize(std::string_view text) {
    TokenSequence seq;
    std::istringstream ss{std::string(text)};
    std::string word;
    while (ss >> word) seq.ids.push_back(token_id(word));
    seq.validate();
    return seq;
}

std::string detokenize(const TokenSequence& seq) {
    std::string out;
    for (std::size_t i = 0; i < seq.ids.size(); ++i) {
        if (i) out += ' ';
        out += token_word(seq.ids[i]);
    }
    return out;
}

}  // namespace clipin
