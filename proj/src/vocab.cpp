#include "tntk/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include "tntk/error.hpp"

namespace tntk {

namespace {

std::string fold(std::string s) {
    for (char& c : s)
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

}  // namespace

CharVocab::CharVocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    if (tokens_.empty()) throw DataError("vocabulary is empty");
    for (auto& t : tokens_) t = fold(t);
    std::vector<std::string> sorted = tokens_;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        throw DataError("vocabulary contains duplicate characters");
}

CharVocab CharVocab::builtin() {
    std::vector<std::string> toks;
    for (char c = '0'; c <= '9'; ++c) toks.emplace_back(1, c);
    for (char c = 'a'; c <= 'z'; ++c) toks.emplace_back(1, c);
    return CharVocab(std::move(toks));
}

CharVocab CharVocab::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open vocabulary file: " + path);
    std::vector<std::string> toks;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) toks.push_back(line);
    }
    return CharVocab(std::move(toks));
}

std::vector<int> CharVocab::encode(const std::string& text) const {
    const std::string folded = fold(text);
    std::vector<int> ids;
    std::size_t pos = 0;
    while (pos < folded.size()) {
        int match = -1;
        std::size_t match_len = 0;
        for (int i = 0; i < size(); ++i) {
            const std::string& t = tokens_[static_cast<std::size_t>(i)];
            if (t.size() > match_len && folded.compare(pos, t.size(), t) == 0) {
                match = i;
                match_len = t.size();
            }
        }
        if (match < 0)
            throw DataError("character '" + folded.substr(pos, 1) +
                            "' not in vocabulary (in \"" + text + "\")");
        ids.push_back(match);
        pos += match_len;
    }
    return ids;
}

std::string CharVocab::decode(const std::vector<int>& ids) const {
    std::string out;
    for (int id : ids) {
        if (id >= 0 && id < size()) out += tokens_[static_cast<std::size_t>(id)];
    }
    return out;
}

const std::string& CharVocab::token(int id) const {
    if (id < 0 || id >= size())
        throw DataError("token id " + std::to_string(id) + " out of range");
    return tokens_[static_cast<std::size_t>(id)];
}

}  // namespace tntk
