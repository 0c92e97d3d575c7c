#pragma once

#include <string>
#include <vector>

namespace tntk {

// Ordered character set plus the reserved START/EOS/PAD indices. Decoder
// logits cover the characters and EOS; START exists only as a decoder input,
// PAD only as batch alignment.
class CharVocab {
  public:
    // digits + lowercase letters
    static CharVocab builtin();
    // one character (UTF-8) per line
    static CharVocab from_file(const std::string& path);

    explicit CharVocab(std::vector<std::string> tokens);

    int size() const { return static_cast<int>(tokens_.size()); }
    int eos_id() const { return size(); }
    int start_id() const { return size() + 1; }
    int pad_id() const { return size() + 2; }
    int logits_dim() const { return size() + 1; }      // characters + EOS
    int embedding_rows() const { return size() + 2; }  // characters + EOS + START

    // Case-folded encoding; throws DataError naming the offending character.
    std::vector<int> encode(const std::string& text) const;
    std::string decode(const std::vector<int>& ids) const;
    const std::string& token(int id) const;

  private:
    std::vector<std::string> tokens_;
};

}  // namespace tntk
