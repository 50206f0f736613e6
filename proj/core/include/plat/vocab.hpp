#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace plat {

// Ids of the delimiter/control tokens. All are members of the vocabulary.
struct SpecialTokens {
    int pad = 0;
    int eos = 0;
    int enc = 0;   // appended to the question; the encoder reads its hidden state
    int plan = 0;  // separates text context from latent inputs
    int dec = 0;   // start-of-decoding marker after the soft prefix
    int step = 0;  // start/end-of-step delimiter
    int ans = 0;   // start-of-answer delimiter
};

// Fixed synthetic vocabulary: control tokens, digits, operators, punctuation,
// and the word list used by the question templates. Numbers tokenize digit by
// digit; detokenize re-joins adjacent digits.
class Vocab {
public:
    static const Vocab& standard();

    int size() const { return static_cast<int>(tokens_.size()); }
    const SpecialTokens& specials() const { return specials_; }
    const std::string& token(int id) const;
    int id(const std::string& token) const;  // throws if unknown
    bool has(const std::string& token) const;
    bool is_special(int id) const;
    bool is_digit(int id) const;

    std::vector<int> tokenize(const std::string& text) const;
    std::string detokenize(const std::vector<int>& ids) const;

private:
    Vocab();
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
    SpecialTokens specials_;
    int first_digit_ = 0;
};

}  // namespace plat
