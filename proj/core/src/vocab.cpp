#include "plat/vocab.hpp"

#include <sstream>

#include "plat/errors.hpp"

namespace plat {

namespace {

const char* kWords[] = {
    "start", "begin", "with", "take", "the",  "number", "your",   "is",   "add",
    "subtract", "multiply", "divide", "it",   "by",     "then",   "next", "now",
    "after", "that", "what", "do",    "you",  "get",    "result", "find", "final",
    "value", "tell", "me",   "total",
};

}  // namespace

Vocab::Vocab() {
    auto push = [&](const std::string& t) {
        index_.emplace(t, static_cast<int>(tokens_.size()));
        tokens_.push_back(t);
    };
    push("<pad>");
    push("<eos>");
    push("<enc>");
    push("<plan>");
    push("<dec>");
    push("<step>");
    push("<ans>");
    specials_.pad = 0;
    specials_.eos = 1;
    specials_.enc = 2;
    specials_.plan = 3;
    specials_.dec = 4;
    specials_.step = 5;
    specials_.ans = 6;
    first_digit_ = static_cast<int>(tokens_.size());
    for (char c = '0'; c <= '9'; ++c) push(std::string(1, c));
    for (const char* op : {"+", "-", "*", "/", "="}) push(op);
    push(".");
    push("?");
    for (const char* w : kWords) push(w);
}

const Vocab& Vocab::standard() {
    static const Vocab v;
    return v;
}

const std::string& Vocab::token(int id) const {
    if (id < 0 || id >= size()) throw ContractError("token id out of range");
    return tokens_[static_cast<size_t>(id)];
}

int Vocab::id(const std::string& token) const {
    auto it = index_.find(token);
    if (it == index_.end()) throw ContractError("unknown token '" + token + "'");
    return it->second;
}

bool Vocab::has(const std::string& token) const { return index_.count(token) != 0; }

bool Vocab::is_special(int id) const { return id >= 0 && id < first_digit_; }

bool Vocab::is_digit(int id) const { return id >= first_digit_ && id < first_digit_ + 10; }

std::vector<int> Vocab::tokenize(const std::string& text) const {
    std::vector<int> out;
    std::istringstream in(text);
    std::string field;
    while (in >> field) {
        bool all_digits = !field.empty();
        for (char c : field) all_digits = all_digits && c >= '0' && c <= '9';
        if (all_digits && !has(field)) {
            for (char c : field) out.push_back(id(std::string(1, c)));
        } else {
            out.push_back(id(field));
        }
    }
    return out;
}

std::string Vocab::detokenize(const std::vector<int>& ids) const {
    std::string out;
    bool prev_digit = false;
    for (int t : ids) {
        const bool digit = is_digit(t);
        if (!out.empty() && !(digit && prev_digit)) out += ' ';
        out += token(t);
        prev_digit = digit;
    }
    return out;
}

}  // namespace plat
