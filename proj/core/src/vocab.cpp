#include "skrl/vocab.hpp"

#include <array>
#include <sstream>
#include <stdexcept>

namespace skrl {

static const std::array<std::string, tok::VOCAB_SIZE> k_names = {
    "0", "1", "2", "3", "4", "5", "6", "7", "8", "9",
    "SUM", "PROD", "MAX", "CNT", "ROW", "COL",
    "IDX0", "IDX1", "IDX2", "IDX3",
    "BOS", "EOS", "PAD", "ANS",
    "THINK_OPEN", "THINK_CLOSE",
    "WAIT", "ALT", "HMM",
    "PLUS", "TIMES", "EQ",
};

const std::string & Vocab::name(int id) {
    if (id < 0 || id >= tok::VOCAB_SIZE) {
        throw std::out_of_range("token id out of range: " + std::to_string(id));
    }
    return k_names[id];
}

int Vocab::from_name(const std::string & s) {
    for (int i = 0; i < tok::VOCAB_SIZE; ++i) {
        if (k_names[i] == s) {
            return i;
        }
    }
    return -1;
}

std::string Vocab::decode(const std::vector<int> & ids, const char * sep) {
    std::string out;
    for (size_t i = 0; i < ids.size(); ++i) {
        if (i) out += sep;
        out += name(ids[i]);
    }
    return out;
}

std::vector<int> Vocab::encode(const std::string & text) {
    std::vector<int> ids;
    std::istringstream ss(text);
    std::string w;
    while (ss >> w) {
        int id = from_name(w);
        if (id < 0) {
            throw std::invalid_argument("unknown token: " + w);
        }
        ids.push_back(id);
    }
    return ids;
}

std::vector<int> digits_of(int value) {
    if (value < 0) {
        throw std::invalid_argument("digits_of: negative value");
    }
    if (value == 0) {
        return {Vocab::digit(0)};
    }
    std::vector<int> out;
    while (value > 0) {
        out.insert(out.begin(), Vocab::digit(value % 10));
        value /= 10;
    }
    return out;
}

} // namespace skrl
