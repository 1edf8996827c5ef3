#pragma once

#include <set>
#include <string>
#include <vector>

namespace skrl {

// Fixed toy vocabulary. Ids are dense and stable; the layout below is the
// serialization contract for checkpoints and exported datasets.
namespace tok {
// digits 0..9 occupy ids 0..9
constexpr int DIGIT0 = 0;
constexpr int SUM = 10;
constexpr int PROD = 11;
constexpr int MAX = 12;
constexpr int CNT = 13;
constexpr int ROW = 14;
constexpr int COL = 15;
constexpr int IDX0 = 16; // IDX0..IDX3 are 16..19
constexpr int NUM_IDX = 4;
constexpr int BOS = 20;
constexpr int EOS = 21;
constexpr int PAD = 22;
constexpr int ANS = 23;
constexpr int THINK_OPEN = 24;
constexpr int THINK_CLOSE = 25;
constexpr int WAIT = 26;
constexpr int ALT = 27;
constexpr int HMM = 28;
constexpr int PLUS = 29;
constexpr int TIMES = 30;
constexpr int EQ = 31;
constexpr int VOCAB_SIZE = 32;
} // namespace tok

class Vocab {
  public:
    Vocab() = default;

    int size() const { return tok::VOCAB_SIZE; }

    static bool is_digit(int id) { return id >= 0 && id <= 9; }
    static int digit(int d) { return tok::DIGIT0 + d; }
    static int digit_value(int id) { return id - tok::DIGIT0; }
    static int idx(int i) { return tok::IDX0 + i; }

    static const std::string & name(int id);
    static int from_name(const std::string & s); // -1 when unknown

    // tokens that are neither structural nor think markers
    static bool is_structural(int id) {
        using namespace tok;
        return id == BOS || id == EOS || id == PAD || id == ANS || id == THINK_OPEN || id == THINK_CLOSE;
    }

    // the configurable "critical token lexicon"; defaults to the deliberative set
    static std::set<int> default_critical_lexicon() { return {tok::WAIT, tok::ALT, tok::HMM}; }

    static std::string decode(const std::vector<int> & ids, const char * sep = " ");
    static std::vector<int> encode(const std::string & text); // whitespace-separated names
};

// render the digit expansion of a nonnegative integer, most significant first
std::vector<int> digits_of(int value);

} // namespace skrl
