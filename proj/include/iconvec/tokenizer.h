#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "iconvec/geometry.h"

namespace iconvec {

// Discrete token types. Integer codes are frozen: the 6-way classifier head
// depends on a stable class order across checkpoints. Padding is -1 and
// lives outside the enum.
enum TokenType : int16_t {
    kSOS = 0,
    kEOS = 1,
    kTokM = 2,
    kTokL = 3,
    kTokC = 4,
    kArg = 5,
};
inline constexpr int16_t kPad = -1;
inline constexpr int kTokenTypes = 6;

// Per-command block width: 1 command token + 6 argument slots (the arity of
// CubicBezier). M/L blocks pad the unused 4 slots with -1.
inline constexpr int kCmdWidth = 7;

struct TokenLimits {
    int n_paths = 8;
    int n_cmds_max = 32;

    int l_max() const { return 2 + kCmdWidth * n_cmds_max; }
    bool operator==(const TokenLimits&) const = default;
};

// One padded (type, argument) sequence pair. args[k] is in [0,1] exactly
// when types[k] == kArg, and -1 otherwise.
struct TokenizedPath {
    std::vector<int16_t> types;
    std::vector<double> args;

    static TokenizedPath padded(int l_max) {
        return {std::vector<int16_t>(l_max, kPad), std::vector<double>(l_max, -1.0)};
    }
    bool operator==(const TokenizedPath&) const = default;
};

struct TokenizedIcon {
    std::vector<TokenizedPath> paths;  // exactly n_paths slots
    std::vector<uint8_t> visibility;   // 0/1 per slot; 0 => slot fully padded

    int n_paths() const { return static_cast<int>(paths.size()); }
    int visible_count() const;
    bool operator==(const TokenizedIcon&) const = default;
};

int command_arity(CmdKind kind);           // scalar argument count: 2 or 6
int16_t command_token(CmdKind kind);

// Fixed-width rows for one command, per the block layout above.
struct EncodedCommand {
    std::array<int16_t, kCmdWidth> types;
    std::array<double, kCmdWidth> args;
};
EncodedCommand encode_command(const Command& c);

// Paths occupy slots 0..n-1 in script order with visibility 1; remaining
// slots are fully padded with visibility 0. Throws CapacityError when the
// script exceeds the limits, naming the offending path.
TokenizedIcon encode_script(const SvgScript& script, const TokenLimits& limits);

// Inverse mapping. Strict mode enforces the full grammar (SOS first, exact
// arities, pads only between blocks, exactly one EOS followed by padding,
// arguments in [0,1], invisible slots fully padded) and throws DecodeError
// otherwise. Lenient mode clamps arguments to [0,1] and truncates at the
// first violation, keeping the complete commands parsed so far.
enum class DecodeMode { strict, lenient };
SvgScript decode_icon(const TokenizedIcon& icon, DecodeMode mode = DecodeMode::strict);

// 8-bit coordinate quantization used by the discrete-argument mode.
int quantize8(double x);                   // round(255*x), half away from zero
double dequantize8(int q);                 // q / 255

}  // namespace iconvec
