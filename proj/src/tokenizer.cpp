#include "iconvec/tokenizer.h"

#include <cmath>
#include <string>

#include "iconvec/errors.h"

namespace iconvec {

int TokenizedIcon::visible_count() const {
    int n = 0;
    for (uint8_t v : visibility) n += v;
    return n;
}

int command_arity(CmdKind kind) { return kind == CmdKind::CubicBezier ? 6 : 2; }

int16_t command_token(CmdKind kind) {
    switch (kind) {
        case CmdKind::MoveTo: return kTokM;
        case CmdKind::LineTo: return kTokL;
        case CmdKind::CubicBezier: return kTokC;
    }
    return kPad;
}

EncodedCommand encode_command(const Command& c) {
    EncodedCommand e;
    e.types.fill(kPad);
    e.args.fill(-1.0);
    e.types[0] = command_token(c.kind);
    int arity = command_arity(c.kind);
    for (int k = 0; k < arity; ++k) {
        e.types[1 + k] = kArg;
        Vec2 p = c.p[k / 2];
        e.args[1 + k] = (k % 2 == 0) ? p.x : p.y;
    }
    return e;
}

TokenizedIcon encode_script(const SvgScript& script, const TokenLimits& limits) {
    int n = static_cast<int>(script.paths.size());
    if (n > limits.n_paths)
        throw CapacityError("encode: " + std::to_string(n) + " paths > limit " +
                            std::to_string(limits.n_paths));
    const int l_max = limits.l_max();
    TokenizedIcon icon;
    icon.paths.assign(limits.n_paths, TokenizedPath::padded(l_max));
    icon.visibility.assign(limits.n_paths, 0);

    for (int i = 0; i < n; ++i) {
        const Path& path = script.paths[i];
        int ncmds = static_cast<int>(path.commands.size());
        if (ncmds > limits.n_cmds_max)
            throw CapacityError("encode: path " + std::to_string(i) + " has " +
                                std::to_string(ncmds) + " commands > limit " +
                                std::to_string(limits.n_cmds_max));
        TokenizedPath& tp = icon.paths[i];
        tp.types[0] = kSOS;
        for (int j = 0; j < ncmds; ++j) {
            EncodedCommand e = encode_command(path.commands[j]);
            int base = 1 + j * kCmdWidth;
            for (int k = 0; k < kCmdWidth; ++k) {
                tp.types[base + k] = e.types[k];
                tp.args[base + k] = e.args[k];
            }
        }
        tp.types[1 + ncmds * kCmdWidth] = kEOS;
        icon.visibility[i] = 1;
    }
    return icon;
}

namespace {

Command command_from(int16_t token, const double* coords) {
    switch (token) {
        case kTokM: return Command::move_to({coords[0], coords[1]});
        case kTokL: return Command::line_to({coords[0], coords[1]});
        default:
            return Command::cubic({coords[0], coords[1]}, {coords[2], coords[3]},
                                  {coords[4], coords[5]});
    }
}

// Returns false (lenient) or throws (strict) on the first grammar violation.
bool decode_path(const TokenizedPath& tp, DecodeMode mode, Path& out) {
    const int l_max = static_cast<int>(tp.types.size());
    const bool strict = mode == DecodeMode::strict;
    auto fail = [&](const std::string& msg, int pos) -> bool {
        if (strict) throw DecodeError(msg, pos);
        return false;
    };

    int pos = 0;
    if (pos < l_max && tp.types[pos] == kSOS) {
        ++pos;
    } else if (strict) {
        throw DecodeError("expected SOS", pos);
    }
    bool saw_eos = false;
    while (pos < l_max) {
        int16_t tok = tp.types[pos];
        if (tok == kPad) {
            ++pos;
            continue;
        }
        if (tok == kEOS) {
            saw_eos = true;
            ++pos;
            break;
        }
        if (tok != kTokM && tok != kTokL && tok != kTokC)
            return fail(tok == kArg ? "unexpected ARG outside a command block"
                                    : "unexpected token " + std::to_string(tok),
                        pos);
        int arity = tok == kTokC ? 6 : 2;
        double coords[6];
        if (pos + arity >= l_max) return fail("command block exceeds sequence", pos);
        bool ok = true;
        for (int k = 0; k < arity; ++k) {
            int p = pos + 1 + k;
            if (tp.types[p] != kArg) {
                ok = fail("expected ARG", p);
                break;
            }
            double a = tp.args[p];
            if (a < 0.0 || a > 1.0) {
                if (strict) throw DecodeError("argument outside [0,1]", p);
                a = a < 0.0 ? 0.0 : 1.0;
            }
            coords[k] = a;
        }
        if (!ok) return false;  // lenient: truncate the incomplete command
        out.commands.push_back(command_from(tok, coords));
        pos += 1 + arity;
    }
    if (strict) {
        if (!saw_eos) throw DecodeError("missing EOS", l_max - 1);
        for (int p = pos; p < l_max; ++p)
            if (tp.types[p] != kPad) throw DecodeError("content after EOS", p);
    }
    return true;
}

}  // namespace

SvgScript decode_icon(const TokenizedIcon& icon, DecodeMode mode) {
    SvgScript script;
    for (int i = 0; i < icon.n_paths(); ++i) {
        const TokenizedPath& tp = icon.paths[i];
        if (!icon.visibility[i]) {
            if (mode == DecodeMode::strict) {
                for (int p = 0; p < static_cast<int>(tp.types.size()); ++p)
                    if (tp.types[p] != kPad)
                        throw DecodeError("invisible slot " + std::to_string(i) + " not fully padded", p);
            }
            continue;
        }
        Path path;
        decode_path(tp, mode, path);
        script.paths.push_back(std::move(path));
    }
    return script;
}

int quantize8(double x) {
    if (!(x >= 0.0 && x <= 1.0)) throw RangeError("quantize8: input outside [0,1]");
    return static_cast<int>(std::lround(255.0 * x));
}

double dequantize8(int q) {
    if (q < 0 || q > 255) throw RangeError("dequantize8: input outside [0,255]");
    return q / 255.0;
}

}  // namespace iconvec
