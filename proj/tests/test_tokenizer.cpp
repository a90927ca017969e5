#include <doctest.h>

#include <random>

#include "iconvec/dataset.h"
#include "iconvec/errors.h"
#include "iconvec/tokenizer.h"

using namespace iconvec;

TEST_SUITE("tokenizer") {

TEST_CASE("encode_command block layouts") {
    EncodedCommand m = encode_command(Command::move_to({0.25, 0.75}));
    CHECK(m.types == std::array<int16_t, 7>{kTokM, kArg, kArg, kPad, kPad, kPad, kPad});
    CHECK(m.args == std::array<double, 7>{-1, 0.25, 0.75, -1, -1, -1, -1});

    EncodedCommand c = encode_command(Command::cubic({.1, .2}, {.3, .4}, {.5, .6}));
    CHECK(c.types == std::array<int16_t, 7>{kTokC, kArg, kArg, kArg, kArg, kArg, kArg});
    CHECK(c.args == std::array<double, 7>{-1, .1, .2, .3, .4, .5, .6});

    EncodedCommand l = encode_command(Command::line_to({0, 0}));
    CHECK(l.types == std::array<int16_t, 7>{kTokL, kArg, kArg, kPad, kPad, kPad, kPad});
    CHECK(l.args == std::array<double, 7>{-1, 0, 0, -1, -1, -1, -1});
}

TEST_CASE("encode_script: slot layout, SOS/EOS placement, visibility") {
    SvgScript s;
    Path p;
    p.commands = {Command::move_to({0, 0}), Command::line_to({1, 1})};
    s.paths.push_back(p);
    TokenLimits limits;  // 8 paths, 32 commands, l_max 226
    TokenizedIcon icon = encode_script(s, limits);
    REQUIRE(icon.n_paths() == 8);
    CHECK(icon.visibility == std::vector<uint8_t>{1, 0, 0, 0, 0, 0, 0, 0});
    const TokenizedPath& tp = icon.paths[0];
    CHECK(tp.types[0] == kSOS);
    CHECK(tp.types[1] == kTokM);
    CHECK(tp.types[2] == kArg);
    CHECK(tp.types[3] == kArg);
    for (int k = 4; k <= 7; ++k) CHECK(tp.types[k] == kPad);
    CHECK(tp.types[8] == kTokL);
    CHECK(tp.types[15] == kEOS);
    for (int k = 16; k < limits.l_max(); ++k) CHECK(tp.types[k] == kPad);
    // Invisible slots are fully padded.
    for (int k = 0; k < limits.l_max(); ++k) {
        CHECK(icon.paths[1].types[k] == kPad);
        CHECK(icon.paths[1].args[k] == -1.0);
    }
}

TEST_CASE("encode_script: empty script and capacity errors") {
    TokenLimits limits;
    TokenizedIcon icon = encode_script(SvgScript{}, limits);
    CHECK(icon.visible_count() == 0);
    CHECK(decode_icon(icon).paths.empty());

    SvgScript nine;
    for (int i = 0; i < 9; ++i) nine.paths.push_back(Path{{Command::move_to({0, 0})}});
    CHECK_THROWS_AS(encode_script(nine, limits), CapacityError);

    SvgScript long_path;
    Path p;
    p.commands.push_back(Command::move_to({0, 0}));
    for (int i = 0; i < 32; ++i) p.commands.push_back(Command::line_to({0.5, 0.5}));
    long_path.paths.push_back(p);
    CHECK_THROWS_AS(encode_script(long_path, limits), CapacityError);
}

TEST_CASE("round trip over random synthetic icons is exact") {
    std::mt19937_64 rng(21);
    TokenLimits limits;
    for (int i = 0; i < 200; ++i) {
        SvgScript s = synth_icon(rng);
        TokenizedIcon icon = encode_script(s, limits);
        SvgScript back = decode_icon(icon);
        CHECK(back.same_geometry(s));
    }
}

TEST_CASE("positional exclusivity: T==ARG xor A==-1") {
    std::mt19937_64 rng(5);
    TokenLimits limits;
    for (int i = 0; i < 20; ++i) {
        TokenizedIcon icon = encode_script(synth_icon(rng), limits);
        for (const TokenizedPath& tp : icon.paths)
            for (size_t k = 0; k < tp.types.size(); ++k)
                CHECK(((tp.types[k] == kArg) ^ (tp.args[k] == -1.0)));
    }
}

TEST_CASE("strict decode rejects arity violations with positions") {
    TokenLimits limits;
    TokenizedIcon icon = encode_script(SvgScript{{Path{{Command::move_to({0, 0})}}}}, limits);
    // [SOS, M, ARG, EOS, ...]: second ARG of M replaced by EOS.
    TokenizedPath& tp = icon.paths[0];
    tp.types.assign(limits.l_max(), kPad);
    tp.args.assign(limits.l_max(), -1.0);
    tp.types[0] = kSOS;
    tp.types[1] = kTokM;
    tp.types[2] = kArg;
    tp.args[2] = 0.5;
    tp.types[3] = kEOS;
    try {
        decode_icon(icon);
        FAIL("expected DecodeError");
    } catch (const DecodeError& e) {
        CHECK(e.position == 3);
        CHECK(std::string(e.what()).find("expected ARG") != std::string::npos);
    }
}

TEST_CASE("strict decode rejects out-of-range arguments and junk after EOS") {
    TokenLimits limits;
    SvgScript s{{Path{{Command::move_to({0.5, 0.5}), Command::line_to({1, 1})}}}};
    TokenizedIcon good = encode_script(s, limits);

    TokenizedIcon bad = good;
    bad.paths[0].args[2] = 1.5;
    CHECK_THROWS_AS(decode_icon(bad), DecodeError);

    TokenizedIcon junk = good;
    junk.paths[0].types[30] = kTokL;  // after EOS
    CHECK_THROWS_AS(decode_icon(junk), DecodeError);

    TokenizedIcon no_eos = good;
    no_eos.paths[0].types[15] = kPad;
    CHECK_THROWS_AS(decode_icon(no_eos), DecodeError);

    TokenizedIcon vis = good;
    vis.visibility[3] = 0;
    vis.paths[3].types[0] = kSOS;  // invisible slot must stay fully padded
    CHECK_THROWS_AS(decode_icon(vis), DecodeError);
}

TEST_CASE("lenient decode clamps and truncates the trailing incomplete command") {
    TokenLimits limits;
    TokenizedIcon icon;
    icon.paths.assign(limits.n_paths, TokenizedPath::padded(limits.l_max()));
    icon.visibility.assign(limits.n_paths, 0);
    icon.visibility[0] = 1;
    TokenizedPath& tp = icon.paths[0];
    tp.types[0] = kSOS;
    tp.types[1] = kTokM;
    tp.types[2] = kArg;
    tp.args[2] = 0.5;
    tp.types[3] = kArg;
    tp.args[3] = 1.25;  // clamped to 1
    tp.types[4] = kTokC;
    tp.types[5] = kArg;
    tp.args[5] = 0.1;
    tp.types[6] = kArg;
    tp.args[6] = 0.2;
    tp.types[7] = kEOS;

    SvgScript out = decode_icon(icon, DecodeMode::lenient);
    REQUIRE(out.paths.size() == 1);
    REQUIRE(out.paths[0].commands.size() == 1);  // incomplete C dropped
    CHECK(out.paths[0].commands[0] == Command::move_to({0.5, 1.0}));

    CHECK_THROWS_AS(decode_icon(icon, DecodeMode::strict), DecodeError);
}

TEST_CASE("fuzz: random single-token mutations either error or round-trip identically") {
    std::mt19937_64 rng(99);
    TokenLimits limits;
    std::uniform_int_distribution<int> tok(-1, 5);
    int errors = 0, identical = 0;
    for (int iter = 0; iter < 400; ++iter) {
        TokenizedIcon icon = encode_script(synth_icon(rng), limits);
        int slot = std::uniform_int_distribution<int>(0, limits.n_paths - 1)(rng);
        int pos = std::uniform_int_distribution<int>(0, limits.l_max() - 1)(rng);
        int16_t mutated = static_cast<int16_t>(tok(rng));
        if (icon.paths[slot].types[pos] == mutated) continue;
        icon.paths[slot].types[pos] = mutated;
        if (mutated == kArg && icon.paths[slot].args[pos] == -1.0) icon.paths[slot].args[pos] = 0.5;
        if (mutated != kArg) icon.paths[slot].args[pos] = -1.0;
        if (mutated == kSOS && pos == 0 && slot < icon.visible_count()) continue;
        try {
            SvgScript back = decode_icon(icon);
            TokenizedIcon re = encode_script(back, limits);
            CHECK(re == icon);
            ++identical;
        } catch (const DecodeError&) {
            ++errors;
        }
    }
    CHECK(errors > 0);  // the fuzz actually exercises failures
}

TEST_CASE("quantize8 endpoints, rounding, and bound") {
    CHECK(quantize8(0.0) == 0);
    CHECK(quantize8(1.0) == 255);
    CHECK(quantize8(0.5) == 128);  // round half away from zero
    CHECK_THROWS_AS(quantize8(-0.1), RangeError);
    CHECK_THROWS_AS(quantize8(1.1), RangeError);
    CHECK_THROWS_AS(dequantize8(256), RangeError);
    for (int i = 0; i <= 1000; ++i) {
        double x = i / 1000.0;
        CHECK(std::abs(dequantize8(quantize8(x)) - x) <= 1.0 / 510.0 + 1e-12);
    }
}

}  // TEST_SUITE
