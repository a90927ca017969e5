#include "iconvec/xml.h"

#include <cctype>

#include "iconvec/errors.h"

namespace iconvec::xml {

namespace {

struct Cursor {
    const std::string& s;
    size_t pos = 0;

    bool eof() const { return pos >= s.size(); }
    char peek() const { return pos < s.size() ? s[pos] : '\0'; }
    bool starts_with(const char* lit) const { return s.compare(pos, std::char_traits<char>::length(lit), lit) == 0; }

    void skip_ws() {
        while (!eof() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    }

    void expect(char c) {
        if (eof() || s[pos] != c)
            throw ParseError(std::string("xml: expected '") + c + "'", pos);
        ++pos;
    }

    void skip_until(const char* lit) {
        size_t at = s.find(lit, pos);
        if (at == std::string::npos) throw ParseError("xml: unterminated construct", pos);
        pos = at + std::char_traits<char>::length(lit);
    }
};

bool is_name_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == ':' || c == '.';
}

std::string read_name(Cursor& c) {
    size_t begin = c.pos;
    while (!c.eof() && is_name_char(c.peek())) ++c.pos;
    if (c.pos == begin) throw ParseError("xml: expected name", c.pos);
    return c.s.substr(begin, c.pos - begin);
}

std::string decode_entities(const std::string& raw, size_t base_offset) {
    std::string out;
    out.reserve(raw.size());
    for (size_t i = 0; i < raw.size(); ++i) {
        if (raw[i] != '&') {
            out.push_back(raw[i]);
            continue;
        }
        size_t semi = raw.find(';', i);
        if (semi == std::string::npos) throw ParseError("xml: unterminated entity", base_offset + i);
        std::string ent = raw.substr(i + 1, semi - i - 1);
        if (ent == "amp") out.push_back('&');
        else if (ent == "lt") out.push_back('<');
        else if (ent == "gt") out.push_back('>');
        else if (ent == "quot") out.push_back('"');
        else if (ent == "apos") out.push_back('\'');
        else if (!ent.empty() && ent[0] == '#') {
            int base = 10;
            size_t digits = 1;
            if (ent.size() > 1 && (ent[1] == 'x' || ent[1] == 'X')) {
                base = 16;
                digits = 2;
            }
            out.push_back(static_cast<char>(std::stoul(ent.substr(digits), nullptr, base)));
        } else {
            throw ParseError("xml: unknown entity '" + ent + "'", base_offset + i);
        }
        i = semi;
    }
    return out;
}

// Skips comments, processing instructions, DOCTYPE and CDATA. Returns false
// when the cursor is at something else.
bool skip_misc(Cursor& c) {
    if (c.starts_with("<!--")) {
        c.skip_until("-->");
        return true;
    }
    if (c.starts_with("<?")) {
        c.skip_until("?>");
        return true;
    }
    if (c.starts_with("<![CDATA[")) {
        c.skip_until("]]>");
        return true;
    }
    if (c.starts_with("<!")) {
        // DOCTYPE, possibly with an internal subset in brackets.
        int depth = 0;
        while (!c.eof()) {
            char ch = c.s[c.pos++];
            if (ch == '[') ++depth;
            else if (ch == ']') --depth;
            else if (ch == '>' && depth <= 0) return true;
        }
        throw ParseError("xml: unterminated <! construct", c.pos);
    }
    return false;
}

std::unique_ptr<Element> parse_element(Cursor& c) {
    c.expect('<');
    auto el = std::make_unique<Element>();
    el->name = read_name(c);
    for (;;) {
        c.skip_ws();
        if (c.eof()) throw ParseError("xml: unterminated start tag", c.pos);
        if (c.peek() == '/') {
            ++c.pos;
            c.expect('>');
            return el;
        }
        if (c.peek() == '>') {
            ++c.pos;
            break;
        }
        std::string key = read_name(c);
        c.skip_ws();
        c.expect('=');
        c.skip_ws();
        char quote = c.peek();
        if (quote != '"' && quote != '\'') throw ParseError("xml: expected quoted attribute", c.pos);
        ++c.pos;
        size_t begin = c.pos;
        size_t end = c.s.find(quote, begin);
        if (end == std::string::npos) throw ParseError("xml: unterminated attribute", begin);
        el->attrs[key] = decode_entities(c.s.substr(begin, end - begin), begin);
        c.pos = end + 1;
    }
    // Content until the matching end tag.
    for (;;) {
        size_t lt = c.s.find('<', c.pos);
        if (lt == std::string::npos) throw ParseError("xml: missing </" + el->name + ">", c.pos);
        c.pos = lt;
        if (c.starts_with("</")) {
            c.pos += 2;
            std::string name = read_name(c);
            if (name != el->name)
                throw ParseError("xml: mismatched </" + name + ">, expected </" + el->name + ">", lt);
            c.skip_ws();
            c.expect('>');
            return el;
        }
        if (skip_misc(c)) continue;
        el->children.push_back(parse_element(c));
    }
}

}  // namespace

std::unique_ptr<Element> parse(const std::string& text) {
    Cursor c{text};
    for (;;) {
        c.skip_ws();
        if (c.eof()) throw ParseError("xml: no root element", c.pos);
        if (skip_misc(c)) continue;
        if (c.peek() != '<') throw ParseError("xml: expected '<'", c.pos);
        break;
    }
    auto root = parse_element(c);
    c.skip_ws();
    while (!c.eof() && skip_misc(c)) c.skip_ws();
    if (!c.eof()) throw ParseError("xml: trailing content after root element", c.pos);
    return root;
}

}  // namespace iconvec::xml
