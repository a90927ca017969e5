#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

namespace iconvec::xml {

// Minimal XML element tree; enough for the SVG subset this pipeline reads.
// Text content, comments, processing instructions, DOCTYPE and CDATA are
// skipped; attribute entity references are decoded.
struct Element {
    std::string name;
    std::map<std::string, std::string> attrs;
    std::vector<std::unique_ptr<Element>> children;

    const std::string* attr(const std::string& key) const {
        auto it = attrs.find(key);
        return it == attrs.end() ? nullptr : &it->second;
    }
};

// Parses a full document and returns its root element. Throws ParseError
// (with byte offset) on malformed input.
std::unique_ptr<Element> parse(const std::string& text);

}  // namespace iconvec::xml
