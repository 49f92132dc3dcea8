#include "socratic/text.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace socratic {

namespace {

bool word_char(char c)
{
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

} // namespace

std::vector<std::string> tokenize(std::string_view text, bool join_apostrophes)
{
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty() && cur != "-")
            out.push_back(cur);
        cur.clear();
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (word_char(c)) {
            cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        } else if (join_apostrophes && (c == '\'' || c == '`') && !cur.empty() && i + 1 < text.size() &&
                   std::isalpha(static_cast<unsigned char>(text[i + 1]))) {
            continue; // "what's" reads as one word
        } else if (c == '-' && cur.empty() && i + 1 < text.size() &&
                   std::isdigit(static_cast<unsigned char>(text[i + 1]))) {
            cur = "-";
        } else {
            flush();
        }
    }
    flush();
    return out;
}

bool contains_sequence(const std::vector<std::string>& haystack, const std::vector<std::string>& needle)
{
    if (needle.empty() || needle.size() > haystack.size())
        return false;
    for (std::size_t i = 0; i + needle.size() <= haystack.size(); ++i) {
        bool ok = true;
        for (std::size_t k = 0; k < needle.size() && ok; ++k)
            ok = haystack[i + k] == needle[k];
        if (ok)
            return true;
    }
    return false;
}

bool is_number_token(std::string_view token)
{
    if (!token.empty() && token[0] == '-')
        token.remove_prefix(1);
    if (token.empty())
        return false;
    for (char c : token)
        if (!std::isdigit(static_cast<unsigned char>(c)))
            return false;
    return true;
}

namespace {

bool slot_name(std::string_view s)
{
    if (s.empty() || std::isdigit(static_cast<unsigned char>(s[0])))
        return false;
    for (char c : s)
        if (!word_char(c))
            return false;
    return true;
}

// Calls on_text for literal runs and on_slot for each {name}; braces around
// anything that is not a plain name stay literal, so JSON examples survive.
template <typename Text, typename Slot>
void scan_pattern(std::string_view pattern, Text on_text, Slot on_slot)
{
    std::size_t i = 0;
    while (i < pattern.size()) {
        std::size_t open = pattern.find('{', i);
        if (open == std::string_view::npos) {
            on_text(pattern.substr(i));
            return;
        }
        std::size_t close = pattern.find_first_of("{}", open + 1);
        if (close == std::string_view::npos || pattern[close] != '}' ||
            !slot_name(pattern.substr(open + 1, close - open - 1))) {
            on_text(pattern.substr(i, open + 1 - i));
            i = open + 1;
            continue;
        }
        on_text(pattern.substr(i, open - i));
        on_slot(std::string(pattern.substr(open + 1, close - open - 1)));
        i = close + 1;
    }
}

} // namespace

std::string fill(std::string_view pattern, const std::map<std::string, std::string>& slots)
{
    std::string out;
    out.reserve(pattern.size());
    scan_pattern(
        pattern, [&](std::string_view t) { out.append(t); },
        [&](const std::string& name) {
            auto it = slots.find(name);
            if (it == slots.end())
                throw MissingPlaceholder(name);
            out += it->second;
        });
    return out;
}

std::vector<std::string> placeholders(std::string_view pattern)
{
    std::vector<std::string> names;
    scan_pattern(
        pattern, [](std::string_view) {},
        [&](const std::string& name) {
            if (std::find(names.begin(), names.end(), name) == names.end())
                names.push_back(name);
        });
    return names;
}

std::string read_text_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string resource_dir()
{
    if (const char* env = std::getenv("SOCRATIC_RESOURCE_DIR"); env && *env)
        return env;
    return SOCRATIC_RESOURCE_DIR;
}

} // namespace socratic
