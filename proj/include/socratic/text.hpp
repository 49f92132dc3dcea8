#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace socratic {

// Case-folded word tokens. Punctuation separates tokens, except that a minus
// sign directly in front of a digit stays attached ("-1" is one token). With
// join_apostrophes, contractions stay whole ("what's" becomes "whats").
std::vector<std::string> tokenize(std::string_view text, bool join_apostrophes = false);

// True when needle occurs as a contiguous run of tokens in haystack.
bool contains_sequence(const std::vector<std::string>& haystack, const std::vector<std::string>& needle);

// A token made only of digits, with an optional leading minus.
bool is_number_token(std::string_view token);

class MissingPlaceholder : public std::runtime_error {
public:
    explicit MissingPlaceholder(const std::string& name)
        : std::runtime_error("no value for placeholder {" + name + "}"), name_(name)
    {
    }
    const std::string& name() const { return name_; }

private:
    std::string name_;
};

// Replaces each {name} slot. Unknown slots throw MissingPlaceholder. Braces
// that do not wrap a plain name are copied through.
std::string fill(std::string_view pattern, const std::map<std::string, std::string>& slots);

// Slot names used by a pattern, in order of first appearance.
std::vector<std::string> placeholders(std::string_view pattern);

std::string read_text_file(const std::string& path);

// Directory holding templates/, prompts/ and config/. SOCRATIC_RESOURCE_DIR
// in the environment wins over the compiled-in location.
std::string resource_dir();

} // namespace socratic
