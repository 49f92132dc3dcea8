#include "corpus.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace testing_support {

std::string read_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const std::vector<CorpusProgram>& corpus()
{
    static const std::vector<CorpusProgram> programs = [] {
        std::vector<CorpusProgram> out;
        for (const auto& entry : std::filesystem::directory_iterator(SOCRATIC_CORPUS_DIR)) {
            if (entry.path().extension() != ".mini")
                continue;
            out.push_back({entry.path().stem().string(), read_file(entry.path().string())});
        }
        std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
        return out;
    }();
    return programs;
}

const CorpusProgram& corpus_program(const std::string& stem)
{
    for (const auto& p : corpus())
        if (p.name == stem)
            return p;
    throw std::runtime_error("no corpus program " + stem);
}

std::map<std::string, reference::Arg> to_reference(const socratic::InputMap& inputs)
{
    std::map<std::string, reference::Arg> out;
    for (const auto& [name, v] : inputs) {
        reference::Arg a;
        if (const auto* s = std::get_if<std::int64_t>(&v)) {
            a.scalar = *s;
        } else {
            a.is_array = true;
            a.elems = std::get<std::vector<std::int64_t>>(v);
        }
        out[name] = a;
    }
    return out;
}

} // namespace testing_support
