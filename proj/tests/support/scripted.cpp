#include "scripted.hpp"

#include <atomic>
#include <filesystem>
#include <random>

using namespace socratic;

namespace testing_support {

std::optional<std::string> explanation_in_band(const ReferenceReason& reference, Band band)
{
    auto in_band = [&](int s) {
        switch (band) {
        case Band::LOW: return s < 40;
        case Band::MID: return s >= 40 && s < 75;
        case Band::HIGH: return s >= 75;
        }
        return false;
    };
    std::size_t n = reference.atoms.size();
    // full sets first for HIGH, small ones first otherwise
    std::vector<unsigned> masks;
    for (unsigned m = 0; m < (1u << n); ++m)
        masks.push_back(m);
    if (band == Band::HIGH)
        std::reverse(masks.begin(), masks.end());
    for (unsigned m : masks) {
        std::string text = "In the program";
        for (std::size_t i = 0; i < n; ++i)
            if (m & (1u << i))
                text += " " + reference.atoms[i].text_form + " ,";
        text += " that is my reasoning about the code.";
        if (in_band(verify_explanation(reference, text, true, 0).similarity))
            return text;
    }
    return std::nullopt;
}

int correct_choice(const Question& q)
{
    return q.correct_index;
}

int wrong_choice(const Question& q)
{
    return (q.correct_index + 1) % static_cast<int>(q.options.size());
}

AssignmentConfig sum_assignment()
{
    AssignmentConfig c;
    c.assignment_id = "sum-below-n";
    c.title = "Sum of 0..n-1";
    c.tests = {{"n3", {{"n", 3}}, "3"}};
    c.input_domains = {{"n", {1, 6}}};
    c.sample_seed = 5;
    c.question_budget = 3;
    return c;
}

Session run_to_completion(Engine& engine, const std::string& session_id)
{
    Session s = engine.session(session_id);
    for (int guard = 0; guard < 200 && !is_terminal(s.state); ++guard) {
        if (s.state == SessionState::TIER1_PENDING) {
            s = engine.submit_tier1(session_id, s.current->question.question_id, correct_choice(s.current->question))
                    .session;
        } else {
            auto text = explanation_in_band(s.current->reference, Band::HIGH);
            s = engine.submit_tier2(session_id, text.value_or("the program loop")).session;
        }
    }
    return s;
}

std::string temp_dir(const std::string& tag)
{
    static std::atomic<int> counter{0};
    std::random_device rd;
    auto dir = std::filesystem::temp_directory_path() /
               ("socratic-" + tag + "-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(dir);
    return dir.string();
}

} // namespace testing_support
