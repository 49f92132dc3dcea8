#pragma once

#include "socratic/session.hpp"

#include <optional>
#include <string>

namespace testing_support {

// Similarity bands the verdict thresholds split on.
enum class Band { LOW, MID, HIGH };

// An on-topic explanation whose rule-based similarity falls in the band, built
// by trying atom subsets against the verifier. Empty when no subset fits.
std::optional<std::string> explanation_in_band(const socratic::ReferenceReason& reference, Band band);

// Index of the correct option, or of some distractor.
int correct_choice(const socratic::Question& q);
int wrong_choice(const socratic::Question& q);

// P1-style assignment whose single test is {n: 3} printing "3".
socratic::AssignmentConfig sum_assignment();

// Drives an open session to a terminal state: correct selections and
// full-credit explanations throughout.
socratic::Session run_to_completion(socratic::Engine& engine, const std::string& session_id);

std::string temp_dir(const std::string& tag);

} // namespace testing_support
