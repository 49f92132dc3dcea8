// Command-line front end: analyze, quiz, grade, serve, replay.
#include "socratic/server.hpp"
#include "socratic/session.hpp"
#include "socratic/text.hpp"

#include <CLI11.hpp>

#include <cctype>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <iostream>

using namespace socratic;
namespace fs = std::filesystem;

namespace {

std::string env_or(const char* name, const std::string& fallback)
{
    const char* v = std::getenv(name);
    return v && *v ? v : fallback;
}

AssignmentConfig load_assignment(const std::string& path)
{
    return assignment_from_json(Json::parse(read_text_file(path)));
}

// Without an assignment the only test is that the program runs cleanly on its
// first sampled input and prints what it printed there.
AssignmentConfig self_check_assignment(const Program& program, std::uint64_t seed)
{
    AssignmentConfig cfg;
    cfg.assignment_id = "self-check";
    cfg.title = "Self check";
    cfg.sample_seed = seed;
    auto inputs = sample_inputs(program, seed, 1);
    auto run = execute(program, inputs.front(), cfg.step_budget);
    cfg.tests.push_back({"runs-cleanly", inputs.front(),
                         run.termination == Termination::NORMAL ? run.output() : std::string("<no normal exit>")});
    return cfg;
}

int report_source_error(const std::string& file, const std::exception& e, int line, int column)
{
    std::cerr << file << ":" << line << ":" << column << ": " << e.what() << "\n";
    return 2;
}

int cmd_analyze(const std::string& file, const std::string& assignment_path, std::uint64_t seed)
{
    std::string source = read_text_file(file);
    try {
        Program program = parse(source);
        AssignmentConfig cfg =
            assignment_path.empty() ? self_check_assignment(program, seed) : load_assignment(assignment_path);
        auto inputs = sample_inputs(program, cfg.sample_seed, cfg.sample_count, cfg.input_domains);
        std::cout << to_json(analyze(program, name_input_sets(inputs), cfg.step_budget)).dump(2) << "\n";
    } catch (const ParseError& e) {
        return report_source_error(file, e, e.line(), e.column());
    } catch (const SemanticError& e) {
        return report_source_error(file, e, e.line(), e.column());
    }
    return 0;
}

void print_new_turns(const Session& s, std::size_t& shown)
{
    for (; shown < s.transcript.size(); ++shown) {
        const auto& t = s.transcript[shown];
        if (t.speaker == "TUTOR")
            std::cout << "\ntutor> " << t.text << "\n";
    }
}

// "A".."D" or "1".."4"; -1 when the line is neither.
int parse_choice(const std::string& line, std::size_t options)
{
    auto text = line;
    text.erase(0, text.find_first_not_of(" \t"));
    text.erase(text.find_last_not_of(" \t\r") + 1);
    if (text.size() != 1)
        return -1;
    char c = static_cast<char>(std::toupper(static_cast<unsigned char>(text[0])));
    int idx = c >= 'A' && c <= 'Z' ? c - 'A' : (c >= '1' && c <= '9' ? c - '1' : -1);
    return idx >= 0 && static_cast<std::size_t>(idx) < options ? idx : -1;
}

int cmd_quiz(const std::string& file, std::uint64_t seed, int budget, const std::string& assignment_path,
             const std::string& mode, const std::string& data_dir, const std::string& proctor_token)
{
    std::string source = read_text_file(file);
    Program program;
    try {
        program = parse(source);
    } catch (const ParseError& e) {
        return report_source_error(file, e, e.line(), e.column());
    } catch (const SemanticError& e) {
        return report_source_error(file, e, e.line(), e.column());
    }

    Engine engine(EngineOptions::from_environment(data_dir));
    AssignmentConfig cfg =
        assignment_path.empty() ? self_check_assignment(program, seed) : load_assignment(assignment_path);
    engine.put_assignment(cfg);
    auto sub = engine.create_submission(cfg.assignment_id, source);

    StartRequest req;
    req.submission_id = sub.submission_id;
    req.mode = session_mode_from_string(mode);
    req.seed = seed;
    req.question_budget = budget;
    if (!proctor_token.empty())
        req.proctor_token = proctor_token;
    Session s = engine.start_session(req);

    std::cout << "Session " << s.session_id << " (" << to_string(s.mode) << ", " << s.question_budget
              << " questions). Answer options with a letter, explain in your own words.\n"
              << "Lines starting with '?' go to free chat; ':quit' ends the session.\n";
    std::size_t shown = 0;
    print_new_turns(s, shown);

    std::string line;
    while (!is_terminal(s.state)) {
        std::cout << (s.state == SessionState::TIER1_PENDING ? "choice> " : "you> ") << std::flush;
        if (!std::getline(std::cin, line) || line == ":quit") {
            s = engine.abort(s.session_id, "student quit");
            break;
        }
        try {
            if (!line.empty() && line[0] == '?') {
                s = engine.message(s.session_id, line.substr(1)).session;
            } else if (s.state == SessionState::TIER1_PENDING) {
                int idx = parse_choice(line, s.current->question.options.size());
                if (idx < 0) {
                    std::cout << "Pick one of the listed letters.\n";
                    continue;
                }
                s = engine.submit_tier1(s.session_id, s.current->question.question_id, idx).session;
            } else {
                s = engine.submit_tier2(s.session_id, line).session;
            }
        } catch (const EmptyAnswer&) {
            std::cout << "Please write a sentence or two.\n";
        } catch (const ServiceError& e) {
            std::cout << e.what() << "\n";
            s = engine.session(s.session_id);
        }
        print_new_turns(s, shown);
    }
    std::cout << "\n" << to_json(engine.report(s.session_id)).dump(2) << "\n";
    if (!data_dir.empty())
        std::cerr << "session stored in " << engine.session_dir(s.session_id) << "\n";
    return 0;
}

int cmd_grade(const std::string& dir)
{
    std::cout << to_json(grade_session_dir(dir)).dump(2) << "\n";
    return 0;
}

int cmd_replay(const std::string& dir)
{
    auto r = replay_session(dir);
    Json out = {{"ok", r.ok}, {"events", r.events}, {"verdicts_checked", r.verdicts_checked},
                {"mismatches", r.mismatches}};
    std::cout << out.dump(2) << "\n";
    return r.ok ? 0 : 1;
}

HttpService* running = nullptr;

int cmd_serve(const std::string& host, int port, const std::string& data_dir)
{
    fs::create_directories(data_dir);
    Engine engine(EngineOptions::from_environment(data_dir));
    HttpService service(engine);
    if (!service.bind(host, port)) {
        std::cerr << "cannot listen on " << host << ":" << port << "\n";
        return 1;
    }
    running = &service;
    std::signal(SIGINT, [](int) { running->stop(); });
    std::signal(SIGTERM, [](int) { running->stop(); });
    std::cerr << "listening on http://" << host << ":" << port << "/api/v1 (data in " << data_dir << ")\n";
    service.listen_after_bind();
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Socratic tutor: code analysis, two-tier questioning and assessment"};
    app.require_subcommand(1);

    std::string file, dir, assignment, mode = "FORMATIVE", proctor;
    std::uint64_t seed = 0;
    int budget = 5;
    std::string data_dir = env_or("SOCRATIC_DATA_DIR", "");
    std::string host = env_or("SOCRATIC_HOST", "127.0.0.1");
    int port = std::atoi(env_or("SOCRATIC_PORT", "8080").c_str());

    auto* analyze_cmd = app.add_subcommand("analyze", "Print the facts extracted from a MiniLang file");
    analyze_cmd->add_option("file", file, "MiniLang source")->required()->check(CLI::ExistingFile);
    analyze_cmd->add_option("--assignment", assignment, "Assignment config JSON (input domains, sampling seed)");
    analyze_cmd->add_option("--seed", seed, "Input sampling seed when no assignment is given");

    auto* quiz_cmd = app.add_subcommand("quiz", "Run an interactive session in the terminal");
    quiz_cmd->add_option("file", file, "MiniLang source")->required()->check(CLI::ExistingFile);
    quiz_cmd->add_option("--seed", seed, "Question seed");
    quiz_cmd->add_option("--budget", budget, "Number of questions")->check(CLI::PositiveNumber);
    quiz_cmd->add_option("--assignment", assignment, "Assignment config JSON with functional tests");
    quiz_cmd->add_option("--mode", mode, "FORMATIVE or SUMMATIVE")->check(CLI::IsMember({"FORMATIVE", "SUMMATIVE"}));
    quiz_cmd->add_option("--proctor-token", proctor, "Required for SUMMATIVE sessions");
    quiz_cmd->add_option("--data-dir", data_dir, "Persist the session here");

    auto* grade_cmd = app.add_subcommand("grade", "Print the report of a finished session directory");
    grade_cmd->add_option("session_dir", dir)->required()->check(CLI::ExistingDirectory);

    auto* serve_cmd = app.add_subcommand("serve", "Serve the JSON API");
    serve_cmd->add_option("--port", port, "Listen port");
    serve_cmd->add_option("--host", host, "Listen address");
    serve_cmd->add_option("--data-dir", data_dir, "Data directory")->required(data_dir.empty());

    auto* replay_cmd = app.add_subcommand("replay", "Re-run a stored session and compare every verdict");
    replay_cmd->add_option("session_dir", dir)->required()->check(CLI::ExistingDirectory);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*analyze_cmd)
            return cmd_analyze(file, assignment, seed);
        if (*quiz_cmd)
            return cmd_quiz(file, seed, budget, assignment, mode, data_dir, proctor);
        if (*grade_cmd)
            return cmd_grade(dir);
        if (*serve_cmd)
            return cmd_serve(host, port, data_dir);
        if (*replay_cmd)
            return cmd_replay(dir);
    } catch (const ServiceError& e) {
        std::cerr << e.code() << ": " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
