#include <doctest.h>

#include <chrono>
#include <fstream>
#include <sstream>
#include <thread>

#include "finagent/error.hpp"
#include "finagent/evalharness.hpp"
#include "support/fixtures.hpp"

using namespace finagent;
using namespace finagent::eval;
using testsupport::TempDir;

namespace {

EvalItem ceo() {
    EvalItem it;
    it.id = "ceo";
    it.question = "Who is Apple's CEO?";
    it.current_answers = {"Tim Cook"};
    it.outdated_answers = {"Steve Jobs"};
    it.dataset = "fixture";
    return it;
}

Grade graded(Score s) {
    Grade g;
    g.score = s;
    return g;
}

class ScriptedAgent final : public QueryAgent {
public:
    explicit ScriptedAgent(std::map<std::string, std::string> answers, int sleep_ms = 0)
        : answers_(std::move(answers)), sleep_ms_(sleep_ms) {}
    std::string ask(const std::string& q) override {
        if (sleep_ms_) std::this_thread::sleep_for(std::chrono::milliseconds(sleep_ms_));
        auto it = answers_.find(q);
        if (it == answers_.end()) throw Error(ErrorCode::BackendError, "no answer for " + q);
        return it->second;
    }

private:
    std::map<std::string, std::string> answers_;
    int sleep_ms_;
};

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("the rubric's three worked cases") {
    CHECK(grade_response(ceo(), "Apple's CEO is Tim Cook.").score == Score::One);
    CHECK(grade_response(ceo(), "Steve Jobs").score == Score::Half);
    CHECK(grade_response(ceo(), "Satya Nadella").score == Score::Zero);
}

TEST_CASE("matching is normalized and token-bounded") {
    CHECK(contains_answer("the ceo is   TIM\ncook!", "Tim Cook"));
    CHECK_FALSE(contains_answer("Timothy Cooks", "Tim Cook"));
    CHECK(contains_answer("rate: 5.25%", "5.25%"));
    CHECK_FALSE(contains_answer("anything", "  "));
    // current beats outdated when both appear
    CHECK(grade_response(ceo(), "Steve Jobs was replaced by Tim Cook").score == Score::One);
}

TEST_CASE("numeric answers match within one percent") {
    EvalItem it;
    it.id = "rev";
    it.current_answers = {"$4,500"};
    CHECK(parse_number("$4,500") == 4500.0);
    CHECK(parse_number("-2.5%") == -2.5);
    CHECK_FALSE(parse_number("4.5 billion"));
    CHECK_FALSE(parse_number("Q3"));
    CHECK(grade_response(it, "Revenue was 4,520 dollars.").score == Score::One);
    CHECK(grade_response(it, "Revenue was 4,600 dollars.").score == Score::Zero);
    CHECK(grade_response(it, "Revenue was 4500.").score == Score::One);
    // a digit inside a word is not a number
    it.current_answers = {"3"};
    CHECK(grade_response(it, "In Q3 nothing happened.").score == Score::Zero);
}

TEST_CASE("accuracy") {
    CHECK(accuracy({graded(Score::One), graded(Score::One), graded(Score::Half), graded(Score::Zero)}) == 0.625);
    CHECK(accuracy({graded(Score::One), graded(Score::One)}) == 1.0);
    CHECK_THROWS_AS(accuracy({}), Error);

    std::vector<EvalItem> items(6);
    std::vector<Grade> grades;
    Score scores[] = {Score::One, Score::Half, Score::Zero, Score::One, Score::Half, Score::Zero};
    for (int i = 0; i < 6; ++i) {
        items[i].dataset = i < 3 ? "a" : "b";
        items[i].difficulty = i % 2 ? Difficulty::Hard : Difficulty::Easy;
        grades.push_back(graded(scores[i]));
    }
    auto r = accuracy_report(items, grades);
    CHECK(r.overall == 0.5);
    // easy: items 0,2,4 -> 1, 0, 0.5; hard: items 1,3,5 -> 0.5, 1, 0
    CHECK(r.by_difficulty[Difficulty::Easy].accuracy == 0.5);
    CHECK(r.by_difficulty[Difficulty::Hard].accuracy == 0.5);
    CHECK(r.by_dataset["a"].accuracy == 0.5);
    CHECK(r.by_dataset["a"].count == 3);
    BreakdownKey k{"a", Difficulty::Easy, ""};
    CHECK(r.by_group[k].accuracy == 0.5);  // items 0 and 2
    CHECK(r.by_group[k].count == 2);
}

TEST_CASE("latency statistics") {
    auto s = latency_stats({2, 4});
    CHECK(s.mean_ms == 3.0);
    CHECK(s.std_ms == doctest::Approx(1.41421356).epsilon(1e-8));
    CHECK_THROWS_AS(latency_stats({5}), Error);

    ScriptedAgent slow(std::map<std::string, std::string>{{"q", "a"}}, 100);
    auto timed = measure_latency(slow, {"q", "q", "q", "q", "q"});
    CHECK(timed.n == 5);
    CHECK(timed.mean_ms >= 100.0);
    CHECK(timed.mean_ms <= 110.0);

    ScriptedAgent partial(std::map<std::string, std::string>{{"ok", "a"}});
    try {
        measure_latency(partial, {"ok", "ok", "bad", "ok"});
        FAIL("expected LatencyAborted");
    } catch (const LatencyAborted& e) {
        CHECK(e.partial().size() == 2);
    }
}

TEST_CASE("dataset parsing") {
    auto it = parse_item(R"({"id": 3, "question": "q", "current_answers": ["a"], "difficulty": "hard", "category": "rates"})", 1);
    CHECK(it.id == "3");
    CHECK(it.difficulty == Difficulty::Hard);
    CHECK(it.category == std::optional<std::string>("rates"));
    try {
        parse_item(R"({"id": "x", "question": "q"})", 7);
        FAIL("expected SchemaError");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::SchemaError);
        CHECK(std::string(e.what()).find("line 7") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_item(R"({"id": "x", "question": "q", "current_answers": ["a"], "outdated_answers": ["A"]})", 1),
                    Error);

    TempDir dir;
    std::ofstream(dir / "empty.jsonl") << "\n\n";
    try {
        load_dataset(dir / "empty.jsonl");
        FAIL("expected SchemaError");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::SchemaError);
    }
}

TEST_CASE("run_eval writes deterministic reports") {
    TempDir dir;
    std::ofstream(dir / "ds.jsonl")
        << R"({"id": "1", "question": "ceo?", "current_answers": ["Tim Cook"], "outdated_answers": ["Steve Jobs"]})" "\n"
        << R"({"id": "2", "question": "rate?", "current_answers": ["5.25%"], "difficulty": "hard"})" "\n"
        << R"({"id": "3", "question": "old?", "current_answers": ["new"], "outdated_answers": ["old"]})" "\n"
        << R"({"id": "4", "question": "future?", "current_answers": ["n/a"], "ungraded": true})" "\n";
    ScriptedAgent agent({{"ceo?", "It is Tim Cook."}, {"rate?", "About 5.3%"}, {"old?", "the old one"}, {"future?", "up"}});
    auto a = run_eval(dir / "ds.jsonl", agent, dir / "a");
    auto b = run_eval(dir / "ds.jsonl", agent, dir / "b");
    CHECK(a.grades.size() == 3);
    // 1 + (5.3 within 1% of 5.25 -> 1) + 0.5
    CHECK(a.accuracy.overall == doctest::Approx(2.5 / 3));
    for (const char* f : {"report.jsonl", "summary.json", "summary.txt"}) {
        CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
    }
    CHECK(std::filesystem::exists(dir / "a" / "latency.json"));
    CHECK(slurp(dir / "a" / "report.jsonl").find("\"ungraded\":true") != std::string::npos);
}
