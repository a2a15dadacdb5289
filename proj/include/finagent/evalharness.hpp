#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "finagent/error.hpp"

namespace finagent::eval {

enum class Difficulty { Easy, Hard };

std::string_view to_string(Difficulty d) noexcept;

struct EvalItem {
    std::string id;
    std::string question;
    std::vector<std::string> current_answers;
    std::vector<std::string> outdated_answers;
    Difficulty difficulty = Difficulty::Easy;
    std::string dataset;
    std::optional<std::string> category;
    bool ungraded = false;  // needs human judgement; excluded from accuracy
};

/// Scores are exactly 0, 0.5 or 1.
enum class Score { Zero, Half, One };

double value(Score s) noexcept;

struct Grade {
    std::string item_id;
    Score score = Score::Zero;
    std::optional<std::string> matched;
    std::string response_text;
};

/// 1 if a current answer appears in the response, 0.5 if only an outdated
/// one does, else 0. Text is compared after trimming, lowercasing and
/// collapsing whitespace, and must match on token boundaries. Answers that
/// parse as numbers match any number in the response within 1% relative.
Grade grade_response(const EvalItem& item, std::string_view response);

/// Normalised whole-token containment, exposed for testing.
bool contains_answer(std::string_view response, std::string_view answer);
std::optional<double> parse_number(std::string_view s);

struct BreakdownKey {
    std::string dataset;
    Difficulty difficulty = Difficulty::Easy;
    std::string category;  // empty when the item has none

    auto operator<=>(const BreakdownKey&) const = default;
};

struct Bucket {
    double accuracy = 0.0;
    std::size_t count = 0;
};

struct AccuracyReport {
    double overall = 0.0;
    std::size_t count = 0;
    std::map<BreakdownKey, Bucket> by_group;      // (dataset, difficulty, category)
    std::map<std::string, Bucket> by_dataset;
    std::map<Difficulty, Bucket> by_difficulty;
};

/// Mean score. Throws Error{EmptyInput} on an empty list.
double accuracy(const std::vector<Grade>& grades);

/// Mean plus breakdowns. `items` must be parallel to `grades`.
AccuracyReport accuracy_report(const std::vector<EvalItem>& items, const std::vector<Grade>& grades);

struct LatencyStats {
    double mean_ms = 0.0;
    double std_ms = 0.0;  // sample (n-1)
    std::size_t n = 0;
    std::vector<double> timings_ms;
};

/// Throws Error{EmptyInput} when fewer than two timings are given.
LatencyStats latency_stats(std::vector<double> timings_ms);

/// Anything that answers a question: the in-process agent, an HTTP endpoint,
/// or a test stub.
class QueryAgent {
public:
    virtual ~QueryAgent() = default;
    /// Answers in a fresh conversation. Throws Error{BackendError}.
    virtual std::string ask(const std::string& question) = 0;
};

/// POSTs to `<endpoint>/api/session` and `<endpoint>/api/query`.
class HttpQueryAgent final : public QueryAgent {
public:
    explicit HttpQueryAgent(std::string endpoint, int timeout_ms = 120000);
    std::string ask(const std::string& question) override;

private:
    std::string endpoint_;
    int timeout_ms_;
};

/// Thrown when the agent fails mid-run; keeps the timings collected so far.
class LatencyAborted : public Error {
public:
    LatencyAborted(const std::string& message, std::vector<double> partial)
        : Error(ErrorCode::BackendError, message), partial_(std::move(partial)) {}
    const std::vector<double>& partial() const noexcept { return partial_; }

private:
    std::vector<double> partial_;
};

/// Times each question->answer cycle serially in wall-clock milliseconds.
LatencyStats measure_latency(QueryAgent& agent, const std::vector<std::string>& queries);

/// One EvalItem per line. Throws Error{SchemaError} naming the line.
std::vector<EvalItem> load_dataset(const std::filesystem::path& path);
EvalItem parse_item(std::string_view json_line, std::size_t line_no);

struct EvalReport {
    std::vector<EvalItem> items;
    std::vector<Grade> grades;
    AccuracyReport accuracy;
    LatencyStats latency;
};

/// Asks every item, grades it and writes into `out_dir`:
///   report.jsonl  - one graded item per line
///   summary.json  - overall accuracy and breakdowns
///   summary.txt   - the same as a table
///   latency.json  - per-query timings with mean and sample std
/// The first three depend only on the agent's answers.
EvalReport run_eval(const std::filesystem::path& dataset, QueryAgent& agent, const std::filesystem::path& out_dir);

std::string summary_table(const AccuracyReport& report);

}  // namespace finagent::eval
