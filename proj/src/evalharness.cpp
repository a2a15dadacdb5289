#include "finagent/evalharness.hpp"

#include "finagent/http.hpp"
#include "finagent/source.hpp"
#include "finagent/text.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include <fmt/format.h>
#include <json.hpp>

namespace finagent::eval {

std::string_view to_string(Difficulty d) noexcept { return d == Difficulty::Easy ? "easy" : "hard"; }

double value(Score s) noexcept {
    switch (s) {
        case Score::Zero: return 0.0;
        case Score::Half: return 0.5;
        case Score::One: return 1.0;
    }
    return 0.0;
}

namespace {

std::string normalize(std::string_view s) { return collapse_whitespace(to_lower_ascii(s)); }

bool is_digit(char c) { return c >= '0' && c <= '9'; }

// Numbers as they show up in financial prose: 1,234.5  $42  -3.1%  +0.25
std::vector<double> numbers_in(std::string_view s) {
    std::vector<double> out;
    std::size_t i = 0;
    while (i < s.size()) {
        if (!is_digit(s[i])) {
            ++i;
            continue;
        }
        // a digit glued to a preceding letter is part of a word, e.g. "q3"
        if (i > 0 && is_word_byte(static_cast<unsigned char>(s[i - 1])) && !is_digit(s[i - 1])) {
            while (i < s.size() && is_word_byte(static_cast<unsigned char>(s[i]))) ++i;
            continue;
        }
        std::size_t start = i;
        std::string digits;
        while (i < s.size() && (is_digit(s[i]) || (s[i] == ',' && i + 1 < s.size() && is_digit(s[i + 1])))) {
            if (s[i] != ',') digits.push_back(s[i]);
            ++i;
        }
        if (i + 1 < s.size() && s[i] == '.' && is_digit(s[i + 1])) {
            digits.push_back('.');
            ++i;
            while (i < s.size() && is_digit(s[i])) digits.push_back(s[i++]);
        }
        bool negative = false;
        std::size_t k = start;
        while (k > 0 && (s[k - 1] == '$' || s[k - 1] == ' ')) {
            if (s[k - 1] == ' ') break;
            --k;
        }
        if (k > 0 && s[k - 1] == '-' && (k == 1 || !is_word_byte(static_cast<unsigned char>(s[k - 2])))) {
            negative = true;
        }
        try {
            double v = std::stod(digits);
            out.push_back(negative ? -v : v);
        } catch (const std::exception&) {
        }
    }
    return out;
}

bool numeric_match(double answer, const std::vector<double>& candidates) {
    for (double c : candidates) {
        if (std::fabs(c - answer) <= 1e-2 * std::fabs(answer)) return true;
    }
    return false;
}

}  // namespace

std::optional<double> parse_number(std::string_view raw) {
    auto s = trim(raw);
    if (s.empty()) return std::nullopt;
    std::size_t i = 0;
    bool negative = false;
    if (s[i] == '+' || s[i] == '-') {
        negative = s[i] == '-';
        ++i;
    }
    if (i < s.size() && s[i] == '$') ++i;
    std::string digits;
    bool any = false;
    while (i < s.size() && (is_digit(s[i]) || s[i] == ',')) {
        if (s[i] != ',') {
            digits.push_back(s[i]);
            any = true;
        }
        ++i;
    }
    if (i < s.size() && s[i] == '.') {
        digits.push_back('.');
        ++i;
        while (i < s.size() && is_digit(s[i])) {
            digits.push_back(s[i++]);
            any = true;
        }
    }
    if (i < s.size() && s[i] == '%') ++i;
    if (!any || i != s.size()) return std::nullopt;
    double v = std::stod(digits);
    return negative ? -v : v;
}

bool contains_answer(std::string_view response, std::string_view answer) {
    auto r = normalize(response);
    auto a = normalize(answer);
    if (a.empty()) return false;
    const bool word_start = is_word_byte(static_cast<unsigned char>(a.front()));
    const bool word_end = is_word_byte(static_cast<unsigned char>(a.back()));
    std::size_t pos = 0;
    while ((pos = r.find(a, pos)) != std::string::npos) {
        bool left_ok = !word_start || pos == 0 || !is_word_byte(static_cast<unsigned char>(r[pos - 1]));
        auto end = pos + a.size();
        bool right_ok = !word_end || end == r.size() || !is_word_byte(static_cast<unsigned char>(r[end]));
        if (left_ok && right_ok) return true;
        ++pos;
    }
    return false;
}

Grade grade_response(const EvalItem& item, std::string_view response) {
    Grade g;
    g.item_id = item.id;
    g.response_text = std::string(response);
    std::optional<std::vector<double>> numbers;
    auto matches = [&](const std::string& answer) {
        if (contains_answer(response, answer)) return true;
        if (auto a = parse_number(answer)) {
            if (!numbers) numbers = numbers_in(response);
            return numeric_match(*a, *numbers);
        }
        return false;
    };
    for (const auto& a : item.current_answers) {
        if (matches(a)) {
            g.score = Score::One;
            g.matched = a;
            return g;
        }
    }
    for (const auto& a : item.outdated_answers) {
        if (matches(a)) {
            g.score = Score::Half;
            g.matched = a;
            return g;
        }
    }
    return g;
}

double accuracy(const std::vector<Grade>& grades) {
    if (grades.empty()) throw Error(ErrorCode::EmptyInput, "accuracy of an empty grade list");
    double s = 0.0;
    for (const auto& g : grades) s += value(g.score);
    return s / static_cast<double>(grades.size());
}

AccuracyReport accuracy_report(const std::vector<EvalItem>& items, const std::vector<Grade>& grades) {
    if (items.size() != grades.size()) {
        throw Error(ErrorCode::InvalidArgument, "items and grades must be parallel");
    }
    AccuracyReport r;
    r.overall = accuracy(grades);
    r.count = grades.size();
    std::map<BreakdownKey, double> group_sum;
    std::map<std::string, double> dataset_sum;
    std::map<Difficulty, double> difficulty_sum;
    for (std::size_t i = 0; i < items.size(); ++i) {
        double v = value(grades[i].score);
        BreakdownKey key{items[i].dataset, items[i].difficulty, items[i].category.value_or("")};
        group_sum[key] += v;
        ++r.by_group[key].count;
        dataset_sum[items[i].dataset] += v;
        ++r.by_dataset[items[i].dataset].count;
        difficulty_sum[items[i].difficulty] += v;
        ++r.by_difficulty[items[i].difficulty].count;
    }
    for (auto& [k, b] : r.by_group) b.accuracy = group_sum[k] / static_cast<double>(b.count);
    for (auto& [k, b] : r.by_dataset) b.accuracy = dataset_sum[k] / static_cast<double>(b.count);
    for (auto& [k, b] : r.by_difficulty) b.accuracy = difficulty_sum[k] / static_cast<double>(b.count);
    return r;
}

LatencyStats latency_stats(std::vector<double> timings_ms) {
    if (timings_ms.size() < 2) {
        throw Error(ErrorCode::EmptyInput, fmt::format("latency needs at least 2 timings, got {}", timings_ms.size()));
    }
    LatencyStats s;
    s.n = timings_ms.size();
    double sum = 0.0;
    for (double t : timings_ms) sum += t;
    s.mean_ms = sum / static_cast<double>(s.n);
    double ss = 0.0;
    for (double t : timings_ms) ss += (t - s.mean_ms) * (t - s.mean_ms);
    s.std_ms = std::sqrt(ss / static_cast<double>(s.n - 1));
    s.timings_ms = std::move(timings_ms);
    return s;
}

HttpQueryAgent::HttpQueryAgent(std::string endpoint, int timeout_ms)
    : endpoint_(std::move(endpoint)), timeout_ms_(timeout_ms) {
    while (!endpoint_.empty() && endpoint_.back() == '/') endpoint_.pop_back();
    if (!is_absolute_url(endpoint_)) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("endpoint '{}' is not an absolute URL", endpoint_));
    }
}

std::string HttpQueryAgent::ask(const std::string& question) {
    auto call = [&](const std::string& path, const nlohmann::json& body) {
        http::Response res;
        try {
            res = http::post(endpoint_ + path, body.dump(), "application/json", timeout_ms_);
        } catch (const Error& e) {
            throw Error(ErrorCode::BackendError, fmt::format("{}{}: {}", endpoint_, path, e.what()));
        }
        if (res.status < 200 || res.status >= 300) {
            throw Error(ErrorCode::BackendError,
                        fmt::format("{}{} returned HTTP {}: {}", endpoint_, path, res.status, res.body));
        }
        try {
            return nlohmann::json::parse(res.body);
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::BackendError, fmt::format("malformed reply from {}{}: {}", endpoint_, path, e.what()));
        }
    };
    auto session = call("/api/session", nlohmann::json::object());
    auto sid = session.value("session_id", "");
    auto reply = call("/api/query", {{"session_id", sid}, {"query", question}});
    if (!reply.contains("text") || !reply["text"].is_string()) {
        throw Error(ErrorCode::BackendError, "query reply lacks 'text'");
    }
    return reply["text"].get<std::string>();
}

LatencyStats measure_latency(QueryAgent& agent, const std::vector<std::string>& queries) {
    if (queries.size() < 2) {
        throw Error(ErrorCode::EmptyInput, fmt::format("latency needs at least 2 queries, got {}", queries.size()));
    }
    std::vector<double> timings;
    timings.reserve(queries.size());
    for (const auto& q : queries) {
        auto t0 = std::chrono::steady_clock::now();
        try {
            agent.ask(q);
        } catch (const std::exception& e) {
            throw LatencyAborted(fmt::format("query {} failed: {}", timings.size(), e.what()), timings);
        }
        timings.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    }
    return latency_stats(std::move(timings));
}

// ---------------------------------------------------------------------------
// Datasets and reports
// ---------------------------------------------------------------------------
namespace {

std::vector<std::string> string_list(const nlohmann::json& j, const char* field, std::size_t line_no) {
    if (!j.is_array()) throw Error(ErrorCode::SchemaError, fmt::format("line {}: '{}' must be an array", line_no, field));
    std::vector<std::string> out;
    for (const auto& v : j) {
        if (!v.is_string()) {
            throw Error(ErrorCode::SchemaError, fmt::format("line {}: '{}' entries must be strings", line_no, field));
        }
        out.push_back(v.get<std::string>());
    }
    return out;
}

}  // namespace

EvalItem parse_item(std::string_view json_line, std::size_t line_no) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_line);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::SchemaError, fmt::format("line {}: invalid JSON: {}", line_no, e.what()));
    }
    if (!j.is_object()) throw Error(ErrorCode::SchemaError, fmt::format("line {}: expected an object", line_no));
    EvalItem item;
    auto need_string = [&](const char* field) {
        if (!j.contains(field) || !j[field].is_string() || trim(j[field].get<std::string>()).empty()) {
            throw Error(ErrorCode::SchemaError, fmt::format("line {}: missing or empty '{}'", line_no, field));
        }
        return j[field].get<std::string>();
    };
    if (j.contains("id") && j["id"].is_number_integer()) {
        item.id = std::to_string(j["id"].get<long long>());
    } else {
        item.id = need_string("id");
    }
    item.question = need_string("question");
    if (!j.contains("current_answers")) {
        throw Error(ErrorCode::SchemaError, fmt::format("line {}: missing 'current_answers'", line_no));
    }
    item.current_answers = string_list(j["current_answers"], "current_answers", line_no);
    if (item.current_answers.empty()) {
        throw Error(ErrorCode::SchemaError, fmt::format("line {}: 'current_answers' is empty", line_no));
    }
    if (j.contains("outdated_answers")) {
        item.outdated_answers = string_list(j["outdated_answers"], "outdated_answers", line_no);
    }
    for (const auto& c : item.current_answers) {
        for (const auto& o : item.outdated_answers) {
            if (normalize(c) == normalize(o)) {
                throw Error(ErrorCode::SchemaError,
                            fmt::format("line {}: '{}' is both a current and an outdated answer", line_no, c));
            }
        }
    }
    auto difficulty = j.value("difficulty", std::string("easy"));
    if (difficulty == "easy") {
        item.difficulty = Difficulty::Easy;
    } else if (difficulty == "hard") {
        item.difficulty = Difficulty::Hard;
    } else {
        throw Error(ErrorCode::SchemaError, fmt::format("line {}: difficulty must be easy or hard", line_no));
    }
    item.dataset = j.value("dataset", std::string("default"));
    if (j.contains("category") && j["category"].is_string()) item.category = j["category"].get<std::string>();
    item.ungraded = j.value("ungraded", false);
    return item;
}

std::vector<EvalItem> load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::SchemaError, fmt::format("cannot open dataset {}", path.string()));
    std::vector<EvalItem> items;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        items.push_back(parse_item(line, line_no));
    }
    if (items.empty()) throw Error(ErrorCode::SchemaError, fmt::format("dataset {} has no items", path.string()));
    return items;
}

std::string summary_table(const AccuracyReport& report) {
    std::string out;
    out += fmt::format("{:<20} {:<6} {:<20} {:>6} {:>9}\n", "dataset", "diff", "category", "n", "accuracy");
    out += std::string(65, '-') + "\n";
    for (const auto& [k, b] : report.by_group) {
        out += fmt::format("{:<20} {:<6} {:<20} {:>6} {:>9.4f}\n", k.dataset, to_string(k.difficulty),
                           k.category.empty() ? "-" : k.category, b.count, b.accuracy);
    }
    out += std::string(65, '-') + "\n";
    for (const auto& [d, b] : report.by_difficulty) {
        out += fmt::format("{:<20} {:<6} {:<20} {:>6} {:>9.4f}\n", "all", to_string(d), "-", b.count, b.accuracy);
    }
    out += fmt::format("{:<20} {:<6} {:<20} {:>6} {:>9.4f}\n", "overall", "-", "-", report.count, report.overall);
    return out;
}

EvalReport run_eval(const std::filesystem::path& dataset, QueryAgent& agent, const std::filesystem::path& out_dir) {
    auto all_items = load_dataset(dataset);
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw Error(ErrorCode::StorageError, fmt::format("cannot create {}: {}", out_dir.string(), ec.message()));

    EvalReport report;
    std::vector<double> timings;
    std::ofstream lines(out_dir / "report.jsonl", std::ios::binary | std::ios::trunc);
    if (!lines) throw Error(ErrorCode::StorageError, "cannot write report.jsonl");

    for (const auto& item : all_items) {
        std::string response;
        std::optional<std::string> error;
        auto t0 = std::chrono::steady_clock::now();
        try {
            response = agent.ask(item.question);
        } catch (const std::exception& e) {
            error = e.what();
        }
        timings.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());

        nlohmann::ordered_json line;
        line["id"] = item.id;
        line["dataset"] = item.dataset;
        line["difficulty"] = to_string(item.difficulty);
        line["category"] = item.category ? nlohmann::ordered_json(*item.category) : nlohmann::ordered_json(nullptr);
        line["question"] = item.question;
        line["response"] = response;
        if (item.ungraded) {
            line["score"] = nullptr;
            line["ungraded"] = true;
        } else {
            auto g = grade_response(item, response);
            line["score"] = value(g.score);
            line["matched"] = g.matched ? nlohmann::ordered_json(*g.matched) : nlohmann::ordered_json(nullptr);
            report.items.push_back(item);
            report.grades.push_back(std::move(g));
        }
        if (error) line["error"] = *error;
        lines << line.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
    }
    lines.close();

    nlohmann::ordered_json summary;
    summary["items"] = all_items.size();
    summary["graded"] = report.grades.size();
    summary["ungraded"] = all_items.size() - report.grades.size();
    if (!report.grades.empty()) {
        report.accuracy = accuracy_report(report.items, report.grades);
        summary["overall_accuracy"] = report.accuracy.overall;
        nlohmann::ordered_json by_dataset = nlohmann::ordered_json::object();
        for (const auto& [k, b] : report.accuracy.by_dataset) by_dataset[k] = {{"accuracy", b.accuracy}, {"n", b.count}};
        summary["by_dataset"] = by_dataset;
        nlohmann::ordered_json by_diff = nlohmann::ordered_json::object();
        for (const auto& [k, b] : report.accuracy.by_difficulty) {
            by_diff[std::string(to_string(k))] = {{"accuracy", b.accuracy}, {"n", b.count}};
        }
        summary["by_difficulty"] = by_diff;
        nlohmann::ordered_json groups = nlohmann::ordered_json::array();
        for (const auto& [k, b] : report.accuracy.by_group) {
            groups.push_back({{"dataset", k.dataset},
                              {"difficulty", to_string(k.difficulty)},
                              {"category", k.category},
                              {"accuracy", b.accuracy},
                              {"n", b.count}});
        }
        summary["groups"] = groups;
    } else {
        summary["overall_accuracy"] = nullptr;
    }
    {
        std::ofstream out(out_dir / "summary.json", std::ios::binary | std::ios::trunc);
        out << summary.dump(2) << '\n';
    }
    {
        std::ofstream out(out_dir / "summary.txt", std::ios::binary | std::ios::trunc);
        if (!report.grades.empty()) out << summary_table(report.accuracy);
        else out << "no graded items\n";
    }

    nlohmann::ordered_json lat;
    lat["n"] = timings.size();
    lat["timings_ms"] = timings;
    if (timings.size() >= 2) {
        report.latency = latency_stats(timings);
        lat["mean_ms"] = report.latency.mean_ms;
        lat["std_ms"] = report.latency.std_ms;
    } else {
        report.latency.timings_ms = timings;
        report.latency.n = timings.size();
        lat["mean_ms"] = timings.empty() ? 0.0 : timings.front();
        lat["std_ms"] = nullptr;
    }
    lat["std_kind"] = "sample (n-1)";
    {
        std::ofstream out(out_dir / "latency.json", std::ios::binary | std::ios::trunc);
        out << lat.dump(2) << '\n';
    }
    return report;
}

}  // namespace finagent::eval
