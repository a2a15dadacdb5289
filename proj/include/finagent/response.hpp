#pragma once

#include <optional>
#include <string>
#include <vector>

#include "finagent/source.hpp"

namespace finagent {

struct AgentResponse {
    std::string response_id;
    std::string text;
    std::vector<SourceRef> sources_used;
    std::vector<int> cited_tags;  // parallel to sources_used
    double latency_ms = 0.0;
    std::string backend_id;
    std::string prompt;  // the user's original query
    std::vector<std::string> diagnostics;
};

struct Feedback {
    std::string response_id;
    int rating = 0;  // -1, 0 or 1
    std::optional<std::string> comment;
};

/// "rating: <r>" followed by "\ncomment: <c>" when a comment is present.
std::string render_feedback(const Feedback& fb);

/// Inverse of render_feedback for the rating line; nullopt when absent.
std::optional<int> parse_feedback_rating(const std::string& payload);

}  // namespace finagent
