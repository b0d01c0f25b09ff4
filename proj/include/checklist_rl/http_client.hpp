#pragma once

#include <string>

#include <json.hpp>

namespace checklist_rl {

// POSTs `payload` as application/json and returns the parsed reply body.
// Throws EndpointUnavailable on transport failure or non-200 status, and
// EndpointMalformedReply when the body is not valid JSON.
nlohmann::json http_post_json(const std::string& host, int port, const std::string& path,
                              const nlohmann::json& payload, double timeout_seconds);

// "host:port" -> pair; throws InvalidConfig on anything else.
std::pair<std::string, int> parse_address(const std::string& address);

} // namespace checklist_rl
