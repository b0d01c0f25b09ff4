#include "checklist_rl/http_client.hpp"

#include <cmath>

#include <httplib.h>

#include "checklist_rl/errors.hpp"

namespace checklist_rl {

nlohmann::json http_post_json(const std::string& host, int port, const std::string& path,
                              const nlohmann::json& payload, double timeout_seconds) {
    httplib::Client client(host, port);
    const auto whole = static_cast<time_t>(timeout_seconds);
    const auto micros = static_cast<long>((timeout_seconds - std::floor(timeout_seconds)) * 1e6);
    client.set_connection_timeout(whole, micros);
    client.set_read_timeout(whole, micros);
    client.set_write_timeout(whole, micros);

    auto result = client.Post(path, payload.dump(), "application/json");
    if (!result) {
        throw Error(ErrorCode::EndpointUnavailable,
                    host + ":" + std::to_string(port) + path + " (" + httplib::to_string(result.error()) + ")");
    }
    if (result->status != 200) {
        throw Error(ErrorCode::EndpointUnavailable,
                    host + ":" + std::to_string(port) + path + " returned status " +
                        std::to_string(result->status));
    }
    try {
        return nlohmann::json::parse(result->body);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::EndpointMalformedReply, e.what());
    }
}

std::pair<std::string, int> parse_address(const std::string& address) {
    const auto colon = address.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 >= address.size()) {
        throw Error(ErrorCode::InvalidConfig, "endpoint address must be host:port, got " + address);
    }
    int port = 0;
    try {
        port = std::stoi(address.substr(colon + 1));
    } catch (const std::exception&) {
        throw Error(ErrorCode::InvalidConfig, "endpoint port is not a number in " + address);
    }
    return {address.substr(0, colon), port};
}

} // namespace checklist_rl
