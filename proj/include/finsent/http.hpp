// SPDX-License-Identifier: Apache-2.0
#pragma once

// Define CPPHTTPLIB_OPENSSL_SUPPORT before including this header (and link
// OpenSSL) to talk to https endpoints; the CLI build does.
#include <httplib.h>

#include <cstdlib>
#include <memory>
#include <string>

#include "finsent/inference.hpp"

namespace finsent {

/// Transport that POSTs the chat-completion request to
/// {base_url}{path}. The API key is resolved from the environment variable
/// named in the config at call time; requests go out with
/// "Authorization: Bearer <key>" when the variable is set.
inline ChatTransport make_http_transport(const EndpointConfig& config) {
    auto client = std::make_shared<httplib::Client>(config.base_url);
    client->set_connection_timeout(config.timeout_s);
    client->set_read_timeout(config.timeout_s);
    return [client, config](const nlohmann::json& request) -> ChatResponse {
        httplib::Headers headers;
        if (const char* key = std::getenv(config.api_key_env.c_str()); key && *key)
            headers.emplace("Authorization", std::string("Bearer ") + key);
        auto res = client->Post(config.path, headers, request.dump(), "application/json");
        if (!res) return {0, "", "transport: " + httplib::to_string(res.error())};
        return {res->status, res->body, ""};
    };
}

}  // namespace finsent
