#pragma once

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <cstdlib>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "msfuse/chat_client.hpp"

namespace msfuse {

namespace detail {

inline std::string base64_encode(const std::uint8_t* data, std::size_t size) {
    static const char* alphabet =
        "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((size + 2) / 3 * 4);
    for (std::size_t i = 0; i < size; i += 3) {
        const std::uint32_t b0 = data[i];
        const std::uint32_t b1 = i + 1 < size ? data[i + 1] : 0;
        const std::uint32_t b2 = i + 2 < size ? data[i + 2] : 0;
        const std::uint32_t triple = (b0 << 16) | (b1 << 8) | b2;
        out.push_back(alphabet[(triple >> 18) & 0x3f]);
        out.push_back(alphabet[(triple >> 12) & 0x3f]);
        out.push_back(i + 1 < size ? alphabet[(triple >> 6) & 0x3f] : '=');
        out.push_back(i + 2 < size ? alphabet[triple & 0x3f] : '=');
    }
    return out;
}

// Splits "scheme://host[:port]/path" into (origin, path).
inline std::pair<std::string, std::string> split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
        throw std::invalid_argument("HttpChatClient: endpoint must include scheme: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

// Navigates a '/'-separated path through a JSON document; numeric tokens index
// arrays.
inline const nlohmann::json& navigate(const nlohmann::json& root, const std::string& path) {
    const nlohmann::json* node = &root;
    std::istringstream tokens(path);
    std::string token;
    while (std::getline(tokens, token, '/')) {
        if (token.empty()) continue;
        if (node->is_array()) {
            const std::size_t idx = std::stoul(token);
            if (idx >= node->size())
                throw TransportError("response path index out of range: " + token);
            node = &(*node)[idx];
        } else if (node->is_object() && node->contains(token)) {
            node = &node->at(token);
        } else {
            throw TransportError("response path not found: " + token);
        }
    }
    return *node;
}

}  // namespace detail

struct HttpClientConfig {
    std::string endpoint;  // e.g. https://api.example.com/v1/chat/completions
    std::string model;
    std::string response_text_path = "choices/0/message/content";
    std::string api_key;  // empty -> MSFUSE_API_KEY
    int timeout_seconds = 120;
};

// Chat-completion wire client: POSTs {model, messages} JSON to a single
// configurable endpoint; describe_image inlines the crop as a base64 data URL.
class HttpChatClient : public ChatClient {
public:
    explicit HttpChatClient(HttpClientConfig cfg) : cfg_(std::move(cfg)) {
        if (cfg_.api_key.empty()) {
            if (const char* key = std::getenv("MSFUSE_API_KEY")) cfg_.api_key = key;
        }
        if (cfg_.endpoint.empty()) {
            if (const char* ep = std::getenv("MSFUSE_ENDPOINT")) cfg_.endpoint = ep;
        }
        if (cfg_.endpoint.empty())
            throw std::invalid_argument("HttpChatClient: no endpoint configured");
    }

    std::string id() const override { return "http:" + cfg_.model; }
    std::string endpoint() const override { return cfg_.endpoint; }

    std::string describe_image(const std::vector<std::uint8_t>& png_bytes,
                               const std::string& prompt) override {
        const nlohmann::json content = nlohmann::json::array(
            {{{"type", "text"}, {"text", prompt}},
             {{"type", "image_url"},
              {"image_url",
               {{"url", "data:image/png;base64," +
                            detail::base64_encode(png_bytes.data(), png_bytes.size())}}}}});
        return post({{"model", cfg_.model},
                     {"messages", nlohmann::json::array({{{"role", "user"}, {"content", content}}})}});
    }

    std::string complete(const std::string& context, const std::string& prompt) override {
        return post({{"model", cfg_.model},
                     {"messages", nlohmann::json::array(
                                      {{{"role", "user"}, {"content", context + "\n\n" + prompt}}})}});
    }

private:
    std::string post(const nlohmann::json& body) {
        const auto [origin, path] = detail::split_url(cfg_.endpoint);
        httplib::Client client(origin);
        client.set_connection_timeout(cfg_.timeout_seconds);
        client.set_read_timeout(cfg_.timeout_seconds);
        httplib::Headers headers;
        if (!cfg_.api_key.empty())
            headers.emplace("Authorization", "Bearer " + cfg_.api_key);
        const auto res = client.Post(path, headers, body.dump(), "application/json");
        if (!res)
            throw TransportError("request to " + cfg_.endpoint + " failed: " +
                                 httplib::to_string(res.error()));
        if (res->status < 200 || res->status >= 300)
            throw TransportError("request to " + cfg_.endpoint + " returned status " +
                                 std::to_string(res->status));
        nlohmann::json reply;
        try {
            reply = nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::parse_error& e) {
            throw TransportError(std::string("non-JSON response body: ") + e.what());
        }
        const auto& text = detail::navigate(reply, cfg_.response_text_path);
        if (!text.is_string())
            throw TransportError("response path does not resolve to text");
        return text.get<std::string>();
    }

    HttpClientConfig cfg_;
};

}  // namespace msfuse
