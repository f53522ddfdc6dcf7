#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "msfuse/http_client.hpp"

using namespace msfuse;
using nlohmann::json;

namespace {

// Local chat-completion stub; records the last request for assertions.
struct StubServer {
    httplib::Server server;
    std::thread thread;
    int port = 0;
    json last_body;
    std::string last_auth;
    std::atomic<int> requests{0};
    std::function<void(httplib::Response&)> responder;

    StubServer() {
        responder = [](httplib::Response& res) {
            const json reply = {
                {"choices", {{{"message", {{"content", "[person, 0.5]"}}}}}}};
            res.set_content(reply.dump(), "application/json");
        };
        server.Post("/v1/chat/completions", [this](const httplib::Request& req,
                                                   httplib::Response& res) {
            ++requests;
            last_body = json::parse(req.body, nullptr, false);
            last_auth = req.get_header_value("Authorization");
            responder(res);
        });
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }

    ~StubServer() {
        server.stop();
        thread.join();
    }

    std::string endpoint() const {
        return "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
    }
};

HttpClientConfig make_cfg(const StubServer& stub) {
    HttpClientConfig cfg;
    cfg.endpoint = stub.endpoint();
    cfg.model = "test-model";
    cfg.api_key = "sk-test";
    return cfg;
}

}  // namespace

TEST_CASE("complete posts a chat-completion body and extracts the reply text") {
    StubServer stub;
    HttpChatClient client(make_cfg(stub));
    const auto reply = client.complete("some context", "some prompt");
    REQUIRE(reply == "[person, 0.5]");

    REQUIRE(stub.last_body.at("model") == "test-model");
    const auto& messages = stub.last_body.at("messages");
    REQUIRE(messages.size() == 1);
    REQUIRE(messages[0].at("role") == "user");
    const std::string content = messages[0].at("content");
    REQUIRE(content.find("some context") != std::string::npos);
    REQUIRE(content.find("some prompt") != std::string::npos);
    REQUIRE(stub.last_auth == "Bearer sk-test");
}

TEST_CASE("describe_image inlines the crop as a base64 PNG data URL") {
    StubServer stub;
    HttpChatClient client(make_cfg(stub));
    const std::vector<std::uint8_t> png = {0x89, 'P', 'N', 'G'};
    (void)client.describe_image(png, "what is in the green box?");

    const auto& content = stub.last_body.at("messages")[0].at("content");
    REQUIRE(content.is_array());
    REQUIRE(content[0].at("type") == "text");
    REQUIRE(content[0].at("text") == "what is in the green box?");
    REQUIRE(content[1].at("type") == "image_url");
    const std::string url = content[1].at("image_url").at("url");
    REQUIRE(url.rfind("data:image/png;base64,", 0) == 0);
    REQUIRE(url.substr(url.find(',') + 1) == "iVBORw==");  // base64 of the 4 bytes
}

TEST_CASE("a custom response path is honored") {
    StubServer stub;
    stub.responder = [](httplib::Response& res) {
        res.set_content(json{{"output", {{"text", "hello"}}}}.dump(), "application/json");
    };
    auto cfg = make_cfg(stub);
    cfg.response_text_path = "output/text";
    HttpChatClient client(cfg);
    REQUIRE(client.complete("c", "p") == "hello");
}

TEST_CASE("non-2xx, non-JSON, and bad-path responses raise TransportError") {
    StubServer stub;
    auto cfg = make_cfg(stub);
    HttpChatClient client(cfg);

    stub.responder = [](httplib::Response& res) { res.status = 500; };
    REQUIRE_THROWS_AS(client.complete("c", "p"), TransportError);

    stub.responder = [](httplib::Response& res) { res.set_content("not json", "text/plain"); };
    REQUIRE_THROWS_AS(client.complete("c", "p"), TransportError);

    stub.responder = [](httplib::Response& res) {
        res.set_content(json{{"unexpected", 1}}.dump(), "application/json");
    };
    REQUIRE_THROWS_AS(client.complete("c", "p"), TransportError);
}

TEST_CASE("retry recovers from transient 500s and exhausts on persistent failure") {
    StubServer stub;
    HttpChatClient client(make_cfg(stub));
    RetryPolicy fast{4, std::chrono::milliseconds(0)};

    std::atomic<int> failures{2};
    stub.responder = [&](httplib::Response& res) {
        if (failures-- > 0) {
            res.status = 503;
        } else {
            res.set_content(json{{"choices", {{{"message", {{"content", "ok"}}}}}}}.dump(),
                            "application/json");
        }
    };
    const auto reply = with_retries(fast, [&] { return client.complete("c", "p"); });
    REQUIRE(reply == "ok");
    REQUIRE(stub.requests == 3);

    stub.requests = 0;
    stub.responder = [](httplib::Response& res) { res.status = 503; };
    REQUIRE_THROWS_AS(with_retries(fast, [&] { return client.complete("c", "p"); }),
                      TransportError);
    REQUIRE(stub.requests == 4);
}

TEST_CASE("connection failure raises TransportError") {
    HttpClientConfig cfg;
    cfg.endpoint = "http://127.0.0.1:1/v1/chat/completions";  // nothing listens here
    cfg.model = "m";
    cfg.api_key = "k";
    cfg.timeout_seconds = 2;
    HttpChatClient client(cfg);
    REQUIRE_THROWS_AS(client.complete("c", "p"), TransportError);
}

TEST_CASE("endpoint must be configured") {
    HttpClientConfig cfg;
    cfg.api_key = "k";
    // Only when the environment provides no endpoint either.
    if (std::getenv("MSFUSE_ENDPOINT") == nullptr)
        REQUIRE_THROWS_AS(HttpChatClient(cfg), std::invalid_argument);
}
