#pragma once

#include <openssl/evp.h>

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

namespace msfuse {

// A client call that failed at the transport level (network, HTTP status).
// Retried by policy before being surfaced.
struct TransportError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// An LLM reply that could not be parsed into the expected record format.
struct ParseError : std::runtime_error {
    std::string raw_text;
    ParseError(const std::string& msg, std::string raw)
        : std::runtime_error(msg), raw_text(std::move(raw)) {}
};

inline std::string sha256_hex(const std::uint8_t* data, std::size_t size) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(data, size, digest, &len, EVP_sha256(), nullptr);
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

inline std::string sha256_hex(const std::string& s) {
    return sha256_hex(reinterpret_cast<const std::uint8_t*>(s.data()), s.size());
}

inline std::string sha256_hex(const std::vector<std::uint8_t>& v) {
    return sha256_hex(v.data(), v.size());
}

// Stable 256-bit key over the canonicalized request. Image bytes enter through
// their own digest so the canonical form stays small.
inline std::string request_fingerprint(const std::string& client_id,
                                       const std::string& endpoint,
                                       const std::string& kind,
                                       const std::string& prompt,
                                       const std::string& context_or_image_digest) {
    nlohmann::json canon = {
        {"client", client_id},
        {"endpoint", endpoint},
        {"kind", kind},
        {"prompt", prompt},
        {"payload", context_or_image_digest},
    };
    return sha256_hex(canon.dump());
}

// Pluggable chat-completion backend. A conforming client is total: it returns
// text or throws TransportError.
class ChatClient {
public:
    virtual ~ChatClient() = default;
    virtual std::string id() const = 0;
    virtual std::string endpoint() const { return ""; }
    virtual std::string describe_image(const std::vector<std::uint8_t>& png_bytes,
                                       const std::string& prompt) = 0;
    virtual std::string complete(const std::string& context, const std::string& prompt) = 0;
};

struct RetryPolicy {
    int max_attempts = 4;  // 1 initial + 3 retries
    std::chrono::milliseconds initial_backoff{250};
};

template <typename Fn>
auto with_retries(const RetryPolicy& policy, Fn&& fn) -> decltype(fn()) {
    auto backoff = policy.initial_backoff;
    for (int attempt = 1;; ++attempt) {
        try {
            return fn();
        } catch (const TransportError&) {
            if (attempt >= policy.max_attempts) throw;
            if (backoff.count() > 0) std::this_thread::sleep_for(backoff);
            backoff *= 2;
        }
    }
}

// Deterministic offline client: replies are pure functions of (seed, request
// fingerprint) and always parseable by parse_prediction.
class MockChatClient : public ChatClient {
public:
    explicit MockChatClient(std::uint64_t seed = 0) : seed_(seed) {}

    std::string id() const override { return "mock-" + std::to_string(seed_); }

    std::string describe_image(const std::vector<std::uint8_t>& png_bytes,
                               const std::string& prompt) override {
        const std::string fp = fingerprint("describe", prompt, sha256_hex(png_bytes));
        return "A pedestrian-like figure stands inside the green box; posture and "
               "silhouette are consistent with a person (signature " +
               fp.substr(0, 8) + ").";
    }

    std::string complete(const std::string& context, const std::string& prompt) override {
        const std::string fp = fingerprint("complete", prompt, context);
        if (prompt.find("First, predict") != std::string::npos) {
            return "[person, " + score_text(fp, 0) + "], [person, " + score_text(fp, 1) + "]";
        }
        return "Both descriptions consistently indicate a pedestrian. [person, " +
               score_text(fp, 2) + "]";
    }

private:
    std::string fingerprint(const std::string& kind, const std::string& prompt,
                            const std::string& payload) const {
        return request_fingerprint(id(), "", kind, prompt, payload);
    }

    // Three decimal digits in [0,1), sliced from the fingerprint hex.
    static std::string score_text(const std::string& fp, int slot) {
        const unsigned long v = std::stoul(fp.substr(8 * slot, 8), nullptr, 16);
        char buf[8];
        std::snprintf(buf, sizeof(buf), "0.%03lu", v % 1000);
        return buf;
    }

    std::uint64_t seed_;
};

// Counts calls that actually reach the wrapped client.
class CountingChatClient : public ChatClient {
public:
    explicit CountingChatClient(std::shared_ptr<ChatClient> inner) : inner_(std::move(inner)) {}

    std::string id() const override { return inner_->id(); }
    std::string endpoint() const override { return inner_->endpoint(); }

    std::string describe_image(const std::vector<std::uint8_t>& png_bytes,
                               const std::string& prompt) override {
        ++describe_calls_;
        return inner_->describe_image(png_bytes, prompt);
    }

    std::string complete(const std::string& context, const std::string& prompt) override {
        ++complete_calls_;
        return inner_->complete(context, prompt);
    }

    std::int64_t describe_calls() const { return describe_calls_.load(); }
    std::int64_t complete_calls() const { return complete_calls_.load(); }
    std::int64_t total_calls() const { return describe_calls() + complete_calls(); }

private:
    std::shared_ptr<ChatClient> inner_;
    std::atomic<std::int64_t> describe_calls_{0};
    std::atomic<std::int64_t> complete_calls_{0};
};

// Append-only directory cache keyed by request fingerprint; replay returns
// byte-identical response text. Writes are serialized, reads concurrent.
class CachingChatClient : public ChatClient {
public:
    CachingChatClient(std::shared_ptr<ChatClient> inner, std::filesystem::path cache_dir)
        : inner_(std::move(inner)), dir_(std::move(cache_dir)) {
        std::filesystem::create_directories(dir_);
    }

    std::string id() const override { return inner_->id(); }
    std::string endpoint() const override { return inner_->endpoint(); }

    std::string describe_image(const std::vector<std::uint8_t>& png_bytes,
                               const std::string& prompt) override {
        const std::string fp =
            request_fingerprint(inner_->id(), inner_->endpoint(), "describe", prompt,
                                sha256_hex(png_bytes));
        return cached(fp, [&] { return inner_->describe_image(png_bytes, prompt); });
    }

    std::string complete(const std::string& context, const std::string& prompt) override {
        const std::string fp =
            request_fingerprint(inner_->id(), inner_->endpoint(), "complete", prompt, context);
        return cached(fp, [&] { return inner_->complete(context, prompt); });
    }

    std::int64_t hits() const { return hits_.load(); }
    std::int64_t misses() const { return misses_.load(); }

private:
    std::string cached(const std::string& fp, const std::function<std::string()>& fetch) {
        const auto path = dir_ / (fp + ".json");
        {
            std::ifstream in(path);
            if (in) {
                nlohmann::json rec = nlohmann::json::parse(in);
                ++hits_;
                return rec.at("response").get<std::string>();
            }
        }
        const std::string response = fetch();
        ++misses_;
        nlohmann::json rec = {
            {"request_fingerprint", fp},
            {"response", response},
            {"created_at",
             std::chrono::duration_cast<std::chrono::seconds>(
                 std::chrono::system_clock::now().time_since_epoch())
                 .count()},
        };
        std::lock_guard<std::mutex> lock(write_mutex_);
        std::ofstream out(path);
        out << rec.dump(2) << "\n";
        return response;
    }

    std::shared_ptr<ChatClient> inner_;
    std::filesystem::path dir_;
    std::mutex write_mutex_;
    std::atomic<std::int64_t> hits_{0};
    std::atomic<std::int64_t> misses_{0};
};

}  // namespace msfuse
