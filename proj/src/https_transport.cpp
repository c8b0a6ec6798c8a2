#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <atomic>

#include "jsvuln/github.hpp"

namespace jsvuln::github {

namespace {

std::atomic<bool> g_allowed{true};
std::atomic<std::size_t> g_requests{0};

class HttpsTransport : public Transport {
public:
    explicit HttpsTransport(std::string host) : host_(std::move(host)) {}

    ApiResponse request(const std::string& path, const std::map<std::string, std::string>& headers) override {
        ++g_requests;
        if (!g_allowed) throw IoError("network access is disabled; refusing request to " + host_ + path);
        httplib::SSLClient client(host_);
        client.set_connection_timeout(30);
        client.set_read_timeout(60);
        client.set_follow_location(true);
        httplib::Headers h;
        for (const auto& [k, v] : headers) h.emplace(k, v);
        auto res = client.Get(path, h);
        if (!res) throw IoError("request to " + host_ + path + " failed: " + httplib::to_string(res.error()));
        ApiResponse out{res->status, res->body, {}};
        for (const auto& [k, v] : res->headers) {
            std::string key = k;
            for (char& c : key) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
            out.headers[key] = v;
        }
        return out;
    }

private:
    std::string host_;
};

}  // namespace

std::shared_ptr<Transport> make_https_transport(const std::string& host) {
    if (!g_allowed) throw IoError("network access is disabled; cannot open a connection to " + host);
    return std::make_shared<HttpsTransport>(host);
}

void set_network_allowed(bool allowed) { g_allowed = allowed; }
bool network_allowed() { return g_allowed; }
std::size_t network_request_count() { return g_requests; }

}  // namespace jsvuln::github
