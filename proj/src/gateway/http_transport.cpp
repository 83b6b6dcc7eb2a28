#include <httplib.h>

#include "gvgap/gateway/gateway.hpp"

namespace gvgap::gateway {
namespace {

class HttpTransport : public Transport {
 public:
  HttpResponse post_json(const std::string& base_url, const std::string& path, const std::string& body,
                         const std::map<std::string, std::string>& headers,
                         std::chrono::milliseconds timeout) override {
    // base_url may carry a path prefix (e.g. https://host/api/v1); the client
    // only takes scheme://host:port.
    std::string origin = base_url;
    std::string prefix;
    if (const auto scheme = base_url.find("://"); scheme != std::string::npos) {
      if (const auto slash = base_url.find('/', scheme + 3); slash != std::string::npos) {
        origin = base_url.substr(0, slash);
        prefix = base_url.substr(slash);
      }
    }
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    if (prefix.size() >= 3 && prefix.compare(prefix.size() - 3, 3, "/v1") == 0 && path.rfind("/v1/", 0) == 0) {
      prefix.resize(prefix.size() - 3);
    }
    const std::string full_path = prefix + path;
    httplib::Client client(origin);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());
    httplib::Headers h;
    std::string content_type = "application/json";
    for (const auto& [k, v] : headers) {
      if (k == "Content-Type") {
        content_type = v;
      } else {
        h.emplace(k, v);
      }
    }
    auto res = client.Post(full_path, h, body, content_type);
    if (!res) return HttpResponse{-1, httplib::to_string(res.error())};
    return HttpResponse{res->status, res->body};
  }
};

}  // namespace

std::shared_ptr<Transport> make_http_transport() { return std::make_shared<HttpTransport>(); }

}  // namespace gvgap::gateway
