#include "http_util.hpp"

#include "zpd/providers.hpp"

#include <httplib.h>

#include <stdexcept>

namespace zpd::detail {

namespace {

// Split "http://host:port/path" into (origin, path).
std::pair<std::string, std::string> split_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
        throw ProviderError("malformed URL (missing scheme): " + url, false);
    auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

HttpResponse classify(const httplib::Result& res, const std::string& url) {
    if (!res)
        throw ProviderError("transport failure contacting " + url + ": " +
                                httplib::to_string(res.error()),
                            true);
    if (res->status == 429 || res->status >= 500)
        throw ProviderError("HTTP " + std::to_string(res->status) + " from " + url, true);
    if (res->status < 200 || res->status >= 300)
        throw ProviderError("HTTP " + std::to_string(res->status) + " from " + url + ": " +
                                res->body,
                            false);
    return {res->status, res->body};
}

httplib::Headers to_httplib(const Headers& headers) {
    httplib::Headers h;
    for (const auto& [k, v] : headers) h.emplace(k, v);
    return h;
}

}  // namespace

HttpResponse http_post_json(const std::string& url, const std::string& json_body,
                            const Headers& headers) {
    auto [origin, path] = split_url(url);
    httplib::Client client(origin);
    client.set_connection_timeout(30);
    client.set_read_timeout(300);
    auto res = client.Post(path, to_httplib(headers), json_body, "application/json");
    return classify(res, url);
}

HttpResponse http_get(const std::string& url, const Headers& headers) {
    auto [origin, path] = split_url(url);
    httplib::Client client(origin);
    client.set_connection_timeout(30);
    client.set_read_timeout(300);
    auto res = client.Get(path, to_httplib(headers));
    return classify(res, url);
}

}  // namespace zpd::detail
