#pragma once

#include <string>
#include <utility>
#include <vector>

namespace zpd::detail {

struct HttpResponse {
    int status = 0;
    std::string body;
};

using Headers = std::vector<std::pair<std::string, std::string>>;

/// POST with a JSON body. Connection-level failures raise retryable
/// ProviderError; 429/5xx raise retryable, other non-2xx non-retryable.
HttpResponse http_post_json(const std::string& url, const std::string& json_body,
                            const Headers& headers);

HttpResponse http_get(const std::string& url, const Headers& headers);

}  // namespace zpd::detail
