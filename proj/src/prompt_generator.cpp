#include "cocole/prompt_generator.hpp"

#include <cstdlib>
#include <regex>

#include "httplib.h"

#include "cocole/encoders.hpp"
#include "cocole/error.hpp"

namespace cocole {

using nlohmann::json;

json PromptRequest::to_json() const { return {{"class_name", class_name}, {"concepts", concepts}}; }

const std::vector<std::string>& PromptGenerator::warnings() const { return warnings_; }

std::vector<std::string> TemplatePromptGenerator::generate(const PromptRequest& request) {
    std::vector<std::string> words = prefix_;
    words.push_back(request.class_name);
    words.insert(words.end(), connector_.begin(), connector_.end());
    words.insert(words.end(), request.concepts.begin(), request.concepts.end());
    return words;
}

HttpPromptGenerator::HttpPromptGenerator(std::string endpoint, std::chrono::milliseconds timeout,
                                         TemplatePromptGenerator fallback)
    : endpoint_(std::move(endpoint)), timeout_(timeout), fallback_(std::move(fallback)) {}

namespace {

struct Url {
    std::string base;  // scheme://host:port
    std::string path;
};

Url split_url(const std::string& endpoint) {
    static const std::regex re(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    require(std::regex_match(endpoint, m, re), ErrorKind::kConfig, "invalid generator endpoint: " + endpoint);
    return {m[1].str(), m[2].matched ? m[2].str() : std::string("/")};
}

std::vector<std::string> parse_words(const std::string& body) {
    auto doc = json::parse(body);
    const auto& arr = doc.at("words");
    std::vector<std::string> words;
    for (const auto& w : arr)
        for (auto& token : tokenize(w.get<std::string>())) words.push_back(std::move(token));
    if (words.empty()) throw std::runtime_error("response has no words");
    return words;
}

}  // namespace

std::vector<std::string> HttpPromptGenerator::generate(const PromptRequest& request) {
    try {
        const auto url = split_url(endpoint_);
        httplib::Client client(url.base);
        const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
        const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
        client.set_connection_timeout(secs.count(), usecs.count());
        client.set_read_timeout(secs.count(), usecs.count());
        client.set_write_timeout(secs.count(), usecs.count());
        auto res = client.Post(url.path, request.to_json().dump(), "application/json");
        if (!res) throw std::runtime_error("request failed: " + httplib::to_string(res.error()));
        if (res->status != 200) throw std::runtime_error("HTTP status " + std::to_string(res->status));
        return parse_words(res->body);
    } catch (const std::exception& e) {
        warnings_.push_back("prompt generator at " + endpoint_ + " failed for class '" + request.class_name +
                            "' (" + e.what() + "); used template");
        return fallback_.generate(request);
    }
}

std::vector<std::string> generate_prompt(const std::string& class_name, const std::vector<std::string>& concepts,
                                         PromptGenerator& generator) {
    require(!class_name.empty(), ErrorKind::kContract, "generate_prompt: empty class name");
    require(!concepts.empty(), ErrorKind::kContract, "generate_prompt: empty concept list");
    return generator.generate({class_name, concepts});
}

std::unique_ptr<PromptGenerator> generator_from_environment() {
    const char* endpoint = std::getenv("COCOLE_LLM_ENDPOINT");
    if (endpoint && *endpoint) return std::make_unique<HttpPromptGenerator>(endpoint);
    return std::make_unique<TemplatePromptGenerator>();
}

}  // namespace cocole
