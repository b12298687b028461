#pragma once

#include <chrono>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

namespace cocole {

struct PromptRequest {
    std::string class_name;
    std::vector<std::string> concepts;

    nlohmann::json to_json() const;
};

class PromptGenerator {
public:
    virtual ~PromptGenerator() = default;
    virtual std::vector<std::string> generate(const PromptRequest& request) = 0;
    // Warnings recorded while generating (fallbacks, bad responses).
    virtual const std::vector<std::string>& warnings() const;

protected:
    std::vector<std::string> warnings_;
};

// prefix + class name + connector + concepts, e.g.
// "a photo of cat which is furry small".
class TemplatePromptGenerator : public PromptGenerator {
public:
    TemplatePromptGenerator() = default;
    TemplatePromptGenerator(std::vector<std::string> prefix, std::vector<std::string> connector)
        : prefix_(std::move(prefix)), connector_(std::move(connector)) {}

    std::vector<std::string> generate(const PromptRequest& request) override;

private:
    std::vector<std::string> prefix_ = {"a", "photo", "of"};
    std::vector<std::string> connector_ = {"which", "is"};
};

// Posts {class_name, concepts} as JSON to a local language-model service and
// expects {words: [...]} back. Any failure or timeout falls back to the
// template and records a warning.
class HttpPromptGenerator : public PromptGenerator {
public:
    explicit HttpPromptGenerator(std::string endpoint,
                                 std::chrono::milliseconds timeout = std::chrono::seconds(5),
                                 TemplatePromptGenerator fallback = {});

    std::vector<std::string> generate(const PromptRequest& request) override;

    const std::string& endpoint() const { return endpoint_; }

private:
    std::string endpoint_;
    std::chrono::milliseconds timeout_;
    TemplatePromptGenerator fallback_;
};

// Validates the request and runs the generator.
std::vector<std::string> generate_prompt(const std::string& class_name, const std::vector<std::string>& concepts,
                                         PromptGenerator& generator);

// HttpPromptGenerator when COCOLE_LLM_ENDPOINT is set, otherwise the template.
std::unique_ptr<PromptGenerator> generator_from_environment();

}  // namespace cocole
