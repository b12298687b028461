#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

namespace cocole {

struct GradcheckOptions {
    std::size_t seeds = 25;
    std::uint64_t first_seed = 0;
    double h = 1e-5;
    double tolerance = 1e-4;
};

// Autodiff vs central differences for ce, ma, or, cc and total at
// D=8, N=4, M=2, K3=2 over 3 classes.
struct GradcheckReport {
    GradcheckOptions options;
    std::map<std::string, double> max_relative_error;  // by loss name
    bool passed = false;
    double seconds = 0.0;

    nlohmann::json to_json() const;
};

GradcheckReport run_gradcheck(const GradcheckOptions& options = {});

struct SuiteResult {
    std::string name;
    bool passed = false;
    std::string detail;
    double seconds = 0.0;

    nlohmann::json to_json() const;
};

SuiteResult finite_difference_suite();
// Codebook top-K3 and cache top-K1/top-K2 against a full sort, with ties.
SuiteResult retrieval_oracle_suite(std::size_t cases = 300);
// Encoder weights unchanged by training; handcrafted features carry no grad.
SuiteResult frozenness_suite();

std::vector<SuiteResult> run_selftest();

}  // namespace cocole
