#pragma once

#include <string>
#include <vector>

namespace gridpose::selfcheck {

struct Check {
    std::string name;
    bool ok = false;
    std::string detail;
};

/// Runs one of the built-in verification suites:
///   gradcheck - finite-difference checks of every layer primitive and a
///               tiny end-to-end network
///   oracle    - brute-force convolution and padding comparisons
///   roundtrip - SGT algebra (round trips, constraints, replica means)
///   all       - everything above
std::vector<Check> run_suite(const std::string& suite);

}  // namespace gridpose::selfcheck
