#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace delta {

/// Base class for all errors raised by this library.  The category maps onto
/// the process exit codes used by the command line driver.
class Error : public std::runtime_error {
public:
    enum class Category { config = 1, data = 2, refiner = 3, internal = 4 };

    Error(Category category, const std::string& message)
        : std::runtime_error(message), category_(category) {}

    Category category() const noexcept { return category_; }

private:
    Category category_;
};

/// Invalid configuration or command usage (exit code 1).
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& message)
        : Error(Category::config, message) {}
};

/// Malformed or inconsistent input data (exit code 2).
class DataError : public Error {
public:
    explicit DataError(const std::string& message)
        : Error(Category::data, message) {}
};

/// Refinement failures: transport errors, exhausted retries, invalid rules
/// (exit code 3).
class RefinerError : public Error {
public:
    explicit RefinerError(const std::string& message)
        : Error(Category::refiner, message) {}

    RefinerError(const std::string& message, std::vector<std::string> raw_responses)
        : Error(Category::refiner, message), raw_responses_(std::move(raw_responses)) {}

    /// Raw backend responses collected before giving up, for diagnosis.
    const std::vector<std::string>& raw_responses() const noexcept { return raw_responses_; }

private:
    std::vector<std::string> raw_responses_;
};

/// Internal invariant violations (exit code 4).
class InternalError : public Error {
public:
    explicit InternalError(const std::string& message)
        : Error(Category::internal, message) {}
};

}  // namespace delta
