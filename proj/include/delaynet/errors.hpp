#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace delaynet {

class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// NaN/Inf encountered while simulating or differentiating.
class NumericalDivergence : public std::runtime_error {
public:
    NumericalDivergence(const std::string& what, std::size_t timestep)
        : std::runtime_error(what + " (timestep " + std::to_string(timestep) + ")"),
          timestep_(timestep) {}

    std::size_t timestep() const noexcept { return timestep_; }

private:
    std::size_t timestep_;
};

class IoError : public std::runtime_error {
public:
    IoError(const std::string& path, const std::string& what)
        : std::runtime_error(path + ": " + what), path_(path) {}

    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

} // namespace delaynet
