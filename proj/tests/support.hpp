#pragma once

// Hand-rolled generators and small shared fixtures for the test suite.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "detm/config.hpp"
#include "detm/models.hpp"

namespace testing_support {

class Gen {
public:
    explicit Gen(std::uint64_t seed) : rng_(seed) {}

    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
    int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
    bool coin(double p = 0.5) { return uniform(0.0, 1.0) < p; }
    template <class T>
    const T& pick(const std::vector<T>& v) {
        return v[static_cast<std::size_t>(integer(0, static_cast<int>(v.size()) - 1))];
    }

    /// Short decimal literal such as "3", "0.25" or "1.5e-1".
    std::string literal() {
        std::string s = std::to_string(integer(0, 99));
        if (coin()) s += "." + std::to_string(integer(0, 999));
        if (coin(0.15)) s += "e" + std::string(coin() ? "-" : "") + std::to_string(integer(0, 2));
        return s;
    }

    /// Random well-formed infix source over `vars`.
    std::string expression(int depth, const std::vector<std::string>& vars) {
        if (depth <= 0 || coin(0.2)) return coin(0.5) ? pick(vars) : literal();
        switch (integer(0, 6)) {
            case 0:
                return "-" + operand(depth - 1, vars);
            case 1:
            case 2: {
                static const std::vector<std::string> ops = {"+", "-", "*", "/"};
                return expression(depth - 1, vars) + " " + pick(ops) + " " + operand(depth - 1, vars);
            }
            case 3:
                return operand(depth - 1, vars) + "^" + (coin() ? std::to_string(integer(0, 3)) : operand(0, vars));
            case 4: {
                static const std::vector<std::string> fns = {"sin", "cos", "tan", "exp", "abs", "sqrt", "ln"};
                return pick(fns) + "(" + expression(depth - 1, vars) + ")";
            }
            case 5: {
                static const std::vector<std::string> fns = {"min", "max", "pow"};
                return pick(fns) + "(" + expression(depth - 1, vars) + ", " + expression(depth - 1, vars) + ")";
            }
            default:
                return "(" + expression(depth - 1, vars) + ")";
        }
    }

    std::mt19937_64& engine() { return rng_; }

private:
    std::string operand(int depth, const std::vector<std::string>& vars) {
        return "(" + expression(depth, vars) + ")";
    }

    std::mt19937_64 rng_;
};

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("detm_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline bool relative_close(double a, double b, double rel) {
    return std::abs(a - b) <= rel * std::max(std::abs(a), std::abs(b));
}

}  // namespace testing_support
