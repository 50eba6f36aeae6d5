// bsnerf — broadband spectral radiance fields for snapshot multispectral light-field data
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <random>
#include <stdexcept>
#include <string>

namespace bsnerf {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

// ---------------------------------------------------------------------------
// Logging. BSNERF_LOG=debug|info|warn|error (default warn).

enum class LogLevel { Debug = 0, Info = 1, Warn = 2, Error = 3 };

inline LogLevel log_level() {
    static LogLevel lvl = [] {
        const char* s = std::getenv("BSNERF_LOG");
        if (!s) return LogLevel::Warn;
        if (std::strcmp(s, "debug") == 0) return LogLevel::Debug;
        if (std::strcmp(s, "info") == 0) return LogLevel::Info;
        if (std::strcmp(s, "error") == 0) return LogLevel::Error;
        return LogLevel::Warn;
    }();
    return lvl;
}

template <typename... Args>
void logmsg(LogLevel lvl, const char* fmt, Args... args) {
    if (lvl < log_level()) return;
    static const char* names[] = {"debug", "info", "warn", "error"};
    std::fprintf(stderr, "[bsnerf:%s] ", names[static_cast<int>(lvl)]);
    std::fprintf(stderr, fmt, args...);
    std::fprintf(stderr, "\n");
}

// ---------------------------------------------------------------------------
// Seeded RNG. One generator owned per pipeline stage; never global.

class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    double uniform() { return dist_(gen_); }
    double uniform(double lo, double hi) { return lo + (hi - lo) * dist_(gen_); }
    double normal() { return normal_(gen_); }
    std::uint64_t integer(std::uint64_t n) {
        return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(gen_);
    }
    std::mt19937_64& engine() { return gen_; }

  private:
    std::mt19937_64 gen_;
    std::uniform_real_distribution<double> dist_{0.0, 1.0};
    std::normal_distribution<double> normal_{0.0, 1.0};
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

}  // namespace bsnerf
