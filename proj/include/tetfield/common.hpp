#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace tetfield {

using Vec3 = Eigen::Vector3d;

enum class ErrorCode {
  invalid_parameter,
  resource_limit,
  version_mismatch,
  truncated_file,
  parse_error,
  shape_mismatch,
  numeric_error,
  io_error,
  empty_input,
};

const char* to_string(ErrorCode code);

/// Single exception type for the library; `code()` distinguishes failure kinds.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what);
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& what);

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

// Warnings go through a replaceable sink so tests and the CLI can capture them.
using WarningSink = std::function<void(const std::string&)>;
void set_warning_sink(WarningSink sink);
void warn(const std::string& message);

// Worker count for data-parallel kernels. 0 selects hardware concurrency.
void set_thread_count(unsigned n);
unsigned thread_count();

/// Asks the C allocator to keep freed blocks instead of returning them to the
/// OS. Training allocates and frees many multi-megabyte activations per step,
/// and the page faults on fresh mappings otherwise dominate. No-op off glibc.
void retain_freed_memory();

/// Runs fn(begin, end) over disjoint contiguous chunks of [0, n).
/// Results must not depend on the chunking; callers only write to
/// per-index outputs.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn,
                  std::size_t min_chunk = 256);

/// Neumaier-compensated sum.
class CompensatedSum {
 public:
  void add(double x);
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

double signed_tet_volume(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d);

}  // namespace tetfield
