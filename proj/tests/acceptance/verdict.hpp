// Copyright 2026 The QGDF-PnP Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Shared reporting for the acceptance binaries: detail lines while running,
// then exactly one PASS or FAIL line for the criterion.

#ifndef PNP__TESTS__ACCEPTANCE__VERDICT_HPP_
#define PNP__TESTS__ACCEPTANCE__VERDICT_HPP_

#include <chrono>
#include <exception>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

namespace acceptance
{

class Verdict
{
public:
  Verdict(int id, std::string title) : id_(id), title_(std::move(title)), start_(std::chrono::steady_clock::now()) {}

  /// Records a failed requirement; the first few failures are printed.
  bool require(bool ok, const std::string & what)
  {
    ++checks_;
    if (!ok) {
      if (++failures_ <= 20) {
        std::cout << "  failed: " << what << '\n';
      }
    }
    return ok;
  }

  void detail(const std::string & line) const { std::cout << "  " << line << '\n'; }

  double seconds() const
  {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

  /// Prints the verdict line and returns the process exit code.
  int finish(const std::string & summary)
  {
    const bool ok = failures_ == 0 && checks_ > 0;
    std::ostringstream line;
    line << (ok ? "PASS" : "FAIL") << " criterion " << id_ << " (" << title_ << "): " << summary << "; "
         << checks_ - failures_ << '/' << checks_ << " checks, " << seconds() << " s";
    std::cout << line.str() << std::endl;
    return ok ? 0 : 1;
  }

  /// Runs `body`, turning an escaped exception into a failed verdict.
  int run(const std::function<std::string()> & body)
  {
    std::string summary;
    try {
      summary = body();
    } catch (const std::exception & e) {
      require(false, std::string("exception: ") + e.what());
      summary = "aborted";
    }
    return finish(summary);
  }

private:
  int id_;
  std::string title_;
  std::chrono::steady_clock::time_point start_;
  std::size_t checks_ = 0;
  std::size_t failures_ = 0;
};

inline std::string fmt(double v)
{
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

}  // namespace acceptance

#endif  // PNP__TESTS__ACCEPTANCE__VERDICT_HPP_
