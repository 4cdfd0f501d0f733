#pragma once

#include <stdexcept>
#include <string>

namespace relbias {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Error raised inside a pipeline stage; keeps the stage name and the
/// offending input path so the CLI can report where a run broke.
class StageError : public Error {
 public:
  StageError(const std::string& stage, const std::string& msg,
             const std::string& input = "")
      : Error(format(stage, msg, input)), stage_(stage), input_(input) {}

  const std::string& stage() const { return stage_; }
  const std::string& input() const { return input_; }

 private:
  static std::string format(const std::string& stage, const std::string& msg,
                            const std::string& input) {
    std::string out = "stage " + stage + ": " + msg;
    if (!input.empty()) out += " (input: " + input + ")";
    return out;
  }

  std::string stage_;
  std::string input_;
};

}  // namespace relbias
