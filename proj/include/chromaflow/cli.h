#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "chromaflow/pipeline.h"

namespace chromaflow::cli {

enum class Mode { kSingle, kMulti, kColorize, kSelectRefs };

struct CliConfig {
  Mode mode = Mode::kSingle;
  std::string source;
  std::vector<std::string> references;
  std::string refs_dir;
  std::string out;
  std::string features_src;
  std::vector<std::string> features_ref;
  std::string exporter_cmd;
  std::string workdir = "chromaflow_work";
  std::string config_file;
  int count = 5;
  bool dump_artifacts = false;
  PipelineConfig pipeline;
};

// Bad flags or an inconsistent mode/path combination. what() holds the
// diagnostic, usage() the help text.
class UsageError : public std::runtime_error {
 public:
  UsageError(const std::string& what, std::string usage)
      : std::runtime_error(what), usage_(std::move(usage)) {}
  const std::string& usage() const { return usage_; }

 private:
  std::string usage_;
};

// Thrown for --help; message() holds the help text.
class HelpRequested : public std::runtime_error {
 public:
  explicit HelpRequested(const std::string& text) : std::runtime_error(text) {}
};

// Parses arguments (without the program name). Values come from the command
// line, then the --config file (or $CHROMAFLOW_CONFIG), then built-in defaults.
CliConfig parse_args(const std::vector<std::string>& args);

// Full front end. Returns 0 on success, 2 on argument errors, 1 on runtime
// failures.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace chromaflow::cli
