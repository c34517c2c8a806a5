#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "sofa/error.hpp"

namespace sofa::cli {

enum ExitCode : int {
  kOk = 0,
  kError = 1,
  kFlagged = 2,  // vanished run, failed sweep cell, landscape not single-peaked
  kUsage = 64,
  kNoInput = 66,
};

/// A required input file or directory is absent.
class MissingInput : public IoError {
 public:
  using IoError::IoError;
};

/// Entry point of the sofa tool; argv[0] is the program name.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
/// Same with the arguments after the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sofa::cli
