#pragma once

namespace covidscreen {

// Full command-line surface. Returns the process exit code: 0 on success,
// 2 on usage errors, 1 on runtime failure.
int run_cli(int argc, const char* const* argv);

}  // namespace covidscreen
