#pragma once

namespace v2vprop {

// Entry point of the v2vprop command line tool. Returns the process exit
// code: 0 success, 1 computation failure, 2 usage or I/O error.
int run_cli(int argc, const char* const* argv);

}  // namespace v2vprop
