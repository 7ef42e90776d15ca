#ifndef BLOCKPIPE_CLI_HPP_
#define BLOCKPIPE_CLI_HPP_

#include <iosfwd>
#include <string>
#include <vector>

namespace blockpipe {

// Entry point behind tools/main.cpp, parameterized on streams so tests can
// drive it in-process. args excludes the program name.
// Exit codes: 0 success, 1 verification failure, 2 config error, 3 I/O error.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace blockpipe

#endif  // BLOCKPIPE_CLI_HPP_
