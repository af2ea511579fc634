// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace hgfm
{
	/// Runs one command. `args` excludes the program name. Returns 0 on success, 1 on a
	/// validation error and 2 on any other failure; errors are written to `err` as one JSON line.
	int run_cli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);
}
