// SPDX-License-Identifier: Apache-2.0
#pragma once

namespace rfscope {

// Entry point behind the rfscope binary. Exit codes: 0 success, 1 check
// failure (gradcheck above tolerance), 2 usage or validation error, 3
// degenerate data (e.g. all-zero gradient map).
int run_cli(int argc, const char* const* argv);

}  // namespace rfscope
