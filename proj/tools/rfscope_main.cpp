// SPDX-License-Identifier: Apache-2.0
#include "rfscope/cli.hpp"

int main(int argc, char** argv) { return rfscope::run_cli(argc, argv); }
