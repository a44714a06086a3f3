// SPDX-License-Identifier: Apache-2.0
#include "gsmind/cli.hpp"

int main(int argc, char **argv) { return gsmind::run_cli(argc, argv); }
