// SPDX-License-Identifier: Apache-2.0
#include "layoutgen/cli.hpp"

int main(int argc, char** argv) { return layoutgen::cli_dispatch(argc, argv); }
