// SPDX-License-Identifier: Apache-2.0

#include "wdgnas/cli.hpp"

int main(int argc, char** argv) { return wdgnas::cli::run(argc, argv); }
