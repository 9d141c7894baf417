// Copyright 2026 The CUCN Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "cucn/cli.hpp"

int main(int argc, char** argv) { return cucn::cli::cli_main(argc, argv, std::cout, std::cerr); }
