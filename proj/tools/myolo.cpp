// Copyright 2026 The myolo Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "myolo/cli.hpp"

int main(int argc, char** argv) { return myolo::run_cli(argc, argv, std::cout, std::cerr); }
