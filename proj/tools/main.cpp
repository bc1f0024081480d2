/* SPDX-FileCopyrightText: 2026 Lightslab Authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#include "lightslab/cli.hpp"

#include <iostream>

int main(int argc, char** argv) {
    return lightslab::run_cli(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
