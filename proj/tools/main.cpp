#include "mvfhn/cli.hpp"

#include <iostream>

extern char** environ;

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::vector<std::string> env;
  for (char** e = environ; *e; ++e) env.emplace_back(*e);
  return mvfhn::run_cli(args, std::cout, std::cerr, env);
}
