#include <string>
#include <vector>

#include "dcsl_cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return dcsl::cli::run(std::move(args));
}
