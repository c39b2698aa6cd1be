#include "hmdr/cli.hpp"

int main(int argc, char** argv) {
  return hmdr::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
