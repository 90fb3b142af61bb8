#include "cli.hpp"

int main(int argc, char** argv) {
  return ovc::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
