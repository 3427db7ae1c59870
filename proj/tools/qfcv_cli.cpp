#include <string>
#include <vector>

#include "qfcv/cli.hpp"

int main(int argc, char** argv) {
  return qfcv::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
