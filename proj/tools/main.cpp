#include <string>
#include <vector>

#include "vmsched/cli.hpp"

int main(int argc, char** argv) {
  return vmsched::run_command(std::vector<std::string>(argv, argv + argc));
}
