#include "covidscreen/cli.hpp"

int main(int argc, char** argv) {
  return covidscreen::run_cli(argc, argv);
}
