#include "mixedctrl/cli.hpp"

int main(int argc, char** argv) { return mixedctrl::cli::execute(argc, argv); }
