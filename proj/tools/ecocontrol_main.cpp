#include "ecocontrol/cli.hpp"

int main(int argc, char** argv) { return ecocontrol::run_cli(argc, argv); }
