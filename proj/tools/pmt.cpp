#include "pointmt/cli.hpp"

int main(int argc, char** argv) { return pointmt::run_cli(argc, argv); }
