#include "mechsqueeze/cli.hpp"

int main(int argc, char** argv) { return mechsqueeze::run_cli(argc, argv); }
