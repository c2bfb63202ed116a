#include "tbscreen/cli.hpp"

int main(int argc, char** argv) { return tbscreen::run_cli(argc, argv); }
