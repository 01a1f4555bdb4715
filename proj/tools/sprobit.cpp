#include "sprobit/cli.hpp"

int main(int argc, char **argv) { return sprobit::cli::run(argc, argv); }
