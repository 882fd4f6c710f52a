#include "voldev/cli.hpp"

int main(int argc, char** argv) { return voldev::cli::run(argc, argv); }
