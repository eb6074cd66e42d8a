#include "pins/cli.hpp"

int main(int argc, char** argv) { return pins::cli::run(argc, argv); }
