#include "edisc/cli.hpp"

int main(int argc, char** argv) { return edisc::cli::run(argc, argv); }
