#include "sslhar/cli.hpp"

int main(int argc, char** argv) { return sslhar::cli::run(argc, argv); }
