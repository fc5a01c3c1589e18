#include "csformer/cli.hpp"

int main(int argc, char** argv) { return csformer::run_cli(argc, argv); }
