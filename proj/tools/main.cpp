#include "fmc/cli.hpp"

int main(int argc, char** argv) { return fmc::dispatch(argc, argv); }
