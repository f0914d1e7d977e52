#include "xaigan/harness.hpp"

int main(int argc, char** argv) { return xaigan::harness::cli_main(argc, argv); }
