#include "flownet/commands.hpp"

int main(int argc, char** argv) { return flownet::run_cli(argc, argv); }
