#include "fe/app/cli.hpp"

int main(int argc, char** argv) { return fe::app::cli_main(argc, argv); }
