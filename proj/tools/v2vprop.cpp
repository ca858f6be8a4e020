#include "v2vprop/cli.hpp"

int main(int argc, char** argv)
{
    return v2vprop::run_cli(argc, argv);
}
