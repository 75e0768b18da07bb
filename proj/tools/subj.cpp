#include <subj/cli.hpp>

int main(int argc, char** argv) { return subj::run_cli(argc, argv); }
