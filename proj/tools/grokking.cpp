#include "grok/cli.hpp"

int main(int argc, char** argv) {
    grok::tune_allocator();
    return grok::cli::run(argc, argv);
}
