// CLI entry point; subcommands land here as the library fills out.
#include <cstdio>

int main() {
    std::puts("ovfs: not wired up yet");
    return 1;
}
