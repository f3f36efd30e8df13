fn main() {
    // CLI wired up once pipeline stages land.
}
