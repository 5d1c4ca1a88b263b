fn main() {
    std::process::exit(incident_eval::cli::main());
}
