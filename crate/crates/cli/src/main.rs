use std::io::Write;

use clap::Parser;

fn main() {
    let cli = nqs_geom::app::Cli::parse();
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    let code = nqs_geom::app::execute(&cli, &mut stdout.lock(), &mut stderr.lock());
    let _ = std::io::stdout().flush();
    std::process::exit(code);
}
