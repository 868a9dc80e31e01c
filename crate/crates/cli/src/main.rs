use clap::Parser;

use cellfree_fdd::args::Cli;

fn main() {
    let cli = Cli::parse();
    match cellfree_fdd::run(&cli) {
        Ok(Some(m)) => {
            let rows: usize = m.files.iter().map(|f| f.rows).sum();
            eprintln!("{}: wrote {} file(s), {rows} row(s)", m.experiment, m.files.len());
        }
        Ok(None) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
