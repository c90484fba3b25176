use geoctl_cli::{parse, run, Parsed};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match parse(std::env::args_os()) {
        Parsed::Run(cli) => cli,
        Parsed::Exit(code, text) => {
            if code == 0 {
                print!("{text}");
            } else {
                eprint!("{text}");
            }
            std::process::exit(code);
        }
    };
    if let Err(e) = run(&cli) {
        eprintln!("geoctl: {e}");
        std::process::exit(e.exit_code());
    }
}
