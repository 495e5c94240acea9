//! Generate a synthetic sequence so the pipeline can run without real data.
//!
//! Usage: gen_demo [ROOT] [SEQUENCE] [FRAMES] [WIDTH] [HEIGHT] [SEED]

use std::path::PathBuf;
use std::process::ExitCode;

use lvo_cli::synth::{generate_sequence, SynthSpec};

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let root = PathBuf::from(args.first().map(String::as_str).unwrap_or("demo-data"));
    let sequence = args.get(1).cloned().unwrap_or_else(|| "00".into());
    let mut spec = SynthSpec {
        frames: 40,
        width: 64,
        height: 32,
        ..SynthSpec::default()
    };
    let numeric = [
        (&mut spec.frames, args.get(2)),
        (&mut spec.width, args.get(3)),
        (&mut spec.height, args.get(4)),
    ];
    for (slot, arg) in numeric {
        if let Some(a) = arg {
            match a.parse() {
                Ok(v) => *slot = v,
                Err(_) => {
                    eprintln!("error: not a number: {a}");
                    return ExitCode::from(2);
                }
            }
        }
    }
    if let Some(a) = args.get(5) {
        match a.parse() {
            Ok(v) => spec.seed = v,
            Err(_) => {
                eprintln!("error: not a number: {a}");
                return ExitCode::from(2);
            }
        }
    }

    match generate_sequence(&root, &sequence, &spec) {
        Ok(()) => {
            println!(
                "wrote {} frames ({}x{}) to {}",
                spec.frames,
                spec.width,
                spec.height,
                root.join(&sequence).display()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(lvo_cli::exit_code(&e) as u8)
        }
    }
}
