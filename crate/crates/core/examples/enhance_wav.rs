//! Enhances a WAV file with a saved checkpoint.
//!
//! `cargo run --release --example enhance_wav -- model.bin noisy.wav out.wav [lips.lips]`

use avse::data::read_lips;
use avse::dsp::{read_wav, write_wav};
use avse::eval::enhance;
use avse::models::load_checkpoint;

fn main() -> avse::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.len() < 3 {
        eprintln!("usage: enhance_wav <checkpoint> <noisy.wav> <out.wav> [lips]");
        std::process::exit(2);
    }
    let checkpoint = load_checkpoint(&args[0])?;
    let noisy = read_wav(&args[1])?;
    let lips = args.get(3).map(read_lips).transpose()?;
    let out = enhance(&checkpoint, &noisy, lips.as_ref())?;
    write_wav(&args[2], &out.signal)?;
    println!(
        "{}: {} frames, {:.2} s, peak {:.3}",
        checkpoint.model.config().kind.name(),
        out.log_power.len() / avse::dsp::N_BINS,
        out.signal.duration_secs(),
        out.signal.peak()
    );
    Ok(())
}
