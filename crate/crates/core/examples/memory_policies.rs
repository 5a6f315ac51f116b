//! Which earlier frames each history policy keeps, step by step.

use airnav::memory::{pis_offsets, select_history, MemoryKind, MemoryPolicy};

fn main() {
    let frames = 4;
    println!("PIS offsets for N={frames}: {:?}\n", pis_offsets(frames));
    print!("{:>3}", "t");
    for kind in MemoryKind::ALL {
        print!("  {:<16}", kind.name());
    }
    println!();
    for t in 1..=16 {
        print!("{t:>3}");
        for kind in MemoryKind::ALL {
            let picked = select_history(MemoryPolicy::new(kind, frames), t);
            print!("  {:<16}", format!("{picked:?}"));
        }
        println!();
    }
}
