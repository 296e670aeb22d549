// Summary statistics of angular errors.

use ccnet::eval::{statistics, PUBLISHED_GEHLER_SHI};

pub fn run_example() -> ccnet::Result<()> {
    let errors = [0.4, 1.1, 0.9, 2.7, 1.6, 0.2, 5.3, 1.4, 3.8];
    let s = statistics(&errors)?;
    println!("n = {}", s.count);
    println!("mean {:.3}, median {:.3}, trimean {:.3}", s.mean, s.median, s.trimean);
    println!("best 25% {:.3}, worst 25% {:.3}", s.best25, s.worst25);
    let [mean, median, trimean, best, worst] = PUBLISHED_GEHLER_SHI;
    println!("published full-scale reference: {mean} / {median} / {trimean} / {best} / {worst}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> ccnet::Result<()> {
    run_example()
}
