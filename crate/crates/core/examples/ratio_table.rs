//! R1 and R2 for a few (NB, NA) pairs over an exposed population of 9093.

use adrsig::stats::{format_2dp, ratio_stats};

fn main() -> Result<(), adrsig::stats::StatsError> {
    let rows = [
        ("IZ12.00", 133, 623),
        ("I71..00", 196, 765),
        ("16J..00", 1, 43),
        ("1C6..00", 0, 20),
        ("C10FJ00", 4, 61),
        ("B76..00", 15, 73),
    ];
    println!("readcode\tNB\tNA\tR1\tR2");
    for (code, nb, na) in rows {
        let r = ratio_stats(nb, na, 9093)?;
        println!("{code}\t{nb}\t{na}\t{}\t{}", format_2dp(r.r1), format_2dp(r.r2_percent));
    }
    Ok(())
}
