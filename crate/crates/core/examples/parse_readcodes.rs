//! Parse Read codes and collapse them to level 3.
//!
//! cargo run --example parse_readcodes -- N245111 IZ12.00 D....00

use adrsig::prelude::*;

fn main() {
    let mut args: Vec<String> = std::env::args().skip(1).collect();
    if args.is_empty() {
        args = [
            "N24..00", "N245.00", "N245100", "N245111", "SL...15", "1Z12.00", "N.245.0",
        ]
        .map(String::from)
        .to_vec();
    }
    println!(
        "{:<8} {:>5} {:<6} {:<4} {:<8} chapter",
        "code", "level", "core", "term", "level3"
    );
    for raw in &args {
        match parse_readcode(raw) {
            Ok(c) => println!(
                "{:<8} {:>5} {:<6} {:<4} {:<8} {}",
                c.as_str(),
                c.level(),
                c.core(),
                c.term(),
                to_level3_key(&c).as_str(),
                c.chapter()
            ),
            Err(e) => println!("{raw:<8} rejected: {e}"),
        }
    }
}
