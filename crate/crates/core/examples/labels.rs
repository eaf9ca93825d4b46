//! Chord and key labels: Harte parsing, reduction to the model's quality
//! vocabulary, and the six-part frame encoding.
//!
//! cargo run --example labels

use serenade::labels::{
    frames_from_intervals, parse_chord_label, parse_lab, reduce_quality, SubLabel,
};

const CHORDS: &str = "\
0.0 1.0 C:maj
1.0 2.0 A:min7
2.0 2.5 D:min7/b7
2.5 3.0 G:7
3.0 4.0 C:maj/3
4.0 4.5 N
";

const KEYS: &str = "0.0 4.5 C:major\n";

fn main() {
    for text in ["C:maj", "Bb:min7/b3", "F#:hdim7", "E:sus4(b7)", "G:9", "N"] {
        let p = parse_chord_label(text).unwrap();
        let reduced = reduce_quality(&p.quality).unwrap();
        println!(
            "{text:<12} root {:<3} quality {:<5} bass +{}",
            p.root.map_or("N", |r| r.name()),
            reduced.harte(),
            p.bass_interval
        );
    }

    let chords = parse_lab(CHORDS).unwrap();
    let keys = parse_lab(KEYS).unwrap();
    let hop = 0.5;
    let frames = frames_from_intervals(&chords, &keys, hop, 9).unwrap();
    println!();
    print!("{:>5} {:<10}", "time", "chord");
    for sub in SubLabel::ALL {
        print!(" {:>13}", sub.name());
    }
    println!();
    for (t, label) in frames.iter().enumerate() {
        print!("{:>5.2} {:<10}", t as f64 * hop, label.chord_label());
        for sub in SubLabel::ALL {
            print!(" {:>13}", sub.class_name(label.class(sub)));
        }
        println!();
    }
}
