//! Model input: synthesized treble and bass chromagrams, their CHRO1 text
//! form, and the key-profile scores appended to every frame.
//!
//! cargo run --example features

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use serenade::features::{
    assemble_input, generate_progression, pitch_profile_scores, synth_excerpt_with, Chromagram,
    ProgressionConfig, SynthOptions,
};
use serenade::labels::{KeyQuality, PitchClass};

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let labels = generate_progression(32, &ProgressionConfig::default(), &mut rng);
    let options = SynthOptions {
        noise_sd: 0.1,
        tone_dropout: 0.2,
    };
    let (features, labels) = synth_excerpt_with(&labels, &options, 11);
    println!(
        "{} frames at hop {} s, {} input columns",
        features.frames(),
        features.hop(),
        features.matrix().cols()
    );

    let treble = features.treble();
    let text = treble.to_text();
    println!("\nfirst lines of the treble CHRO1 file:");
    for line in text.lines().take(4) {
        println!("  {line}");
    }
    let back = Chromagram::parse(&text).unwrap();
    let rebuilt = assemble_input(&back, &features.bass()).unwrap();
    println!(
        "text round trip preserves the input: {}",
        rebuilt == features
    );

    let scores = pitch_profile_scores(&treble);
    let best = (0..24)
        .max_by(|&a, &b| scores[a].total_cmp(&scores[b]))
        .unwrap();
    let quality = if best < 12 {
        KeyQuality::Major
    } else {
        KeyQuality::Minor
    };
    println!(
        "\nbest-scoring key profile: {} {:?} (annotated key of frame 0: {})",
        PitchClass::new((best % 12) as u8).name(),
        quality,
        labels[0].key_root().map_or("N", |k| k.name())
    );

    println!("\nframe  chord        strongest treble bins");
    for (t, label) in labels.iter().enumerate().step_by(4) {
        let row = &features.matrix().row(t)[..12];
        let mut bins: Vec<usize> = (0..12).collect();
        bins.sort_by(|&a, &b| row[b].total_cmp(&row[a]));
        let names: Vec<&str> = bins[..3]
            .iter()
            .map(|&b| PitchClass::new(b as u8).name())
            .collect();
        println!("{t:>5}  {:<12} {}", label.chord_label(), names.join(" "));
    }
}
