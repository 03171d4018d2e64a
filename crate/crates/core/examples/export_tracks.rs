//! Regenerates the bundled track files under `tracks/`.

use l2r_core::track::{synth, BUNDLED_TRACKS};

fn main() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tracks");
    for name in BUNDLED_TRACKS {
        let spec = synth::generate(name).expect("bundled track has a generator");
        spec.validate().expect("generated track is valid");
        let path = dir.join(format!("{name}.json"));
        std::fs::write(&path, spec.to_json_string() + "\n").expect("write track");
        println!("{} ({} points)", path.display(), spec.centerline.len());
    }
}
