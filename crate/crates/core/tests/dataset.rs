use std::fs::OpenOptions;

use l2r_core::camera::CameraConfig;
use l2r_core::control::{MpcAgent, MpcConfig, RandomAgent};
use l2r_core::dataset::{
    read_manifest, read_session, record_session, replay_episode, DatasetError, SessionManifest, SessionReader,
    SessionWriter, StepRecord, FIXED_RECORD_BYTES, RECORDS_FILE, SCHEMA_VERSION,
};
use l2r_core::observation::{slot, OBS_DIM};
use l2r_core::sim::{EpisodeConfig, Simulator};
use l2r_core::trajectory::TerminationReason;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_record(rng: &mut ChaCha8Rng, image_bytes: usize) -> StepRecord {
    let mut multimodal = [0.0; OBS_DIM];
    for m in multimodal.iter_mut() {
        // Raw bit patterns exercise subnormals, infinities and signed zero.
        *m = if rng.gen_bool(0.1) { f64::from_bits(rng.gen()) } else { rng.gen_range(-1e3..1e3) };
    }
    StepRecord {
        sim_time: rng.gen_range(0.0..1e4),
        multimodal,
        action: [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
        image: (0..image_bytes).map(|_| rng.gen()).collect(),
    }
}

fn bits(r: &StepRecord) -> Vec<u64> {
    std::iter::once(r.sim_time)
        .chain(r.multimodal)
        .chain(r.action)
        .map(f64::to_bits)
        .collect()
}

fn write_session(dir: &std::path::Path, config: &EpisodeConfig, records: &[StepRecord]) -> SessionManifest {
    let mut w = SessionWriter::create(dir, SessionManifest::new(config, "test")).unwrap();
    w.begin_episode();
    for r in records {
        w.write(r).unwrap();
    }
    w.end_episode(TerminationReason::LapsComplete);
    w.finish().unwrap()
}

#[test]
fn random_records_round_trip_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let records: Vec<StepRecord> = (0..1000).map(|_| random_record(&mut rng, 0)).collect();
    let manifest = write_session(dir.path(), &EpisodeConfig::default(), &records);
    assert_eq!(manifest.record_count, 1000);
    assert_eq!(manifest.schema_version, SCHEMA_VERSION);
    let size = std::fs::metadata(dir.path().join(RECORDS_FILE)).unwrap().len();
    assert_eq!(size, 1000 * (4 + FIXED_RECORD_BYTES as u64));
    let (m, back) = read_session(dir.path()).unwrap();
    assert_eq!(m, manifest);
    assert_eq!(back.len(), records.len());
    for (a, b) in records.iter().zip(&back) {
        assert_eq!(bits(a), bits(b));
        assert_eq!(a.image, b.image);
    }
}

#[test]
fn images_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let camera = CameraConfig {
        enabled: true,
        width: 8,
        height: 6,
        window: 20.0,
    };
    let config = EpisodeConfig {
        camera,
        ..EpisodeConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let records: Vec<StepRecord> = (0..20).map(|_| random_record(&mut rng, camera.frame_bytes())).collect();
    write_session(dir.path(), &config, &records);
    let (_, back) = read_session(dir.path()).unwrap();
    assert_eq!(back, records);
}

#[test]
fn wrong_image_size_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut w = SessionWriter::create(dir.path(), SessionManifest::new(&EpisodeConfig::default(), "test")).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    assert!(matches!(w.write(&random_record(&mut rng, 3)), Err(DatasetError::ImageSize { .. })));
}

#[test]
fn truncated_file_fails_at_first_incomplete_record() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let records: Vec<StepRecord> = (0..10).map(|_| random_record(&mut rng, 0)).collect();
    write_session(dir.path(), &EpisodeConfig::default(), &records);
    let path = dir.path().join(RECORDS_FILE);
    let full = std::fs::metadata(&path).unwrap().len();
    OpenOptions::new().write(true).open(&path).unwrap().set_len(full - 100).unwrap();
    let mut reader = SessionReader::open(dir.path()).unwrap();
    for expected in records.iter().take(9) {
        assert_eq!(&reader.next().unwrap().unwrap(), expected);
    }
    assert!(matches!(reader.next(), Some(Err(DatasetError::Corrupt { index: 9, .. }))));
    assert!(reader.next().is_none());
    assert!(read_session(dir.path()).is_err());
}

#[test]
fn missing_records_are_a_count_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let records: Vec<StepRecord> = (0..4).map(|_| random_record(&mut rng, 0)).collect();
    write_session(dir.path(), &EpisodeConfig::default(), &records);
    let path = dir.path().join(RECORDS_FILE);
    OpenOptions::new()
        .write(true)
        .open(&path)
        .unwrap()
        .set_len(3 * (4 + FIXED_RECORD_BYTES as u64))
        .unwrap();
    assert!(matches!(read_session(dir.path()), Err(DatasetError::CountMismatch { declared: 4, found: 3 })));
}

#[test]
fn zero_step_session() {
    let dir = tempfile::tempdir().unwrap();
    let w = SessionWriter::create(dir.path(), SessionManifest::new(&EpisodeConfig::default(), "none")).unwrap();
    let m = w.finish().unwrap();
    assert_eq!(m.record_count, 0);
    assert_eq!(std::fs::metadata(dir.path().join(RECORDS_FILE)).unwrap().len(), 0);
    let (m2, records) = read_session(dir.path()).unwrap();
    assert_eq!(m2, m);
    assert!(records.is_empty());
}

#[test]
fn mpc_lap_record_count_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let config = EpisodeConfig {
        laps_required: 1,
        ..EpisodeConfig::default()
    };
    let mut sim = Simulator::new(config).unwrap();
    let mut agent = MpcAgent::new(MpcConfig::matched(), sim.track().clone()).unwrap();
    let manifest = record_session(&mut sim, &mut agent, 1, dir.path()).unwrap();
    let n = manifest.record_count as f64;
    assert!((n - 471.0).abs() <= 0.05 * 471.0, "{n}");
    assert_eq!(manifest.episodes.len(), 1);
    assert_eq!(manifest.episodes[0].termination_reason, TerminationReason::LapsComplete);
    assert!(!manifest.truncated);
    assert_eq!(read_manifest(dir.path()).unwrap(), manifest);

    let (manifest, records) = read_session(dir.path()).unwrap();
    let replayed = replay_episode(&manifest, &records, 0).unwrap();
    assert_eq!(replayed.len(), records.len());
    for (obs, rec) in replayed.iter().zip(&records) {
        for k in [slot::CENTER_X, slot::CENTER_Y, slot::YAW, slot::VELOCITY] {
            assert!((obs.multimodal[k] - rec.multimodal[k]).abs() < 1e-9);
        }
        assert_eq!(obs.sim_time, rec.sim_time);
    }
}

#[test]
fn multi_episode_boundaries() {
    let dir = tempfile::tempdir().unwrap();
    let mut sim = Simulator::new(EpisodeConfig::default()).unwrap();
    let mut agent = RandomAgent::new(3);
    let manifest = record_session(&mut sim, &mut agent, 3, dir.path()).unwrap();
    assert_eq!(manifest.episodes.len(), 3);
    let mut next = 0;
    for e in &manifest.episodes {
        assert_eq!(e.first_record, next);
        assert!(e.record_count > 0);
        next += e.record_count;
    }
    assert_eq!(next, manifest.record_count);
    let (_, records) = read_session(dir.path()).unwrap();
    let e = &manifest.episodes[2];
    assert_eq!(records[e.first_record as usize].sim_time, 0.0);
}
