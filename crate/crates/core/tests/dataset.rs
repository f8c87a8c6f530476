mod common;

use std::fs;
use std::path::Path;

use common::Lcg;
use proptest::prelude::*;
use topocnn::dataset::{
    config_fingerprint, generate_dataset, make_input_image, read_manifest, read_pgm, write_manifest, write_pgm, Image,
    Manifest, ManifestRecord, VfSweep, MANIFEST_FILE,
};
use topocnn::problems::{ProblemConfig, ProblemKind};
use topocnn::Error;

#[test]
fn input_image_fills_bottom_rows() {
    let img = make_input_image(0.25, 100, 100).unwrap();
    for y in 0..100 {
        for x in 0..100 {
            assert_eq!(img.get(x, y), if y >= 75 { 1.0 } else { 0.0 });
        }
    }
    let img = make_input_image(0.5, 2, 2).unwrap();
    assert_eq!(img.pixels(), &[0.0, 0.0, 1.0, 1.0]);
    // partial row starts at the left
    let img = make_input_image(0.3, 5, 2).unwrap();
    assert_eq!(img.pixels(), &[0.0; 5].iter().chain(&[1.0, 1.0, 1.0, 0.0, 0.0]).copied().collect::<Vec<_>>()[..]);
    assert!(make_input_image(0.0, 4, 4).is_err());
    assert!(make_input_image(1.0, 4, 4).is_err());
}

#[test]
fn input_image_counts_for_default_sweep() {
    for vf in VfSweep::default().values().unwrap() {
        for (w, h) in [(100, 100), (40, 40), (60, 20)] {
            let img = make_input_image(vf, w, h).unwrap();
            let black = img.pixels().iter().filter(|&&v| v == 1.0).count();
            let expected = (vf * (w * h) as f64).round() as usize;
            assert_eq!(black, expected);
            assert_eq!(img.mean(), expected as f64 / (w * h) as f64);
            assert!((img.mean() - vf).abs() <= 1.0 / (w * h) as f64);
        }
    }
}

#[test]
fn pgm_byte_mapping_and_size() {
    let img = Image::new(2, 2, vec![1.0, 0.0, 0.5, 0.2]).unwrap();
    let bytes = write_pgm(&img).unwrap();
    let header = b"P5\n2 2\n255\n";
    assert_eq!(&bytes[..header.len()], header);
    assert_eq!(bytes.len(), header.len() + 4);
    assert_eq!(&bytes[header.len()..], &[0, 255, 128, 204]);
    assert!(write_pgm(&Image::new(1, 1, vec![1.5]).unwrap()).is_err());
}

proptest! {
    #[test]
    fn pgm_round_trip(w in 1usize..30, h in 1usize..30, seed in 0u64..1000) {
        let mut rng = Lcg(seed);
        let img = Image::new(w, h, (0..w * h).map(|_| rng.next()).collect()).unwrap();
        let bytes = write_pgm(&img).unwrap();
        let back = read_pgm(&bytes).unwrap();
        prop_assert_eq!((back.width(), back.height()), (w, h));
        for (a, b) in img.pixels().iter().zip(back.pixels()) {
            prop_assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
        prop_assert_eq!(write_pgm(&back).unwrap(), bytes);
    }
}

#[test]
fn pgm_reader_handles_comments_and_rejects_bad_input() {
    let img = read_pgm(b"P5 # comment\n3 # w\n1\n255\n\x00\x7f\xff").unwrap();
    assert_eq!(img.pixels(), &[1.0, 1.0 - 127.0 / 255.0, 0.0]);
    let small = read_pgm(b"P5\n1 1\n15\n\x0f").unwrap();
    assert_eq!(small.pixels(), &[0.0]);
    for bad in [
        &b"P2\n1 1\n255\n0"[..],
        b"P5\n1 1\n255\n",
        b"P5\n2 2\n255\n\x00\x00\x00",
        b"P5\n1 1\n256\n\x00",
        b"P5\n0 1\n255\n",
        b"P5\nx 1\n255\n\x00",
        b"P5\n1 1\n255",
    ] {
        assert!(matches!(read_pgm(bad), Err(Error::Format(_))), "{:?}", String::from_utf8_lossy(bad));
    }
}

fn record(vf: f64, tag: u32) -> ManifestRecord {
    ManifestRecord {
        problem: ProblemKind::Cantilever,
        vf,
        input: format!("input_{tag:03}.pgm"),
        target: format!("target_{tag:03}.pgm"),
        objective: 1.0 / vf,
        iters: 7,
        config_fingerprint: "abc".into(),
    }
}

fn touch_pair(dir: &Path, r: &ManifestRecord) {
    let img = write_pgm(&make_input_image(r.vf, 3, 2).unwrap()).unwrap();
    fs::write(dir.join(&r.input), &img).unwrap();
    fs::write(dir.join(&r.target), &img).unwrap();
}

#[test]
fn manifest_round_trip_and_validation() {
    let dir = tempfile::tempdir().unwrap();
    let m = Manifest {
        records: vec![record(0.1, 10), record(0.2, 20), record(0.3, 30)],
    };
    for r in &m.records {
        touch_pair(dir.path(), r);
    }
    let path = dir.path().join(MANIFEST_FILE);
    write_manifest(&path, &m).unwrap();
    assert_eq!(fs::read_to_string(&path).unwrap().lines().count(), 3);
    assert_eq!(read_manifest(&path).unwrap(), m);

    fs::remove_file(dir.path().join("target_020.pgm")).unwrap();
    let err = read_manifest(&path).unwrap_err();
    assert!(matches!(err, Error::Manifest(_)));
    assert!(err.to_string().contains("target_020.pgm"));

    let unordered = Manifest {
        records: vec![record(0.3, 30), record(0.1, 10)],
    };
    assert!(unordered.validate(dir.path()).is_err());
    assert!(Manifest::from_jsonl("{not json}\n").is_err());
    assert!(matches!(
        read_manifest(&dir.path().join("missing.jsonl")),
        Err(Error::Io { .. })
    ));
}

#[test]
fn fingerprint_tracks_every_field() {
    let base = ProblemConfig::new(ProblemKind::Cantilever, 12, 6, 0.4);
    let fp = config_fingerprint(&base);
    assert_eq!(fp.len(), 64);
    assert_eq!(fp, config_fingerprint(&base.clone()));
    let mut other = base.clone();
    if let ProblemConfig::Cantilever(c) = &mut other {
        c.rmin = 2.5;
    }
    assert_ne!(config_fingerprint(&other), fp);
    assert_ne!(config_fingerprint(&base.with_vf_target(0.41)), fp);
    assert_ne!(
        config_fingerprint(&ProblemConfig::new(ProblemKind::Micro, 12, 6, 0.4)),
        fp
    );
}

fn tiny(kind: ProblemKind) -> ProblemConfig {
    let mut c = ProblemConfig::new(kind, 12, 8, 0.5);
    match &mut c {
        ProblemConfig::Cantilever(c) => c.max_iters = 20,
        ProblemConfig::Arch(c) => {
            c.maxit = 8;
            c.support_width = 2;
        }
        ProblemConfig::Micro(c) => c.max_iters = 10,
    }
    c
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn generation_is_deterministic_and_resumable() {
    let sweep = VfSweep {
        min: 0.3,
        max: 0.5,
        step: 0.1,
    };
    for kind in ProblemKind::ALL {
        let base = tiny(kind);
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ds = generate_dataset(&base, &sweep, a.path(), 1).unwrap();
        assert!(ds.failures.is_empty());
        assert_eq!(ds.dir, a.path().join(kind.as_str()));
        let vfs: Vec<f64> = ds.manifest.records.iter().map(|r| r.vf).collect();
        assert_eq!(vfs, vec![0.3, 0.4, 0.5]);
        assert_eq!(ds.manifest.records[1].input, "input_040.pgm");
        ds.manifest.verify_config(&base).unwrap();

        let loaded = read_manifest(&ds.manifest_path()).unwrap();
        assert_eq!(loaded, ds.manifest);
        for r in &loaded.records {
            let target = read_pgm(&fs::read(ds.dir.join(&r.target)).unwrap()).unwrap();
            assert_eq!((target.width(), target.height()), (12, 8));
            let mean = target.mean();
            match kind {
                // PGM quantization adds at most 0.5/255 per pixel
                ProblemKind::Arch => assert!(mean <= r.vf + 1e-3 + 0.5 / 255.0),
                _ => assert!((mean - r.vf).abs() <= 1e-3 + 0.5 / 255.0),
            }
        }

        // parallel run in a fresh directory writes the same bytes
        generate_dataset(&base, &sweep, b.path(), 3).unwrap();
        let first = snapshot(&ds.dir);
        assert_eq!(first, snapshot(&b.path().join(kind.as_str())));

        // re-running reuses every sample
        let again = generate_dataset(&base, &sweep, a.path(), 1).unwrap();
        assert_eq!(again.manifest, ds.manifest);
        assert_eq!(snapshot(&ds.dir), first);
    }
}

#[test]
fn resume_repairs_missing_files_and_detects_drift() {
    let base = tiny(ProblemKind::Cantilever);
    let sweep = VfSweep {
        min: 0.3,
        max: 0.4,
        step: 0.1,
    };
    let out = tempfile::tempdir().unwrap();
    let ds = generate_dataset(&base, &sweep, out.path(), 1).unwrap();
    let before = snapshot(&ds.dir);

    fs::remove_file(ds.dir.join("target_040.pgm")).unwrap();
    assert!(matches!(read_manifest(&ds.manifest_path()), Err(Error::Manifest(_))));
    generate_dataset(&base, &sweep, out.path(), 1).unwrap();
    assert_eq!(snapshot(&ds.dir), before);

    let mut drifted = base.clone();
    if let ProblemConfig::Cantilever(c) = &mut drifted {
        c.penal = 3.5;
    }
    assert!(matches!(ds.manifest.verify_config(&drifted), Err(Error::Manifest(_))));
    let redone = generate_dataset(&drifted, &sweep, out.path(), 1).unwrap();
    redone.manifest.verify_config(&drifted).unwrap();
    assert_ne!(redone.manifest.records[0].config_fingerprint, ds.manifest.records[0].config_fingerprint);

    fs::write(ds.dir.join("sample_030.json"), b"{broken").unwrap();
    assert!(matches!(
        generate_dataset(&drifted, &sweep, out.path(), 1),
        Err(Error::Manifest(_))
    ));
}

#[test]
fn single_value_and_invalid_sweeps() {
    assert_eq!(VfSweep::single(0.25).values().unwrap(), vec![0.25]);
    assert_eq!(VfSweep::default().values().unwrap().len(), 95);
    let five = VfSweep {
        min: 0.05,
        max: 0.95,
        step: 0.05,
    };
    assert_eq!(five.values().unwrap().len(), 19);
    for bad in [
        VfSweep { min: 0.0, max: 0.5, step: 0.1 },
        VfSweep { min: 0.6, max: 0.5, step: 0.1 },
        VfSweep { min: 0.1, max: 0.5, step: 0.0 },
        VfSweep { min: 0.1, max: 0.2, step: 0.005 },
    ] {
        assert!(bad.values().is_err(), "{bad:?}");
    }
    let out = tempfile::tempdir().unwrap();
    let bad_cfg = ProblemConfig::new(ProblemKind::Micro, 1, 4, 0.5);
    assert!(generate_dataset(&bad_cfg, &VfSweep::single(0.5), out.path(), 1).is_err());
}
