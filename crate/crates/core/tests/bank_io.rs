use std::fs;
use std::path::{Path, PathBuf};

use levy_iterates::{
    generate_bank, load_bank, save_bank, BankConfig, Error, Precision, ProblemSpec, SimulationBank,
};

fn golden_spec() -> ProblemSpec {
    ProblemSpec::new(0.7, 1.0, vec![1.0, 4.0], vec![1.0, 1.0], 1.0).unwrap()
}

fn golden_bank() -> SimulationBank {
    generate_bank(&golden_spec(), &BankConfig::new(0.25, 0.5, 2, 2, 7)).unwrap()
}

fn golden_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/golden.lvib")
}

#[test]
fn golden_file_layout_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bank.lvib");
    save_bank(&golden_bank(), &path).unwrap();
    let fresh = fs::read(&path).unwrap();
    let golden = fs::read(golden_path()).unwrap();
    assert_eq!(fresh, golden);
    // header: magic, version, then the spec hash
    assert_eq!(&golden[..4], b"LVIB");
    assert_eq!(u32::from_le_bytes(golden[4..8].try_into().unwrap()), 1);
    assert_eq!(&golden[8..40], &golden_spec().hash().0);
    assert_eq!(golden.len(), 81 + 2 * (8 + 5 * 8) + 2 * (8 + 5 * 8 + 3 * 2 * 8) + 32);
    assert_eq!(load_bank(&golden_path(), &golden_spec()).unwrap(), golden_bank());
}

#[test]
fn round_trip_is_bitwise() {
    let spec = ProblemSpec::with_squared_modes(0.6, 5, 1.0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for precision in [Precision::F64, Precision::F32] {
        let cfg = BankConfig {
            precision,
            ..BankConfig::new(1e-3, 1e-2, 3, 4, 21)
        };
        let bank = generate_bank(&spec, &cfg).unwrap();
        let path = dir.path().join(format!("{precision:?}.lvib"));
        save_bank(&bank, &path).unwrap();
        let back = load_bank(&path, &spec).unwrap();
        assert_eq!(back, bank);
        for (a, b) in back.records.iter().zip(&bank.records) {
            assert!(a.checkpoints.iter().zip(&b.checkpoints).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }
}

#[test]
fn regenerating_gives_identical_files() {
    let spec = ProblemSpec::with_squared_modes(0.8, 3, 1.0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.lvib"), dir.path().join("b.lvib"));
    let cfg = BankConfig::new(1e-2, 5e-2, 2, 2, 3);
    save_bank(&generate_bank(&spec, &cfg).unwrap(), &a).unwrap();
    save_bank(&generate_bank(&spec, &cfg).unwrap(), &b).unwrap();
    assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
}

#[test]
fn damaged_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let golden = fs::read(golden_path()).unwrap();
    let spec = golden_spec();

    for cut in [0, 3, 40, 100, golden.len() - 1] {
        let path = dir.path().join(format!("cut{cut}.lvib"));
        fs::write(&path, &golden[..cut]).unwrap();
        assert!(matches!(load_bank(&path, &spec), Err(Error::Format(_))), "cut at {cut}");
    }

    let mut flipped = golden.clone();
    flipped[200] ^= 0x10;
    let path = dir.path().join("flipped.lvib");
    fs::write(&path, &flipped).unwrap();
    assert!(matches!(load_bank(&path, &spec), Err(Error::Format(_))));

    let mut longer = golden.clone();
    longer.push(0);
    let path = dir.path().join("longer.lvib");
    fs::write(&path, &longer).unwrap();
    assert!(matches!(load_bank(&path, &spec), Err(Error::Format(_))));

    let mut version = golden.clone();
    version[4] = 9;
    let path = dir.path().join("version.lvib");
    fs::write(&path, &version).unwrap();
    let err = load_bank(&path, &spec).unwrap_err();
    assert!(err.to_string().contains("version 9"), "{err}");

    let other = ProblemSpec::new(0.7, 1.0, vec![1.0, 4.5], vec![1.0, 1.0], 1.0).unwrap();
    let err = load_bank(&golden_path(), &other).unwrap_err();
    assert!(matches!(err, Error::Format(_)));
    assert!(err.to_string().contains("spec"));

    assert!(matches!(load_bank(&dir.path().join("missing.lvib"), &spec), Err(Error::Io(_))));
}
