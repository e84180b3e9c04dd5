use std::fs;
use std::path::Path;
use std::process::Command;

fn lab(dir: &Path, args: &[&str], config: Option<&str>) -> (i32, String) {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_conformal-lab"));
    cmd.args(args).arg("--out").arg(dir.join("out")).arg("--threads").arg("2");
    if let Some(text) = config {
        let path = dir.join("run.toml");
        fs::write(&path, text).unwrap();
        cmd.arg("--config").arg(path);
    }
    let out = cmd.output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout).to_string() + &String::from_utf8_lossy(&out.stderr);
    (out.status.code().unwrap(), text)
}

#[test]
fn valid_ifs_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = lab(dir.path(), &["validate"], Some("[ifs]\nfixture = \"rotation-rich\"\n"));
    assert_eq!(code, 0);
    assert!(dir.path().join("out/manifest.json").exists());
}

#[test]
fn similarity_spectral_gap_is_a_finding() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[ifs]\nfixture = \"lebesgue-segment\"\n[spectral]\nb_list = [50.0]\nn_max = 4\nh = 0.05\n";
    let (code, text) = lab(dir.path(), &["spectral-gap"], Some(cfg));
    assert_eq!(code, 2, "{text}");
}

#[test]
fn bad_config_exits_one_and_names_fields() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "p = [0.5, 0.4]\n[sample]\ncount = 10\nbogus = 1\n";
    let (code, text) = lab(dir.path(), &["sample"], Some(cfg));
    assert_eq!(code, 1);
    assert!(text.contains("bogus"), "{text}");
    assert!(text.contains('p'), "{text}");
}

#[test]
fn seed_flag_changes_samples_only_through_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[ifs]\nfixture = \"two-ratio\"\n[sample]\ncount = 2000\n";
    let read = |d: &Path| fs::read(d.join("out/samples.csv")).unwrap();
    lab(dir.path(), &["sample", "--seed", "3"], Some(cfg));
    let a = read(dir.path());
    lab(dir.path(), &["sample", "--seed", "3"], Some(cfg));
    assert_eq!(a, read(dir.path()));
    lab(dir.path(), &["sample", "--seed", "4"], Some(cfg));
    assert_ne!(a, read(dir.path()));
}
