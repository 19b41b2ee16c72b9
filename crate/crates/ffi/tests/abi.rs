use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use hhi::channel::PropagationConfig;
use hhi::dataio::write_trial;
use hhi::domain::InteractionLabel;
use hhi::model::{AttentionBiGru, ArchConfig, ModelWeights};
use hhi::synth::{synth_trial, PacketTiming, ProfileSet};
use hhi_ffi::*;

fn last_error() -> String {
    let p = hhi_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn small_arch() -> ArchConfig {
    ArchConfig {
        seq_len: 48,
        bigru1_units: 8,
        bigru2_units: 8,
        heads: 2,
        key_dim: 4,
        dense_units: 8,
        ..ArchConfig::default()
    }
}

/// Two weight bundles and one trial file in a temporary directory.
fn fixtures(dir: &Path) -> (Vec<PathBuf>, PathBuf) {
    let arch = small_arch();
    let bundles = (0..2)
        .map(|k| {
            let m = AttentionBiGru::build(&arch, 10 + k).unwrap();
            let p = dir.join(format!("fold_{k}.weights"));
            ModelWeights::from_model(&m, k as u32, None).save(&p).unwrap();
            p
        })
        .collect();
    let set = ProfileSet::builtin();
    let profile = set.get(InteractionLabel::Pushing).unwrap();
    let timing = PacketTiming { packet_rate: 10.0, jitter: 0.1 };
    let trial = synth_trial(profile, &set.scene, &PropagationConfig::default(), timing, 4).unwrap();
    let tp = dir.join("trial.hhit");
    write_trial(&trial, &tp).unwrap();
    (bundles, tp)
}

fn cpath(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

#[test]
fn scalar_functions() {
    let mut v = 0.0;
    assert_eq!(unsafe { hhi_wavelength(2.4e9, &mut v) }, HhiStatus::Ok);
    assert_eq!(v, 0.125);
    assert_eq!(unsafe { hhi_wavelength(-1.0, &mut v) }, HhiStatus::Domain);
    assert!(last_error().contains("frequency"));
    assert_eq!(unsafe { hhi_wavelength(1.0, ptr::null_mut()) }, HhiStatus::NullPointer);

    let (mut a, mut b) = (0.0, 0.0);
    assert_eq!(unsafe { hhi_path_loss_db(1.0, 1.0, 2.0, 40.0, &mut a) }, HhiStatus::Ok);
    assert_eq!(unsafe { hhi_path_loss_db(10.0, 1.0, 2.0, 40.0, &mut b) }, HhiStatus::Ok);
    assert!((b - a - 20.0).abs() < 1e-12);

    let mut d = 0.0;
    assert_eq!(unsafe { hhi_rician_power_pdf(1.0, 0.0, 1.0, &mut d) }, HhiStatus::Ok);
    assert!((d - (-1.0f64).exp()).abs() < 1e-12);
    assert_eq!(unsafe { hhi_rician_power_pdf(1.0, -1.0, 1.0, &mut d) }, HhiStatus::Domain);
}

#[test]
fn label_codec() {
    assert_eq!(hhi_label_count(), 13);
    for i in 0..13u32 {
        let name = hhi_label_name(i);
        let mut back = 99;
        assert_eq!(unsafe { hhi_label_index(name, &mut back) }, HhiStatus::Ok);
        assert_eq!(back, i);
        let s = unsafe { CStr::from_ptr(name) }.to_str().unwrap();
        assert_eq!(s, InteractionLabel::from_index(i as usize).unwrap().name());
    }
    assert!(hhi_label_name(13).is_null());
    let bad = CString::new("dancing").unwrap();
    let mut i = 0;
    assert_eq!(unsafe { hhi_label_index(bad.as_ptr(), &mut i) }, HhiStatus::Domain);
    assert!(!unsafe { CStr::from_ptr(hhi_version()) }.to_bytes().is_empty());
}

#[test]
fn ensemble_and_smooth() {
    let folds = [1u32, 1, 2, 2, 2, 3, 0, 2, 3];
    let mut out = [0u32; 3];
    assert_eq!(unsafe { hhi_ensemble_mode(folds.as_ptr(), 3, 3, out.as_mut_ptr()) }, HhiStatus::Ok);
    assert_eq!(out, [0, 2, 3]);
    let bad = [1u32, 13];
    assert_eq!(unsafe { hhi_ensemble_mode(bad.as_ptr(), 1, 2, out.as_mut_ptr()) }, HhiStatus::Domain);
    assert_eq!(unsafe { hhi_ensemble_mode(folds.as_ptr(), 0, 3, out.as_mut_ptr()) }, HhiStatus::Domain);

    let mut seq = vec![4u32; 60];
    seq[30] = 7;
    let mut sm = vec![0u32; 60];
    assert_eq!(unsafe { hhi_smooth(seq.as_ptr(), 60, sm.as_mut_ptr()) }, HhiStatus::Ok);
    assert!(sm.iter().all(|&l| l == 4));
    assert_eq!(unsafe { hhi_smooth(ptr::null(), 5, sm.as_mut_ptr()) }, HhiStatus::NullPointer);
}

#[test]
fn model_and_trial_handles() {
    let dir = tempfile::tempdir().unwrap();
    let (bundles, trial_path) = fixtures(dir.path());
    let mut models: Vec<*mut HhiModel> = Vec::new();
    for b in &bundles {
        let mut m = ptr::null_mut();
        assert_eq!(unsafe { hhi_model_load(cpath(b).as_ptr(), &mut m) }, HhiStatus::Ok);
        models.push(m);
    }
    let arch = small_arch();
    assert_eq!(unsafe { hhi_model_seq_len(models[0]) }, arch.seq_len);
    assert_eq!(unsafe { hhi_model_feature_dim(models[0]) }, arch.feature_dim);

    let mut trial = ptr::null_mut();
    assert_eq!(unsafe { hhi_trial_load(cpath(&trial_path).as_ptr(), &mut trial) }, HhiStatus::Ok);
    assert!(unsafe { hhi_trial_len(trial) } > 0);

    let handles: Vec<*const HhiModel> = models.iter().map(|&m| m as *const _).collect();
    let n = arch.seq_len;
    let (mut ens, mut sm) = (vec![99u32; n], vec![99u32; n]);
    let mut len = 0;
    let st = unsafe {
        hhi_classify_trial(handles.as_ptr(), 2, trial, ens.as_mut_ptr(), sm.as_mut_ptr(), n, &mut len)
    };
    assert_eq!(st, HhiStatus::Ok);
    assert_eq!(len, n);
    assert!(ens.iter().chain(&sm).all(|&l| l < 13));

    // Matches the library path.
    let weights: Vec<_> = bundles.iter().map(|b| ModelWeights::load(b).unwrap().to_model().unwrap()).collect();
    let t = hhi::dataio::read_trial(&trial_path).unwrap();
    let frame = hhi::pipeline::raw_features(&t, n).unwrap();
    let trace = hhi::pipeline::classify_frame(&weights, &frame).unwrap();
    assert_eq!(ens.iter().map(|&l| l as usize).collect::<Vec<_>>(), trace.ensembled);
    assert_eq!(sm.iter().map(|&l| l as usize).collect::<Vec<_>>(), trace.smoothed);

    let mut single = vec![0u32; n];
    let st = unsafe { hhi_model_predict(handles[0], frame.data.as_ptr(), frame.rows, frame.cols, single.as_mut_ptr()) };
    assert_eq!(st, HhiStatus::Ok);
    assert_eq!(single.iter().map(|&l| l as usize).collect::<Vec<_>>(), trace.per_fold[0]);
    let st = unsafe { hhi_model_predict(handles[0], frame.data.as_ptr(), frame.rows - 1, frame.cols, single.as_mut_ptr()) };
    assert_ne!(st, HhiStatus::Ok);

    let st = unsafe { hhi_classify_trial(handles.as_ptr(), 2, trial, ens.as_mut_ptr(), ptr::null_mut(), n - 1, &mut len) };
    assert_eq!(st, HhiStatus::BufferTooSmall);
    assert_eq!(len, n);
    let st = unsafe { hhi_classify_trial(handles.as_ptr(), 0, trial, ptr::null_mut(), ptr::null_mut(), n, &mut len) };
    assert_eq!(st, HhiStatus::InvalidArgument);

    for m in models {
        unsafe { hhi_model_free(m) };
    }
    unsafe { hhi_trial_free(trial) };
    unsafe { hhi_model_free(ptr::null_mut()) };
}

#[test]
fn load_errors_map_to_status_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (bundles, trial_path) = fixtures(dir.path());
    let mut m = ptr::null_mut();
    let missing = cpath(&dir.path().join("nope.weights"));
    assert_eq!(unsafe { hhi_model_load(missing.as_ptr(), &mut m) }, HhiStatus::Io);
    assert!(m.is_null());

    let mut bytes = std::fs::read(&bundles[0]).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x40;
    let corrupt = dir.path().join("corrupt.weights");
    std::fs::write(&corrupt, &bytes).unwrap();
    assert_eq!(unsafe { hhi_model_load(cpath(&corrupt).as_ptr(), &mut m) }, HhiStatus::Checksum);
    assert!(last_error().contains("checksum"));

    let mut t = ptr::null_mut();
    assert_eq!(unsafe { hhi_trial_load(cpath(&bundles[0]).as_ptr(), &mut t) }, HhiStatus::Format);
    assert_eq!(unsafe { hhi_trial_load(ptr::null(), &mut t) }, HhiStatus::NullPointer);
    assert_eq!(unsafe { hhi_trial_load(cpath(&trial_path).as_ptr(), ptr::null_mut()) }, HhiStatus::NullPointer);
}

fn static_lib() -> Option<PathBuf> {
    let exe = std::env::current_exe().ok()?;
    let deps = exe.parent()?;
    [deps.join("libhhi_ffi.a"), deps.parent()?.join("libhhi_ffi.a")]
        .into_iter()
        .find(|p| p.is_file())
}

/// Compile and run a small C program against the generated header.
#[test]
fn c_program_links_against_header() {
    let Some(lib) = static_lib() else {
        eprintln!("static library not found next to the test binary; skipping");
        return;
    };
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("no C compiler; skipping");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(
        &src,
        r#"#include <stdio.h>
#include <string.h>
#include "hhi.h"
int main(void) {
    double w = 0.0;
    if (hhi_wavelength(2.4e9, &w) != HHI_STATUS_OK) return 1;
    if (hhi_wavelength(0.0, &w) != HHI_STATUS_DOMAIN) return 2;
    if (hhi_last_error() == NULL) return 3;
    if (strcmp(hhi_label_name(12), "pushing") != 0) return 4;
    uint32_t labels[41], out[41];
    for (int i = 0; i < 41; i++) labels[i] = 5;
    labels[20] = 9;
    if (hhi_smooth(labels, 41, out) != HHI_STATUS_OK || out[20] != 5) return 5;
    HhiModel *m = NULL;
    if (hhi_model_load("/nonexistent.weights", &m) != HHI_STATUS_IO || m != NULL) return 6;
    printf("%.6f\n", w);
    return 0;
}
"#,
    )
    .unwrap();
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let exe = dir.path().join("main");
    let out = Command::new(&cc)
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "0.125000");
}
