use std::ffi::{CStr, CString};
use std::ptr;

use aht_core::cli::RunConfig;
use aht_core::ppo::Trainer;
use aht_ffi::*;

fn env(m: usize, k: usize, seed: u64) -> *mut AhtEnv {
    let mut e = ptr::null_mut();
    assert_eq!(unsafe { aht_env_new(m, k, 0.05, false, true, seed, &mut e) }, AhtStatus::Ok);
    assert!(!e.is_null());
    e
}

fn last_error() -> String {
    let p = aht_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn heuristic_episode_runs_to_completion() {
    let e = env(5, 2, 3);
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { aht_policy_heuristic(e, 0.9, &mut h) }, AhtStatus::Ok);
    let mut belief = [0.0; 5];
    assert_eq!(unsafe { aht_env_belief(e, 0, belief.as_mut_ptr(), 5) }, AhtStatus::Ok);
    assert_eq!(belief, [0.2; 5]);
    let mut done = false;
    let mut ticks = 0;
    while !done {
        let mut slots = [-1i64; 2];
        for (k, s) in slots.iter_mut().enumerate() {
            if unsafe { aht_env_is_active(e, k) } {
                let mut slot = 0usize;
                assert_eq!(unsafe { aht_policy_act(h, e, k, &mut slot) }, AhtStatus::Ok);
                *s = slot as i64;
            }
        }
        assert_eq!(unsafe { aht_env_step(e, slots.as_ptr(), 2, &mut done) }, AhtStatus::Ok);
        ticks += 1;
    }
    let mut out = AhtOutcome::default();
    assert_eq!(unsafe { aht_env_outcome(e, &mut out) }, AhtStatus::Ok);
    assert!(out.total_samples >= 2 && out.total_samples <= 2 * ticks);
    assert!(out.risk >= 0.05 * out.total_samples as f64);
    let slots = [5i64, 5];
    assert_eq!(unsafe { aht_env_step(e, slots.as_ptr(), 2, &mut done) }, AhtStatus::EpisodeOver);
    assert_eq!(unsafe { aht_env_reset(e, 4) }, AhtStatus::Ok);
    assert!(unsafe { aht_env_is_active(e, 1) });
    unsafe {
        aht_policy_free(h);
        aht_env_free(e);
    }
}

#[test]
fn errors_are_reported_not_raised() {
    let mut e = ptr::null_mut();
    assert_eq!(unsafe { aht_env_new(1, 2, 0.05, false, true, 0, &mut e) }, AhtStatus::InvalidArgument);
    assert!(e.is_null());
    assert!(!last_error().is_empty());

    let e = env(4, 1, 0);
    let mut short = [0.0; 2];
    assert_eq!(unsafe { aht_env_belief(e, 0, short.as_mut_ptr(), 2) }, AhtStatus::InvalidArgument);
    assert!(last_error().contains("needed"));
    assert_eq!(unsafe { aht_env_belief(e, 3, short.as_mut_ptr(), 2) }, AhtStatus::InvalidArgument);
    assert_eq!(unsafe { aht_env_belief(ptr::null(), 0, short.as_mut_ptr(), 2) }, AhtStatus::NullPointer);
    let mut done = false;
    let bad = [9i64];
    assert_eq!(unsafe { aht_env_step(e, bad.as_ptr(), 1, &mut done) }, AhtStatus::InvalidArgument);
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { aht_policy_heuristic(e, 0.1, &mut h) }, AhtStatus::InvalidArgument);
    assert_eq!(unsafe { aht_env_num_processes(ptr::null()) }, 0);
    let name = unsafe { CStr::from_ptr(aht_status_name(AhtStatus::WidthMismatch)) };
    assert_eq!(name.to_str().unwrap(), "width mismatch");
    unsafe {
        aht_env_free(e);
        aht_env_free(ptr::null_mut());
    }
}

#[test]
fn mask_and_policy_input_match_core() {
    let e = env(3, 2, 1);
    let mut mask = [0u8; 4];
    assert_eq!(unsafe { aht_env_action_mask(e, 0, mask.as_mut_ptr(), 4) }, AhtStatus::Ok);
    assert_eq!(mask, [1, 1, 1, 1]);
    let w = unsafe { aht_env_policy_input_width(e) };
    assert_eq!(w, 3 + 7);
    let mut x = vec![1.0; w];
    assert_eq!(unsafe { aht_env_policy_input(e, 1, x.as_mut_ptr(), w) }, AhtStatus::Ok);
    assert!(x[3..].iter().all(|&v| v == 0.0));
    unsafe { aht_env_free(e) };
}

#[test]
fn checkpoint_policy_loads_and_checks_widths() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::load(None, &["env.num_processes=4".into(), "network.hidden=[8]".into()]).unwrap();
    let trainer = Trainer::new(cfg.env.clone(), &cfg.hidden, cfg.ppo.clone(), 1, 1).unwrap();
    let path = dir.path().join("a.ckpt");
    trainer.to_checkpoint().save(&path).unwrap();
    let cpath = CString::new(path.to_str().unwrap()).unwrap();

    let e = env(4, 2, 2);
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { aht_policy_load(cpath.as_ptr(), e, false, 5, &mut p) }, AhtStatus::Ok);
    let mut m = AhtMetrics::default();
    assert_eq!(unsafe { aht_evaluate(p, e, 50, 9, &mut m) }, AhtStatus::Ok);
    let mut again = AhtMetrics::default();
    assert_eq!(unsafe { aht_evaluate(p, e, 50, 9, &mut again) }, AhtStatus::Ok);
    assert_eq!(m, again);
    assert_eq!(m.episodes, 50);
    assert!((0.0..=1.0).contains(&m.error_rate));

    let other = env(5, 2, 2);
    let mut q = ptr::null_mut();
    assert_eq!(unsafe { aht_policy_load(cpath.as_ptr(), other, false, 5, &mut q) }, AhtStatus::WidthMismatch);
    let missing = CString::new(dir.path().join("none.ckpt").to_str().unwrap()).unwrap();
    assert_ne!(unsafe { aht_policy_load(missing.as_ptr(), e, false, 5, &mut q) }, AhtStatus::Ok);
    assert!(q.is_null());
    unsafe {
        aht_policy_free(p);
        aht_env_free(e);
        aht_env_free(other);
    }
}

#[test]
fn header_declares_every_entry_point() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/aht.h")).unwrap();
    for f in [
        "aht_last_error",
        "aht_status_name",
        "aht_env_new",
        "aht_env_from_config",
        "aht_env_free",
        "aht_env_reset",
        "aht_env_step",
        "aht_env_outcome",
        "aht_env_belief",
        "aht_env_action_mask",
        "aht_env_policy_input",
        "aht_policy_load",
        "aht_policy_heuristic",
        "aht_policy_act",
        "aht_policy_free",
        "aht_evaluate",
    ] {
        assert!(header.contains(&format!("{f}(")), "{f} missing from header");
    }
    assert!(header.contains("typedef struct AhtEnv AhtEnv;"));
}
