use std::ffi::{CStr, CString};
use std::ptr;

use vrql_ffi::*;

const KERNEL: [f64; 8] = [0.7, 0.3, 0.0, 1.0, 0.5, 0.5, 0.2, 0.8];
const REWARD: [f64; 4] = [1.0, 0.0, -0.5, 0.25];

fn two_state() -> *mut VrqlMdp {
    let mut mdp = ptr::null_mut();
    let status = unsafe { vrql_mdp_new(2, 2, KERNEL.as_ptr(), 8, REWARD.as_ptr(), 4, 0.9, 1.0, &mut mdp) };
    assert_eq!(status, VrqlStatus::Ok);
    mdp
}

fn last_error() -> String {
    let p = vrql_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn mdp_lifecycle_and_dims() {
    let mdp = two_state();
    let (mut ns, mut na, mut gamma) = (0usize, 0usize, 0.0);
    unsafe {
        assert_eq!(vrql_mdp_dims(mdp, &mut ns, &mut na, &mut gamma, ptr::null_mut()), VrqlStatus::Ok);
        vrql_mdp_free(mdp);
        vrql_mdp_free(ptr::null_mut());
    }
    assert_eq!((ns, na, gamma), (2, 2, 0.9));
}

#[test]
fn invalid_mdp_sets_error_message() {
    let bad = [0.7, 0.2, 0.0, 1.0, 0.5, 0.5, 0.2, 0.8];
    let mut mdp = ptr::null_mut();
    let status = unsafe { vrql_mdp_new(2, 2, bad.as_ptr(), 8, REWARD.as_ptr(), 4, 0.9, 1.0, &mut mdp) };
    assert_eq!(status, VrqlStatus::InvalidArgument);
    assert!(mdp.is_null());
    assert!(last_error().contains("row"));
    let status = unsafe { vrql_mdp_new(2, 2, ptr::null(), 8, REWARD.as_ptr(), 4, 0.9, 1.0, &mut mdp) };
    assert_eq!(status, VrqlStatus::NullPointer);
}

#[test]
fn json_round_trip_and_file_errors() {
    let mdp = two_state();
    let mut text = ptr::null_mut();
    unsafe {
        assert_eq!(vrql_mdp_to_json(mdp, &mut text), VrqlStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(vrql_mdp_from_json(text, &mut back), VrqlStatus::Ok);
        let json = CStr::from_ptr(text).to_str().unwrap().to_owned();
        vrql_string_free(text);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mdp.json");
        std::fs::write(&path, json).unwrap();
        let c_path = CString::new(path.to_str().unwrap()).unwrap();
        let mut from_file = ptr::null_mut();
        assert_eq!(vrql_mdp_from_file(c_path.as_ptr(), &mut from_file), VrqlStatus::Ok);

        let missing = CString::new("/nonexistent/mdp.json").unwrap();
        let mut none = ptr::null_mut();
        assert_eq!(vrql_mdp_from_file(missing.as_ptr(), &mut none), VrqlStatus::Io);
        let garbage = CString::new("{").unwrap();
        assert_eq!(vrql_mdp_from_json(garbage.as_ptr(), &mut none), VrqlStatus::InvalidArgument);
        for m in [mdp, back, from_file] {
            vrql_mdp_free(m);
        }
    }
}

#[test]
fn solver_functions_agree_with_core() {
    let mdp = two_state();
    let core = vrql_core::TabularMdp::new(2, 2, KERNEL.to_vec(), REWARD.to_vec(), 0.9, 1.0).unwrap();
    let expected = vrql_core::solve_optimal_q(&core, 1e-12).unwrap();
    let mut theta = [0.0; 4];
    let mut next = [0.0; 4];
    let mut actions = [9usize; 2];
    let mut q_pi = [0.0; 4];
    let mut sigma = [0.0; 4];
    let (mut norm, mut b0) = (0.0, 0.0);
    unsafe {
        assert_eq!(vrql_solve_optimal_q(mdp, 1e-12, theta.as_mut_ptr(), 4), VrqlStatus::Ok);
        assert_eq!(vrql_bellman_apply(mdp, theta.as_ptr(), 4, next.as_mut_ptr(), 4), VrqlStatus::Ok);
        assert_eq!(vrql_greedy_policy(mdp, theta.as_ptr(), 4, actions.as_mut_ptr(), 2), VrqlStatus::Ok);
        assert_eq!(vrql_policy_q_exact(mdp, actions.as_ptr(), 2, q_pi.as_mut_ptr(), 4), VrqlStatus::Ok);
        assert_eq!(
            vrql_instance_complexity(mdp, theta.as_ptr(), 4, sigma.as_mut_ptr(), 4, &mut norm, &mut b0),
            VrqlStatus::Ok
        );
        assert_eq!(vrql_bellman_apply(mdp, theta.as_ptr(), 4, next.as_mut_ptr(), 3), VrqlStatus::BufferTooSmall);
        assert_eq!(vrql_bellman_apply(mdp, theta.as_ptr(), 3, next.as_mut_ptr(), 4), VrqlStatus::InvalidArgument);
        vrql_mdp_free(mdp);
    }
    assert_eq!(theta.as_slice(), expected.values());
    assert!(theta.iter().zip(&next).all(|(a, b)| (a - b).abs() < 1e-11));
    assert!(theta.iter().zip(&q_pi).all(|(a, b)| (a - b).abs() < 1e-9));
    assert_eq!(norm, expected.linf_norm());
    assert!(b0 >= norm * 0.1);
}

#[test]
fn sampler_draws_match_core_and_count() {
    let mdp = two_state();
    let core = vrql_core::TabularMdp::new(2, 2, KERNEL.to_vec(), REWARD.to_vec(), 0.9, 1.0).unwrap();
    let mut reference = vrql_core::GenerativeSampler::new(&core, 17).unwrap().split("inner");
    unsafe {
        let mut root = ptr::null_mut();
        assert_eq!(vrql_sampler_new(mdp, 17, &mut root), VrqlStatus::Ok);
        vrql_mdp_free(mdp);
        let label = CString::new("inner").unwrap();
        let mut child = ptr::null_mut();
        assert_eq!(vrql_sampler_split(root, label.as_ptr(), &mut child), VrqlStatus::Ok);
        let mut buf = [0u32; 4];
        for _ in 0..20 {
            assert_eq!(vrql_sampler_draw(child, buf.as_mut_ptr(), 4), VrqlStatus::Ok);
            assert_eq!(buf.as_slice(), reference.draw().next_states());
        }
        assert_eq!(vrql_sampler_draw(root, buf.as_mut_ptr(), 4), VrqlStatus::Ok);
        assert_eq!(vrql_sampler_samples_drawn(root), 21);
        assert_eq!(vrql_sampler_samples_drawn(ptr::null()), 0);
        vrql_sampler_free(child);
        vrql_sampler_free(root);
    }
}

#[test]
fn empirical_operator_rejects_out_of_range_states() {
    let mdp = two_state();
    let theta = [1.0, 2.0, 3.0, 4.0];
    let mut out = [0.0; 4];
    unsafe {
        let ok = [0u32, 1, 1, 0];
        assert_eq!(vrql_empirical_bellman_apply(mdp, ok.as_ptr(), 4, theta.as_ptr(), 4, out.as_mut_ptr(), 4), VrqlStatus::Ok);
        let bad = [0u32, 2, 1, 0];
        assert_eq!(
            vrql_empirical_bellman_apply(mdp, bad.as_ptr(), 4, theta.as_ptr(), 4, out.as_mut_ptr(), 4),
            VrqlStatus::InvalidArgument
        );
        vrql_mdp_free(mdp);
    }
    assert_eq!(out, [1.0 + 0.9 * 2.0, 0.9 * 4.0, -0.5 + 0.9 * 4.0, 0.25 + 0.9 * 2.0]);
}

#[test]
fn bounds_match_core() {
    let mut k = 0u64;
    let mut sizes = [0u64; 3];
    let mut total = 0u64;
    let mut m = 0usize;
    let (mut cor, mut worst, mut tm) = (0u64, 0u64, 0u64);
    unsafe {
        assert_eq!(vrql_plan_parameters(0.5, 0.1, 2, 3, 1.0, 1.0, 2.0, &mut k, sizes.as_mut_ptr(), 3, &mut total), VrqlStatus::Ok);
        assert_eq!(vrql_epochs_needed(1.0, 8.0, 2.0, &mut m), VrqlStatus::Ok);
        assert_eq!(vrql_corollary_budget(0.9, 0.1, 30, 0.1, 1.0, 1.0, 1.0, &mut cor), VrqlStatus::Ok);
        assert_eq!(vrql_worst_case_budget(0.9, 0.1, 30, 0.1, 1.0, 1.0, &mut worst), VrqlStatus::Ok);
        assert_eq!(vrql_t_max(0.9, 0.1, 30, 0.1, 1.0, 1.0, &mut tm), VrqlStatus::Ok);
        assert_eq!(vrql_plan_parameters(1.5, 0.1, 2, 3, 1.0, 1.0, 2.0, &mut k, sizes.as_mut_ptr(), 3, &mut total), VrqlStatus::InvalidArgument);
        assert_eq!(vrql_epochs_needed(0.0, 8.0, 2.0, &mut m), VrqlStatus::InvalidArgument);
        assert_eq!(vrql_t_max(0.9, 0.1, 30, 0.1, 1.0, 1.0, ptr::null_mut()), VrqlStatus::NullPointer);
    }
    let plan = vrql_core::plan_parameters(0.5, 0.1, 2, 3, 1.0, 1.0, 2.0).unwrap();
    assert_eq!((k, sizes.to_vec(), total), (plan.epoch_length_k, plan.recenter_sizes, plan.total_samples));
    assert_eq!(m, 3);
    assert_eq!(cor, vrql_core::corollary_budget(0.9, 0.1, 30, 0.1, 1.0, 1.0, 1.0).unwrap());
    assert_eq!(worst, vrql_core::worst_case_budget(0.9, 0.1, 30, 0.1, 1.0, 1.0).unwrap());
    assert_eq!(tm, vrql_core::t_max(0.9, 0.1, 30, 0.1, 1.0, 1.0).unwrap());
}

#[test]
fn run_matches_core_and_accounts_samples() {
    let mdp = two_state();
    let sizes = [20u64, 80, 320];
    let mut theta = [0.0; 4];
    let (mut err, mut total) = (0.0, 0u64);
    unsafe {
        assert_eq!(
            vrql_run(mdp, 3, 50, sizes.as_ptr(), 8, theta.as_mut_ptr(), 4, &mut err, &mut total),
            VrqlStatus::Ok
        );
        assert_eq!(vrql_run(mdp, 0, 50, sizes.as_ptr(), 8, theta.as_mut_ptr(), 4, &mut err, &mut total), VrqlStatus::InvalidArgument);
        vrql_mdp_free(mdp);
    }
    let core = vrql_core::TabularMdp::new(2, 2, KERNEL.to_vec(), REWARD.to_vec(), 0.9, 1.0).unwrap();
    let config = vrql_core::VrqlConfig {
        num_epochs: 3,
        epoch_length: 50,
        recenter_sizes: sizes.to_vec(),
        base: 2.0,
        delta: 0.1,
        c1: 1.0,
        c2: 1.0,
        seed: 8,
        record_inner: false,
    };
    let (expected, _) = vrql_core::vr_q_learning(&core, &config, None).unwrap();
    assert_eq!(theta.as_slice(), expected.values());
    assert_eq!(total, 3 * 50 + 420);
    assert!(err.is_finite());
}

#[test]
fn version_is_nul_terminated() {
    let v = unsafe { CStr::from_ptr(vrql_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
