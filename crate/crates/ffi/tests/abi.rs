use std::ffi::{CStr, CString};
use std::ptr;

use hilbert_consensus_ffi::*;

fn last_error() -> String {
    let p = hc_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn scalar_functions() {
    let x = [1.0, 2.0, 4.0];
    let y = [2.0, 2.0, 2.0];
    let mut d = 0.0;
    unsafe {
        assert_eq!(hc_hilbert_distance(x.as_ptr(), y.as_ptr(), 3, &mut d), HcStatus::Ok);
        assert!((d - 4f64.ln()).abs() < 1e-15);
        assert_eq!(hc_distance_to_consensus(x.as_ptr(), 3, &mut d), HcStatus::Ok);
        assert!((d - 4f64.ln()).abs() < 1e-15);

        let mut gamma = -1.0;
        let mut boundary = -1;
        assert_eq!(hc_minimal_gamma(y.as_ptr(), 3, &mut gamma, &mut boundary), HcStatus::Ok);
        assert_eq!((gamma, boundary), (0.0, 0));
        let edge = [0.0, 1.0, 1.0];
        assert_eq!(
            hc_minimal_gamma(edge.as_ptr(), 3, &mut gamma, &mut boundary),
            HcStatus::Ok
        );
        assert_eq!(boundary, 1);

        let mut diam = 0.0;
        assert_eq!(hc_cone_diameter(2, 0.0, &mut diam), HcStatus::Ok);
        assert_eq!(diam, 0.0);
        assert_eq!(hc_cone_diameter(3, 0.2, &mut diam), HcStatus::Ok);
        assert!(diam > 0.0 && diam.is_finite());

        let mut c = 0.0;
        assert_eq!(hc_contraction_constant(3, 0.5, 0.1, &mut c), HcStatus::Ok);
        assert!(c > 0.0);
    }
}

#[test]
fn errors_carry_status_and_message() {
    let bad = [1.0, -1.0];
    let ones = [1.0, 1.0];
    let mut d = 0.0;
    unsafe {
        assert_eq!(
            hc_hilbert_distance(bad.as_ptr(), ones.as_ptr(), 2, &mut d),
            HcStatus::Ok
        );
        assert_eq!(d, f64::INFINITY);
        assert_eq!(
            hc_minimal_gamma(bad.as_ptr(), 2, &mut d, ptr::null_mut()),
            HcStatus::InvalidArgument
        );
        assert!(last_error().contains("negative"));
        assert_eq!(hc_distance_to_consensus(ptr::null(), 2, &mut d), HcStatus::NullPointer);
        assert_eq!(hc_cone_diameter(3, 0.2, ptr::null_mut()), HcStatus::NullPointer);
        assert_eq!(hc_cone_diameter(3, 10.0, &mut d), HcStatus::InvalidArgument);
        // A successful call clears the message.
        assert_eq!(hc_cone_diameter(3, 0.1, &mut d), HcStatus::Ok);
        assert!(hc_last_error().is_null());
    }
}

#[test]
fn digraph_handle() {
    let w = [0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.5, 0.0];
    let mut g = ptr::null_mut();
    unsafe {
        assert_eq!(hc_digraph_from_weights(w.as_ptr(), 3, &mut g), HcStatus::Ok);
        let mut n = 0;
        assert_eq!(hc_digraph_size(g, &mut n), HcStatus::Ok);
        assert_eq!(n, 3);
        let mut qsc = -1;
        let mut center = usize::MAX;
        let mut margin = 0.0;
        assert_eq!(
            hc_digraph_is_qsc(g, 0.0, &mut qsc, &mut center, &mut margin),
            HcStatus::Ok
        );
        assert_eq!((qsc, center, margin), (1, 0, 0.5));

        assert_eq!(hc_digraph_set_weight(g, 2, 1, 0.0), HcStatus::Ok);
        assert_eq!(
            hc_digraph_is_qsc(g, 0.0, &mut qsc, ptr::null_mut(), ptr::null_mut()),
            HcStatus::Ok
        );
        assert_eq!(qsc, 0);
        assert_eq!(hc_digraph_set_weight(g, 0, 1, -1.0), HcStatus::InvalidArgument);
        assert_eq!(hc_digraph_set_weight(g, 3, 1, 1.0), HcStatus::InvalidArgument);
        let mut wt = 0.0;
        assert_eq!(hc_digraph_weight(g, 1, 0, &mut wt), HcStatus::Ok);
        assert_eq!(wt, 1.0);
        hc_digraph_free(g);
        hc_digraph_free(ptr::null_mut());

        let mut empty = ptr::null_mut();
        assert_eq!(hc_digraph_new(0, &mut empty), HcStatus::InvalidArgument);
        assert!(empty.is_null());
    }
}

#[test]
fn bundled_scenario_runs() {
    let name = CString::new("fig1").unwrap();
    let mut s = ptr::null_mut();
    let mut r = ptr::null_mut();
    unsafe {
        assert_eq!(hc_scenario_load(name.as_ptr(), &mut s), HcStatus::Ok);
        let mut need = 0;
        assert_eq!(
            hc_scenario_hash(s, ptr::null_mut(), 0, &mut need),
            HcStatus::BufferTooSmall
        );
        assert_eq!(need, 65);
        let mut buf = vec![0 as std::ffi::c_char; need];
        assert_eq!(
            hc_scenario_hash(s, buf.as_mut_ptr(), need, ptr::null_mut()),
            HcStatus::Ok
        );
        let hash = CStr::from_ptr(buf.as_ptr()).to_str().unwrap().to_string();
        assert_eq!(hash.len(), 64);

        assert_eq!(hc_scenario_run(s, &mut r), HcStatus::Ok);
        let (mut samples, mut agents) = (0, 0);
        assert_eq!(hc_run_shape(r, &mut samples, &mut agents), HcStatus::Ok);
        assert_eq!(agents, 2);
        assert!(samples > 1000);
        let mut t = 0.0;
        let mut x = [0.0; 2];
        assert_eq!(hc_run_sample(r, 0, &mut t, x.as_mut_ptr(), 2), HcStatus::Ok);
        assert_eq!((t, x), (0.0, [1.0, 2.0]));
        assert_eq!(
            hc_run_sample(r, samples, &mut t, ptr::null_mut(), 0),
            HcStatus::InvalidArgument
        );
        assert_eq!(
            hc_run_sample(r, 0, &mut t, x.as_mut_ptr(), 3),
            HcStatus::InvalidArgument
        );

        let mut verdict = HcVerdict::Undecided;
        let mut rate = 0.0;
        assert_eq!(
            hc_run_consensus(r, &mut verdict, &mut rate, ptr::null_mut()),
            HcStatus::Ok
        );
        assert_eq!(verdict, HcVerdict::Exponential);
        assert!((rate - 1.0).abs() < 0.05, "rate {rate}");
        let mut pass = -2;
        assert_eq!(hc_run_lower_bound(r, &mut pass, ptr::null_mut()), HcStatus::Ok);
        assert_eq!(pass, 1);

        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("fig1.csv").to_str().unwrap()).unwrap();
        assert_eq!(hc_run_write_csv(r, path.as_ptr()), HcStatus::Ok);
        let csv = std::fs::read_to_string(dir.path().join("fig1.csv")).unwrap();
        assert!(csv.starts_with(&format!("# scenario_hash={hash}")));

        hc_run_free(r);
        hc_scenario_free(s);
    }
}

#[test]
fn scenario_errors() {
    let mut s = ptr::null_mut();
    unsafe {
        let missing = CString::new("no_such_scenario").unwrap();
        assert_eq!(hc_scenario_load(missing.as_ptr(), &mut s), HcStatus::Config);
        assert!(last_error().contains("not found"));
        let broken = CString::new("name = \"x\"\n[model]\nkind = \"ltv\"\nfoo = 1\n").unwrap();
        assert_eq!(hc_scenario_from_toml(broken.as_ptr(), &mut s), HcStatus::Config);
        assert!(s.is_null());

        let adversarial = CString::new("adversarial_single_link").unwrap();
        assert_eq!(hc_scenario_load(adversarial.as_ptr(), &mut s), HcStatus::Ok);
        let mut r = ptr::null_mut();
        assert_eq!(hc_scenario_run(s, &mut r), HcStatus::Ok);
        let mut pass = -2;
        let mut margin = 0.0;
        assert_eq!(hc_run_lower_bound(r, &mut pass, &mut margin), HcStatus::Ok);
        assert_eq!(pass, 0);
        assert!(margin < 0.0);
        hc_run_free(r);
        hc_scenario_free(s);
    }
}

#[test]
fn seed_override_changes_hash() {
    let name = CString::new("chain10").unwrap();
    let mut s = ptr::null_mut();
    let mut a = [0 as std::ffi::c_char; 65];
    let mut b = [0 as std::ffi::c_char; 65];
    unsafe {
        assert_eq!(hc_scenario_load(name.as_ptr(), &mut s), HcStatus::Ok);
        assert_eq!(hc_scenario_hash(s, a.as_mut_ptr(), 65, ptr::null_mut()), HcStatus::Ok);
        assert_eq!(hc_scenario_set_seed(s, 99), HcStatus::Ok);
        assert_eq!(hc_scenario_hash(s, b.as_mut_ptr(), 65, ptr::null_mut()), HcStatus::Ok);
        assert_ne!(CStr::from_ptr(a.as_ptr()), CStr::from_ptr(b.as_ptr()));
        hc_scenario_free(s);
    }
}

#[test]
fn version_is_set() {
    let v = unsafe { CStr::from_ptr(hc_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
