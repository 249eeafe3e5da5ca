use std::ffi::{CStr, CString};
use std::ptr;

use flowtree_ffi::*;

fn last_error() -> String {
    let p = ft_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn generate_simulate_learn_eval() {
    unsafe {
        let mut net = ptr::null_mut();
        assert_eq!(ft_network_generate(FtTemplate::RandomRadial, 20, 20, FtFamily::Linear, 7, &mut net), FtStatus::Ok);
        assert!(ft_last_error().is_null());
        assert_eq!(ft_network_node_count(net), 20);

        let mut ms = ptr::null_mut();
        assert_eq!(ft_simulate(net, 2000, 1, 0.0, &mut ms), FtStatus::Ok);
        assert_eq!(ft_measurements_samples(ms), 2000);
        assert_eq!(ft_measurements_nodes(ms), 20);

        let mut topo = ptr::null_mut();
        assert_eq!(ft_learn(ms, net, &mut topo), FtStatus::Ok);
        assert_eq!(ft_topology_edge_count(topo), 19);
        let mut sum = 0.0;
        for i in 0..19 {
            let (mut u, mut v, mut w, mut margin) = (0usize, 0usize, 0.0f64, 0.0f64);
            assert_eq!(ft_topology_edge(topo, i, &mut u, &mut v, &mut w, &mut margin), FtStatus::Ok);
            assert!(u < 20 && v < 20 && u != v);
            assert!(w > 0.0);
            assert!(margin.is_nan() || margin >= 0.0);
            sum += w;
        }
        assert!((sum - ft_topology_total_weight(topo)).abs() <= 1e-12 * sum);
        assert_eq!(ft_topology_edge(topo, 19, ptr::null_mut(), ptr::null_mut(), ptr::null_mut(), ptr::null_mut()), FtStatus::InvalidInput);

        let mut err = -1.0;
        assert_eq!(ft_eval(topo, net, &mut err), FtStatus::Ok);
        assert_eq!(err, 0.0);

        ft_topology_free(topo);
        ft_measurements_free(ms);
        ft_network_free(net);
    }
}

#[test]
fn json_round_trip_and_rows() {
    unsafe {
        let mut net = ptr::null_mut();
        assert_eq!(ft_network_generate(FtTemplate::Chain, 4, 2, FtFamily::Quadratic, 3, &mut net), FtStatus::Ok);
        let mut json = ptr::null_mut();
        assert_eq!(ft_network_to_json(net, &mut json), FtStatus::Ok);
        let mut again = ptr::null_mut();
        assert_eq!(ft_network_from_json(json, &mut again), FtStatus::Ok);
        assert_eq!(ft_network_node_count(again), 4);
        ft_string_free(json);

        let mut ms = ptr::null_mut();
        assert_eq!(ft_simulate(net, 10, 5, 0.0, &mut ms), FtStatus::Ok);
        let mut rows = vec![0.0; 40];
        assert_eq!(ft_measurements_copy_rows(ms, rows.as_mut_ptr(), 39), FtStatus::InvalidInput);
        assert_eq!(ft_measurements_copy_rows(ms, rows.as_mut_ptr(), 40), FtStatus::Ok);
        // reference node 0 sits at the default reference potential
        assert!(rows.chunks(4).all(|r| r[0] == 1.0));

        let mut copy = ptr::null_mut();
        assert_eq!(ft_measurements_from_rows(4, 10, rows.as_ptr(), &mut copy), FtStatus::Ok);
        let mut back = vec![0.0; 40];
        assert_eq!(ft_measurements_copy_rows(copy, back.as_mut_ptr(), 40), FtStatus::Ok);
        assert_eq!(rows, back);

        ft_measurements_free(copy);
        ft_measurements_free(ms);
        ft_network_free(again);
        ft_network_free(net);
    }
}

#[test]
fn errors_are_reported() {
    unsafe {
        let mut net = ptr::null_mut();
        let bad = CString::new(r#"{"nodes":2,"reference":0,"edges":[]}"#).unwrap();
        assert_eq!(ft_network_from_json(bad.as_ptr(), &mut net), FtStatus::InvalidInput);
        assert!(net.is_null());
        assert!(last_error().contains("node 0"));

        assert_eq!(ft_network_from_json(ptr::null(), &mut net), FtStatus::NullPointer);
        assert!(!last_error().is_empty());

        let missing = CString::new("/nonexistent/net.json").unwrap();
        assert_eq!(ft_network_load(missing.as_ptr(), &mut net), FtStatus::Io);

        assert_eq!(
            ft_network_generate(FtTemplate::Chain, 3, 5, FtFamily::Linear, 0, &mut net),
            FtStatus::InvalidInput
        );
        assert!(last_error().contains("fictitious"));

        let mut ms = ptr::null_mut();
        assert_eq!(ft_measurements_from_rows(3, 1, [1.0, 2.0, 3.0].as_ptr(), &mut ms), FtStatus::Ok);
        let mut topo = ptr::null_mut();
        assert_ne!(ft_learn(ms, ptr::null(), &mut topo), FtStatus::Ok);
        assert!(topo.is_null());
        ft_measurements_free(ms);

        ft_network_free(ptr::null_mut());
        ft_measurements_free(ptr::null_mut());
        ft_topology_free(ptr::null_mut());
        ft_string_free(ptr::null_mut());
        assert_eq!(ft_network_node_count(ptr::null()), 0);
    }
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(ft_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/flowtree.h")).unwrap();
    let source = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/src/lib.rs")).unwrap();
    let exports: Vec<&str> = source
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 20);
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
}
