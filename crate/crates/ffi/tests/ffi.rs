use std::ffi::{c_char, CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use greedy_ffi::*;

fn cfg(lambda: f64) -> GreedyConfig {
    GreedyConfig {
        lambda,
        mu: 1.0,
        speed: 1.0,
        service: GreedyService::Exponential as u32,
        geometric_p: 0.0,
    }
}

fn last_error() -> String {
    let p = greedy_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn new_sim(c: &GreedyConfig, model: GreedyModel, seed: u64) -> *mut GreedySim {
    let mut sim = ptr::null_mut();
    assert_eq!(
        unsafe { greedy_sim_new(c, model as u32, seed, &mut sim) },
        GreedyStatus::Ok
    );
    sim
}

fn regenerate(sim: *mut GreedySim) -> GreedyRegeneration {
    let mut out = std::mem::MaybeUninit::uninit();
    assert_eq!(
        unsafe { greedy_sim_run_until_regeneration(sim, 1e5, out.as_mut_ptr()) },
        GreedyStatus::Ok
    );
    unsafe { out.assume_init() }
}

#[test]
fn same_seed_same_cycle() {
    for model in [
        GreedyModel::Explicit,
        GreedyModel::Potential,
        GreedyModel::Polling,
    ] {
        let a = new_sim(&cfg(0.5), model, 3);
        let b = new_sim(&cfg(0.5), model, 3);
        let (ra, rb) = (regenerate(a), regenerate(b));
        assert_eq!(ra, rb);
        assert!(!ra.censored);
        assert!((ra.busy_time + ra.travel_time + ra.idle_time - ra.tau).abs() < 1e-9 * ra.tau);
        unsafe {
            greedy_sim_free(a);
            greedy_sim_free(b);
        }
    }
}

#[test]
fn stepping_matches_the_event_order() {
    let sim = new_sim(&cfg(0.5), GreedyModel::Explicit, 11);
    let mut ev = GreedyEvent {
        time: 0.0,
        kind: 0,
        server: 0.0,
        target: 0.0,
        customers: 0,
    };
    let mut has = false;
    let mut last = 0.0;
    let mut kinds = Vec::new();
    while kinds.last() != Some(&(GreedyEventKind::Regeneration as u32)) {
        assert_eq!(
            unsafe { greedy_sim_step(sim, &mut ev, &mut has) },
            GreedyStatus::Ok
        );
        assert!(has && ev.time >= last && ev.customers >= 0);
        last = ev.time;
        kinds.push(ev.kind);
    }
    // the first event from the empty state is an arrival
    assert_eq!(kinds[0], GreedyEventKind::Arrival as u32);
    let mut clock = 0.0;
    assert_eq!(
        unsafe { greedy_sim_clock(sim, &mut clock) },
        GreedyStatus::Ok
    );
    assert_eq!(clock, last);
    unsafe { greedy_sim_free(sim) };

    // a potential simulator without arrivals idles forever
    let sim = new_sim(&cfg(0.0), GreedyModel::Potential, 1);
    assert_eq!(
        unsafe { greedy_sim_step(sim, &mut ev, &mut has) },
        GreedyStatus::Ok
    );
    assert!(!has);
    unsafe { greedy_sim_free(sim) };
}

#[test]
fn constant_and_json_starts() {
    let mut sim = ptr::null_mut();
    let c = cfg(0.5);
    assert_eq!(
        unsafe { greedy_sim_new_constant(&c, GreedyModel::Potential as u32, 5, -1.0, &mut sim) },
        GreedyStatus::Ok
    );
    assert!(regenerate(sim).served >= 1);
    unsafe { greedy_sim_free(sim) };

    let json = CString::new(r#"{"space":"circle","clock":0.0,"segments":[{"start":0.0,"end":0.5,"w":-2.0},{"start":0.5,"end":1.0,"w":-1.0}]}"#).unwrap();
    assert_eq!(
        unsafe {
            greedy_sim_new_from_json(&c, GreedyModel::Explicit as u32, 5, json.as_ptr(), &mut sim)
        },
        GreedyStatus::Ok
    );
    assert!(regenerate(sim).served >= 1);
    unsafe { greedy_sim_free(sim) };

    let bad = CString::new("{not json").unwrap();
    assert_eq!(
        unsafe { greedy_sim_new_from_json(&c, 1, 5, bad.as_ptr(), &mut sim) },
        GreedyStatus::Format
    );
    assert!(sim.is_null());
    assert_eq!(
        unsafe { greedy_sim_new_constant(&c, 1, 5, 0.5, &mut sim) },
        GreedyStatus::InvalidConfig
    );
}

#[test]
fn error_codes_and_messages() {
    let mut sim = ptr::null_mut();
    assert_eq!(
        unsafe { greedy_sim_new(ptr::null(), 0, 0, &mut sim) },
        GreedyStatus::NullPointer
    );
    assert!(last_error().contains("cfg"));
    assert_eq!(
        unsafe { greedy_sim_new(&cfg(0.5), 9, 0, &mut sim) },
        GreedyStatus::InvalidConfig
    );
    assert!(last_error().contains("model"));
    let mut c = cfg(0.5);
    c.service = GreedyService::Geometric as u32;
    c.geometric_p = 1.5;
    assert_eq!(
        unsafe { greedy_sim_new(&c, 0, 0, &mut sim) },
        GreedyStatus::InvalidConfig
    );
    c.geometric_p = 0.5;
    assert_eq!(
        unsafe { greedy_sim_new(&c, 0, 0, &mut sim) },
        GreedyStatus::Ok
    );
    unsafe { greedy_sim_free(sim) };
    assert_eq!(
        unsafe { greedy_sim_step(ptr::null_mut(), ptr::null_mut(), ptr::null_mut()) },
        GreedyStatus::NullPointer
    );
    unsafe { greedy_sim_free(ptr::null_mut()) };
    let v = unsafe { CStr::from_ptr(greedy_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn coupled_run() {
    let mut out = std::mem::MaybeUninit::uninit();
    assert_eq!(
        unsafe { greedy_couple(&cfg(0.5), 4, -1.0, 1e-9, 1e3, out.as_mut_ptr()) },
        GreedyStatus::Ok
    );
    let r = unsafe { out.assume_init() };
    assert!(r.identities_ok && r.shapes_ok);
    assert_eq!(r.t_o_event, r.t_1_event);
}

fn cli(args: &[&str]) -> (GreedyStatus, Option<String>, u32) {
    let owned: Vec<CString> = args.iter().map(|a| CString::new(*a).unwrap()).collect();
    let ptrs: Vec<*const c_char> = owned.iter().map(|c| c.as_ptr()).collect();
    let mut text = ptr::null_mut();
    let mut gates = 0;
    let st = unsafe { greedy_cli_run(ptrs.len(), ptrs.as_ptr(), &mut text, &mut gates) };
    let s = (!text.is_null()).then(|| {
        let s = unsafe { CStr::from_ptr(text) }
            .to_string_lossy()
            .into_owned();
        unsafe { greedy_string_free(text) };
        s
    });
    (st, s, gates)
}

#[test]
fn cli_in_process_matches_the_binary_format() {
    let (st, text, gates) = cli(&["simulate", "--runs", "3", "--seed", "2"]);
    assert_eq!((st, gates), (GreedyStatus::Ok, 0));
    let text = text.unwrap();
    assert!(text.starts_with("# greedy "));
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 4);
    assert_eq!(
        cli(&["simulate", "--runs", "3", "--seed", "2"]).1.unwrap(),
        text
    );

    let (st, text, gates) = cli(&["regen", "--runs", "20", "--tolerance", "0"]);
    assert_eq!(st, GreedyStatus::Ok);
    assert!(text.is_some() && gates >= 1);

    let (st, text, _) = cli(&["frobnicate"]);
    assert_eq!(st, GreedyStatus::Usage);
    assert!(text.is_none());
}

#[test]
fn header_compiles_and_links_from_c() {
    let here = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header = here.join("include").join("greedy.h");
    assert!(header.exists());
    let exe = std::env::current_exe().unwrap();
    let libdir = exe.parent().unwrap().parent().unwrap();
    let lib = libdir.join("libgreedy_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("smoke");
    let status = Command::new("cc")
        .arg("-std=c11")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(here.join("include"))
        .arg(here.join("tests").join("c").join("smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .expect("C compiler");
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(
        out.status.success(),
        "smoke exited with {:?}",
        out.status.code()
    );
    assert!(String::from_utf8_lossy(&out.stdout).ends_with("ok\n"));
}
