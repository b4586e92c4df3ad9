#![allow(dead_code)]

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, OnceLock};

use pivotal::margin::UncertaintyKind;
use pivotal::object::{ObjectConfig, ObjectParams};
use pivotal::ocp::{solve_nominal, OcpSpec};
use pivotal::robust::{solve_robust, RobustConfig};
use pivotal::solver::{SolveReport, SolverOptions};
use pivotal::trajectory::Trajectory;

pub const OBJECTS: [&str; 4] = ["gear1", "gear2", "peg1", "peg2"];
pub const ALPHA: f64 = 0.001;

pub fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(format!("{name}.json"))
}

pub fn object(name: &str) -> ObjectParams {
    ObjectParams::from_config(&ObjectConfig::load(config_path(name)).expect("bundled config"))
        .expect("valid object")
}

pub fn horizon(name: &str) -> usize {
    if name.starts_with("peg") {
        15
    } else {
        60
    }
}

pub type Solved = Arc<(Trajectory, SolveReport)>;

type Key = (String, Option<UncertaintyKind>);

fn cache() -> &'static Mutex<HashMap<Key, Solved>> {
    static CACHE: OnceLock<Mutex<HashMap<Key, Solved>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Solves once per test binary; `kind = None` is the nominal problem.
pub fn solved(name: &str, kind: Option<UncertaintyKind>) -> Solved {
    let key = (name.to_string(), kind);
    if let Some(s) = cache().lock().unwrap().get(&key) {
        return s.clone();
    }
    let obj = object(name);
    let spec = OcpSpec::for_object(&obj, horizon(name));
    let opts = SolverOptions::default();
    let out = match kind {
        None => solve_nominal(&obj, &spec, &opts),
        Some(k) => {
            let nominal = solved(name, None);
            solve_robust(
                &obj,
                &spec,
                &RobustConfig::new(k, ALPHA),
                &opts,
                Some(&nominal.0),
            )
        }
    }
    .unwrap_or_else(|e| panic!("{name} {kind:?} solve failed: {e}"));
    let out = Arc::new(out);
    cache().lock().unwrap().insert(key, out.clone());
    out
}
