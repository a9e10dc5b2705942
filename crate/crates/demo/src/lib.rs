//! Browser demo bindings: a thin JSON layer over [`ops`] for the static
//! page in `www/`.
//!
//! Build for the web with:
//!
//! ```text
//! cargo build -p momclose-demo --target wasm32-unknown-unknown --release
//! wasm-bindgen --target web --out-dir crates/demo/www/pkg \
//!     target/wasm32-unknown-unknown/release/momclose_demo.wasm
//! ```

use wasm_bindgen::prelude::*;

pub mod ops;

fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("serializable demo payload")
}

fn err_json(message: &str) -> String {
    format!("{{\"error\":{}}}", serde_json::to_string(message).unwrap())
}

/// Constraint margins, spectrum, and symmetrizer for one coefficient set.
#[wasm_bindgen]
pub fn check_hyperbolicity(n_order: usize, nm3: f64, nm2: f64, nm1: f64, ntop: f64) -> String {
    if !(3..=12).contains(&n_order) {
        return err_json("n_order must be between 3 and 12");
    }
    to_json(&ops::check_coefficients(n_order, [nm3, nm2, nm1, ntop]))
}

/// Admissible-region bitmap over the (𝒩_{N-2}, 𝒩_{N-1}) plane.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn hyperbolic_region(
    n_order: usize,
    nm3: f64,
    ntop: f64,
    nm2_min: f64,
    nm2_max: f64,
    nm1_min: f64,
    nm1_max: f64,
    res: usize,
) -> String {
    if !(3..=12).contains(&n_order) {
        return err_json("n_order must be between 3 and 12");
    }
    if !(2..=256).contains(&res) {
        return err_json("resolution must be between 2 and 256");
    }
    to_json(&ops::region_scan(
        n_order, nm3, ntop, nm2_min, nm2_max, nm1_min, nm1_max, res,
    ))
}

/// Run raw head outputs through the constraint layer.
#[wasm_bindgen]
pub fn postprocess(n_order: usize, m1: f64, m2: f64, m3: f64, m4: f64) -> String {
    if !(3..=12).contains(&n_order) {
        return err_json("n_order must be between 3 and 12");
    }
    match ops::postprocess_demo(n_order, [m1, m2, m3, m4]) {
        Ok(demo) => to_json(&demo),
        Err(e) => err_json(&e),
    }
}

/// Solve the closed moment system; `request` is a JSON [`ops::SimRequest`].
#[wasm_bindgen]
pub fn simulate(request: &str) -> String {
    let req: ops::SimRequest = match serde_json::from_str(request) {
        Ok(r) => r,
        Err(e) => return err_json(&format!("bad request: {e}")),
    };
    match ops::simulate(&req) {
        Ok(frames) => to_json(&frames),
        Err(e) => err_json(&e),
    }
}

/// Diffusive-scaling run against the diffusion reference; `request` is a
/// JSON [`ops::DiffusionRequest`].
#[wasm_bindgen]
pub fn diffusion_limit(request: &str) -> String {
    let req: ops::DiffusionRequest = match serde_json::from_str(request) {
        Ok(r) => r,
        Err(e) => return err_json(&format!("bad request: {e}")),
    };
    match ops::diffusion_compare(&req) {
        Ok(cmp) => to_json(&cmp),
        Err(e) => err_json(&e),
    }
}
