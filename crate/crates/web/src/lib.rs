//! WebAssembly entry points for the demo page in `www/`.
//!
//! Every export returns a JSON string; failures come back as `{"error": "..."}`.

use qs_trotter::corpus::{self, trotter_case};
use qs_trotter::focksim::{compare_with_semigroups, output_gram, simulate_cocycle, ProductState, ToyFockConfig};
use qs_trotter::numkit::{CMatrix, I};
use qs_trotter::trotter::{convergence_sweep, lie_product};
use qs_trotter::Dyadic;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

const MAX_LEVEL: u32 = 12;
const MAX_DIM_H: u32 = 6;
const MAX_SLOT_LEVEL: u32 = 11;

fn respond(r: qs_trotter::Result<Value>) -> String {
    match r {
        Ok(v) => v.to_string(),
        Err(e) => json!({ "error": e.to_string() }).to_string(),
    }
}

/// Dyadic Trotter error against the limit for a seeded non-commuting pair on
/// `h = C^dim_h`, one noise each, test functions of order 2, levels `2..=n_max`.
#[wasm_bindgen]
pub fn trotter_convergence(seed: u32, dim_h: u32, n_max: u32) -> String {
    respond((|| {
        let dim_h = dim_h.clamp(1, MAX_DIM_H) as usize;
        let n_max = n_max.clamp(3, MAX_LEVEL);
        let case = trotter_case(seed as u64, dim_h, 1, 1, 2);
        let rep = convergence_sweep(&case.f1, &case.f2, &case.f, &case.g, Dyadic::ONE, 2, n_max)?;
        let mut v = rep.to_json();
        v["strictly_decreasing"] = json!(rep.strictly_decreasing());
        Ok(v)
    })())
}

/// `‖(e^{hZ1} e^{hZ2})^{t/h} − e^{t(Z1+Z2)}‖` for `Z1 = iσx`, `Z2 = i·coupling·σz`
/// and `h = 2^{-n}`, `n = 1..=n_max`. Coupling 0 gives commuting factors.
#[wasm_bindgen]
pub fn lie_error_curve(coupling: f64, t: f64, n_max: u32) -> String {
    respond((|| {
        if !coupling.is_finite() || !t.is_finite() || t <= 0.0 {
            return Err(qs_trotter::Error::Argument("coupling must be finite and t positive".into()));
        }
        let n_max = n_max.clamp(2, 2 * MAX_LEVEL);
        let z = qs_trotter::numkit::ZERO;
        let sx = CMatrix::from_row_major(2, 2, vec![z, I, I, z])?;
        let sz = CMatrix::from_row_major(2, 2, vec![I * coupling, z, z, -I * coupling])?;
        let mut hs = Vec::new();
        let mut errors = Vec::new();
        for n in 1..=n_max {
            let h = 0.5f64.powi(n as i32);
            hs.push(h);
            errors.push(lie_product(&sx, &sz, t, h)?.error);
        }
        Ok(json!({ "h": hs, "errors": errors, "coupling": coupling, "t": t }))
    })())
}

/// Toy Fock cocycle against the associated semigroups on `[0, 1[` for
/// `m = 2^2, ..., 2^max_slot_level` slots, plus the vacuum isometry defect.
#[wasm_bindgen]
pub fn fock_oracle(seed: u32, dim_h: u32, max_slot_level: u32) -> String {
    respond((|| {
        let dim_h = dim_h.clamp(1, 4) as usize;
        let top = max_slot_level.clamp(3, MAX_SLOT_LEVEL);
        let mut r = corpus::rng(seed as u64);
        let f = corpus::unitary_generator(&mut r, dim_h, 1);
        let fs = corpus::step_function(&mut r, 1, 2, 3);
        let gs = corpus::step_function(&mut r, 1, 2, 3);
        let mut slots = Vec::new();
        let mut errors = Vec::new();
        let mut defects = Vec::new();
        for level in 2..=top {
            let m = 1usize << level;
            let cfg = ToyFockConfig::new(Dyadic::ONE, m, dim_h, 1)?;
            let cmp = compare_with_semigroups(&f, &fs, &gs, Dyadic::ONE, &cfg)?;
            let u = simulate_cocycle(&f, &cfg, Dyadic::ONE)?;
            let gram = output_gram(&u, &ProductState::vacuum(&cfg))?;
            slots.push(m);
            errors.push(cmp.error);
            defects.push(gram.dist(&CMatrix::identity(dim_h)));
        }
        Ok(json!({ "slots": slots, "errors": errors, "vacuum_norm_defect": defects }))
    })())
}
