//! WebAssembly bindings for the static demo page in `www/`. Every entry
//! point takes text from the page and returns a JSON report as a string.

use serde_json::json;
use wasm_bindgen::prelude::*;

use stochsym::dsl::{parse_candidate, parse_system};
use stochsym::expr::{parse_expr, Scope};
use stochsym::kpz::{self, KpzChain, KpzCheck};
use stochsym::model::fokker_planck_of;
use stochsym::verify::{self, CheckKind};

fn fail(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn pretty(v: &serde_json::Value) -> String {
    serde_json::to_string_pretty(v).expect("JSON output")
}

/// Fokker–Planck coefficients of a system written in the DSL.
#[wasm_bindgen]
pub fn derive_fp(system: &str) -> Result<String, JsValue> {
    let sys = parse_system(system).map_err(fail)?;
    let fp = fokker_planck_of(&sys).map_err(fail)?;
    Ok(pretty(&fp.to_json()))
}

/// Checks a candidate against `kind`: spatial, projectable, fp, w or discrete.
#[wasm_bindgen]
pub fn check(system: &str, candidate: &str, kind: &str) -> Result<String, JsValue> {
    let sys = parse_system(system).map_err(fail)?;
    let cand = parse_candidate(candidate, &sys).map_err(fail)?;
    let kind: CheckKind = kind.parse().map_err(fail)?;
    let report = verify::check_candidate(&sys, &cand, kind).map_err(fail)?;
    Ok(pretty(&report.to_json()))
}

/// Runs one of the KPZ chain checks; empty coefficients stay symbolic.
#[wasm_bindgen]
pub fn kpz_check(sites: usize, alpha: &str, beta: &str, check: &str) -> Result<String, JsValue> {
    let coeff = |s: &str, name: &str| {
        if s.trim().is_empty() {
            Ok(stochsym::expr::Expr::var(name))
        } else {
            parse_expr(s, &Scope::permissive()).map_err(fail)
        }
    };
    let chain = KpzChain::new(sites, coeff(alpha, "alpha")?, coeff(beta, "beta")?).map_err(fail)?;
    let which: KpzCheck = check.parse().map_err(fail)?;
    let report = kpz::run_check(&chain, which).map_err(fail)?;
    Ok(pretty(&json!({
        "verdict": report.overall,
        "failing": report.failing().take(8).collect::<Vec<_>>(),
    })))
}
