//! WebAssembly bindings for the browser demo. Every function takes and
//! returns a JSON string.

pub mod session;

use wasm_bindgen::prelude::*;

fn js(r: Result<String, String>) -> Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e))
}

/// Full MMR versus the twin model on the true index.
#[wasm_bindgen]
pub fn compare(params: &str) -> Result<String, JsValue> {
    js(session::compare(params))
}

/// Trains the composite model; returns trajectory and margins.
#[wasm_bindgen]
pub fn train(params: &str) -> Result<String, JsValue> {
    js(session::train(params))
}

/// ALE curve and importance ranking for the last trained model.
#[wasm_bindgen]
pub fn explain(params: &str) -> Result<String, JsValue> {
    js(session::explain(params))
}
