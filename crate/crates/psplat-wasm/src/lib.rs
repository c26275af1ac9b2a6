//! Browser demo bindings: generate a synthetic scene, run the panoptic
//! pipeline in memory, orbit-render the cloud to an RGBA buffer, and
//! highlight text-query matches. The heavy lifting lives in [`demo`]; this
//! module only adapts it to wasm-bindgen.

mod demo;

pub use demo::{render_points, DemoState};

use wasm_bindgen::prelude::*;

fn err_to_js(e: psplat::Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}

#[wasm_bindgen]
pub struct Demo {
    inner: DemoState,
}

#[wasm_bindgen]
impl Demo {
    /// Generates a fresh scene. `sigma_f` is feature noise, `rho_m` the
    /// per-view mask over-segmentation rate.
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, objects: u32, sigma_f: f32, rho_m: f32) -> Result<Demo, JsValue> {
        let inner = DemoState::generate(
            u64::from(seed),
            objects as usize,
            f64::from(sigma_f),
            f64::from(rho_m),
        )
        .map_err(err_to_js)?;
        Ok(Demo { inner })
    }

    /// Runs fusion, distillation, graph cuts, clustering, labeling, and
    /// evaluation; returns a metrics JSON string.
    #[wasm_bindgen(js_name = runPipeline)]
    pub fn run_pipeline(&mut self) -> Result<String, JsValue> {
        self.inner.run_pipeline().map_err(err_to_js)
    }

    /// JSON array of class names usable with `query`.
    #[wasm_bindgen(js_name = classNames)]
    pub fn class_names(&self) -> String {
        self.inner.class_names()
    }

    /// Text query: returns matching instance ids (JSON) and arms the
    /// "query" render mode highlight.
    pub fn query(&mut self, name: &str) -> Result<String, JsValue> {
        self.inner.query(name).map_err(err_to_js)
    }

    /// RGBA frame (width*height*4) of the cloud under the given mode:
    /// gt-instance | gt-class | segments | pred-instance | pred-class |
    /// confidence | query.
    pub fn render(
        &self,
        mode: &str,
        yaw_deg: f32,
        pitch_deg: f32,
        zoom: f32,
        width: u32,
        height: u32,
    ) -> Result<Vec<u8>, JsValue> {
        self.inner
            .render(
                mode,
                f64::from(yaw_deg),
                f64::from(pitch_deg),
                f64::from(zoom),
                width,
                height,
            )
            .map_err(err_to_js)
    }
}
