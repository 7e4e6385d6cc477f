//! Browser bindings: a thin JSON façade over the library so a static page
//! can synthesize hidden instances, run the detection pipeline, and classify
//! chisels entirely client-side.
//!
//! Every function takes and returns JSON strings — no shared state lives on
//! the wasm side, so the page can simply re-run an operation whenever a
//! control changes. Tensor payloads are real-valued, row-major with the last
//! axis fastest, matching the library's linear index.

use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use chiselkit::chisel::Chisel;
use chiselkit::derivation::{solve_derivation, SolveOptions};
use chiselkit::multiarray::MultiArray;
use chiselkit::pattern::conformance;
use chiselkit::spectral::{decompose, order_blocks, unscramble};
use chiselkit::synthesis::{
    add_noise, build_tensor, curve, diagonal_blocks, face_blocks, scramble,
};

/// Eigenvalue clustering tolerance; matches the CLI default.
const EIG_TOL: f64 = 1e-6;
/// Block-mass threshold for conformance; matches the CLI default.
const BLOCK_EPS: f64 = 1e-8;
/// Pattern-membership tolerance; matches the CLI default.
const PATTERN_TOL: f64 = 1e-6;
/// Conditioning cap for the hiding bases.
const SCRAMBLE_CAP: f64 = 1e4;

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

#[derive(Serialize, Deserialize)]
struct TensorPayload {
    dims: Vec<usize>,
    /// Row-major entries, last axis fastest.
    values: Vec<f64>,
}

impl TensorPayload {
    fn from_array(t: &MultiArray) -> TensorPayload {
        TensorPayload {
            dims: t.dims().to_vec(),
            values: t.values().iter().map(|z| z.re).collect(),
        }
    }

    fn to_array(&self) -> Result<MultiArray, JsError> {
        MultiArray::from_real(self.dims.clone(), self.values.clone()).map_err(js_err)
    }
}

#[derive(Serialize)]
struct SynthesisOut {
    preset: String,
    /// Chisel the detector should use on this instance.
    suggested_chisel: String,
    /// The hidden (scrambled, optionally noisy) tensor.
    hidden: TensorPayload,
    /// Part counts of the planted pattern.
    k: Vec<usize>,
    /// Planted block tuples, 1-based.
    truth: Vec<Vec<usize>>,
}

#[derive(Serialize)]
struct DetectionOut {
    verdict: String,
    sigma: Vec<f64>,
    e: usize,
    sigma_ratio: f64,
    conforms: Option<bool>,
    leakage: Option<f64>,
    k: Option<Vec<usize>>,
    /// Exhibited block tuples, 1-based.
    tuples: Option<Vec<Vec<usize>>>,
    /// The tensor pushed back through the recovered bases; on the presets
    /// this makes the planted blocks visible again.
    recovered: Option<TensorPayload>,
    /// Largest imaginary part dropped when flattening the recovered tensor
    /// for display; ~0 unless the candidate had complex spectra.
    recovered_max_imag: Option<f64>,
}

#[derive(Serialize)]
struct ClassifyOut {
    class: String,
    normal_form: Vec<Vec<f64>>,
    chisel: String,
}

fn parse_chisel(name: &str) -> Result<Chisel, JsError> {
    match name {
        "universal" => Chisel::universal(3).map_err(js_err),
        "centroid" => Ok(Chisel::centroid3()),
        other => {
            if let Some(rest) = other.strip_prefix("adjoint:") {
                let axes: Vec<usize> = rest
                    .split(',')
                    .map(|s| s.trim().parse::<usize>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| JsError::new("adjoint axes must be integers"))?;
                if axes.len() != 2 || axes.contains(&0) {
                    return Err(JsError::new("adjoint takes two 1-based axes, e.g. adjoint:1,2"));
                }
                Chisel::adjoint(3, axes[0] - 1, axes[1] - 1).map_err(js_err)
            } else {
                Err(JsError::new(
                    "unknown chisel; use universal, centroid, or adjoint:a,b",
                ))
            }
        }
    }
}

/// Build a hidden benchmark instance: plant a pattern with the chosen
/// preset, optionally deform it with relative gaussian noise, then hide it
/// behind random basis changes on every axis.
#[wasm_bindgen]
pub fn synthesize(preset: &str, seed: u32, noise: f64) -> Result<String, JsError> {
    let (mut spec, suggested) = match preset {
        "diagonal" => (diagonal_blocks(&[9, 9, 9], &[3, 3, 3]).map_err(js_err)?, "centroid"),
        "face" => (face_blocks(&[9, 9, 9], 3, 0, 1).map_err(js_err)?, "adjoint:1,2"),
        "curve" => (curve(&[7, 8, 9], &[7, 8, 9]).map_err(js_err)?, "universal"),
        _ => return Err(JsError::new("unknown preset; use diagonal, face, or curve")),
    };
    spec.seed = seed as u64;
    let (plain, truth) = build_tensor(&spec).map_err(js_err)?;
    let deformed = if noise > 0.0 {
        add_noise(&plain, noise, spec.seed ^ 0x7e15e).map_err(js_err)?
    } else {
        plain
    };
    let (hidden, _bases) =
        scramble(&deformed, spec.seed ^ 0x5c4a_317b, SCRAMBLE_CAP).map_err(js_err)?;
    let out = SynthesisOut {
        preset: preset.to_string(),
        suggested_chisel: suggested.to_string(),
        hidden: TensorPayload::from_array(&hidden),
        k: truth.pattern.k().to_vec(),
        truth: truth
            .pattern
            .tuples()
            .map(|t| t.iter().map(|&b| b + 1).collect())
            .collect(),
    };
    serde_json::to_string(&out).map_err(js_err)
}

/// Run the full detection pipeline on a tensor payload: solve the
/// chisel-derivation system, and when a candidate appears, decompose it,
/// order the blocks, check conformance, and push the tensor back through the
/// recovered bases.
#[wasm_bindgen]
pub fn detect(tensor_json: &str, chisel_name: &str) -> Result<String, JsError> {
    let payload: TensorPayload = serde_json::from_str(tensor_json).map_err(js_err)?;
    let t = payload.to_array()?;
    let c = parse_chisel(chisel_name)?;
    let sol = solve_derivation(&t, &c, &SolveOptions::default()).map_err(js_err)?;
    let sigma_ratio = sol.report.sigma_e_plus_1() / sol.report.sigma_max;
    let mut out = DetectionOut {
        verdict: sol.verdict.to_string(),
        sigma: sol.report.sigma.clone(),
        e: sol.report.e,
        sigma_ratio,
        conforms: None,
        leakage: None,
        k: None,
        tuples: None,
        recovered: None,
        recovered_max_imag: None,
    };
    if out.verdict == "pattern_candidate" {
        let (dec, delta) = decompose(sol.tuple.matrices(), EIG_TOL).map_err(js_err)?;
        let (dec, delta) = order_blocks(dec, delta).map_err(js_err)?;
        let conf = conformance(&t, &dec, &c, &delta, BLOCK_EPS, PATTERN_TOL).map_err(js_err)?;
        let shown =
            chiselkit::pattern::exhibited_pattern(&t, &dec, BLOCK_EPS).map_err(js_err)?;
        let recovered = unscramble(&t, &dec).map_err(js_err)?;
        let max_imag =
            recovered.values().iter().map(|z| z.im.abs()).fold(0.0f64, f64::max);
        out.conforms = Some(conf.conforms);
        out.leakage = Some(conf.leakage);
        out.k = Some(shown.k().to_vec());
        out.tuples = Some(
            shown.tuples().map(|t| t.iter().map(|&b| b + 1).collect()).collect(),
        );
        out.recovered = Some(TensorPayload::from_array(&recovered));
        out.recovered_max_imag = Some(max_imag);
    }
    serde_json::to_string(&out).map_err(js_err)
}

/// Classify a 3-column chisel (JSON array of rows) into one of its seven
/// equivalence classes and report the class's normal form.
#[wasm_bindgen]
pub fn classify(rows_json: &str) -> Result<String, JsError> {
    let rows: Vec<Vec<f64>> = serde_json::from_str(rows_json).map_err(js_err)?;
    let c = Chisel::from_rows(rows).map_err(js_err)?;
    let class = c.classify3().map_err(js_err)?;
    let nf = class.kind.normal_form();
    let out = ClassifyOut {
        class: format!("{:?}", class.kind),
        normal_form: (0..nf.nrows())
            .map(|i| (0..nf.ncols()).map(|j| nf[(i, j)]).collect())
            .collect(),
        chisel: c.to_text(),
    };
    serde_json::to_string(&out).map_err(js_err)
}
