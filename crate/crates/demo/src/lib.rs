//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Each operation is a plain Rust function taking and returning JSON text, so
//! it can be tested natively; the `#[wasm_bindgen]` wrappers only convert the
//! error type.

use pairdesign::designs::{bcrd, sorted_block_partition, sorted_pair_matching};
use pairdesign::estimators::{Link, LogisticModelSpec};
use pairdesign::matching::{
    greedy_matching, mahalanobis_distance_matrix, matchset_to_partition, min_weight_perfect_matching, random_matching,
};
use pairdesign::mse::{bcrd_beats_pm, bcrd_expected_r_squared, exact_mse, match_r_squared, mse_gap_bcrd_pm};
use pairdesign::rng::replicate_rng;
use pairdesign::simulation::logistic_quantile_grid;
use pairdesign::{MatchSet, Subjects};
use serde::Serialize;
use wasm_bindgen::prelude::*;

type Out = Result<String, String>;

fn to_json(value: &impl Serialize) -> Out {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

fn msg(e: impl std::fmt::Display) -> String {
    e.to_string()
}

#[derive(Serialize)]
struct CurvePoint {
    n_subjects: usize,
    bcrd: f64,
    block: f64,
    pm: f64,
}

/// Exact MSE of the difference in means for complete randomization, `blocks`
/// sorted blocks and sorted pairs, over sample sizes 16, 32, …, `max_subjects`.
/// Covariates are evenly spaced standard logistic quantiles.
pub fn mse_curves(beta0: f64, beta1: f64, beta_t: f64, link: &str, blocks: usize, max_subjects: usize) -> Out {
    let link: Link = link.parse().map_err(msg)?;
    if blocks == 0 || !(16..=4096).contains(&max_subjects) {
        return Err("need blocks >= 1 and 16 <= max_subjects <= 4096".into());
    }
    let spec = LogisticModelSpec { beta0, beta: vec![beta1], beta_t, link };
    let mut points = Vec::new();
    for n in (16..=max_subjects).step_by(16) {
        let x = logistic_quantile_grid(n);
        let subjects = Subjects::from_rows(
            (0..n).map(|i| i.to_string()).collect(),
            &x.iter().map(|&v| vec![v]).collect::<Vec<_>>(),
            1,
        )
        .map_err(msg)?;
        let model = spec.response_model(&subjects).map_err(msg)?;
        // skip sizes the block count cannot split into even blocks
        let Ok(block) = sorted_block_partition(&x, blocks) else { continue };
        let pm = matchset_to_partition(&sorted_pair_matching(&x).map_err(msg)?).map_err(msg)?;
        points.push(CurvePoint {
            n_subjects: n,
            bcrd: exact_mse(&model, &bcrd(n).map_err(msg)?).map_err(msg)?.total,
            block: exact_mse(&model, &block).map_err(msg)?.total,
            pm: exact_mse(&model, &pm).map_err(msg)?.total,
        });
    }
    to_json(&points)
}

#[derive(Serialize)]
struct MatchingView {
    optimal: Vec<(usize, usize)>,
    optimal_total: f64,
    greedy: Vec<(usize, usize)>,
    greedy_total: f64,
}

/// Mahalanobis-optimal pairs for points given as `[[x, y], …]`, alongside
/// the greedy shortest-edge-first pairing for comparison.
pub fn match_points(points_json: &str) -> Out {
    let rows: Vec<Vec<f64>> = serde_json::from_str(points_json).map_err(msg)?;
    let d = rows.first().map_or(0, Vec::len);
    let subjects = Subjects::from_rows((0..rows.len()).map(|i| i.to_string()).collect(), &rows, d).map_err(msg)?;
    let dist = mahalanobis_distance_matrix(&subjects).map_err(msg)?;
    let optimal = min_weight_perfect_matching(&dist).map_err(msg)?;
    let greedy = greedy_matching(&dist).map_err(msg)?;
    to_json(&MatchingView {
        optimal_total: optimal.total_weight(&dist),
        optimal: optimal.pairs().to_vec(),
        greedy_total: greedy.total_weight(&dist),
        greedy: greedy.pairs().to_vec(),
    })
}

#[derive(Serialize)]
struct GapView {
    pairs: Vec<(usize, usize)>,
    gap_bcrd_minus_pm: f64,
    r_squared: Option<f64>,
    bcrd_expected_r_squared: f64,
    bcrd_beats_pm: bool,
}

/// MSE gap between complete randomization and a pairing of `v`. `mode` is
/// `sorted` (neighbours), `random` (uniform, from `seed`) or `extremes`
/// (smallest with largest, the adversarial case).
pub fn explore_gap(v_json: &str, mode: &str, seed: u64) -> Out {
    let v: Vec<f64> = serde_json::from_str(v_json).map_err(msg)?;
    let n = v.len();
    let matches = match mode {
        "sorted" => sorted_pair_matching(&v).map_err(msg)?,
        "random" => random_matching(n, &mut replicate_rng(seed, "demo", 0)).map_err(msg)?,
        "extremes" => {
            let order = pairdesign::designs::sorted_order(&v).map_err(msg)?;
            MatchSet::new((0..n / 2).map(|k| (order[k], order[n - 1 - k])).collect(), n).map_err(msg)?
        }
        other => return Err(format!("unknown mode {other:?}")),
    };
    to_json(&GapView {
        pairs: matches.pairs().to_vec(),
        gap_bcrd_minus_pm: mse_gap_bcrd_pm(&v, &matches).map_err(msg)?,
        r_squared: match_r_squared(&v, &matches).ok(),
        bcrd_expected_r_squared: bcrd_expected_r_squared(n / 2),
        bcrd_beats_pm: bcrd_beats_pm(&v, &matches).map_err(msg)?,
    })
}

#[wasm_bindgen(js_name = mseCurves)]
pub fn mse_curves_js(
    beta0: f64,
    beta1: f64,
    beta_t: f64,
    link: &str,
    blocks: usize,
    max_subjects: usize,
) -> Result<String, JsError> {
    mse_curves(beta0, beta1, beta_t, link, blocks, max_subjects).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = matchPoints)]
pub fn match_points_js(points_json: &str) -> Result<String, JsError> {
    match_points(points_json).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = exploreGap)]
pub fn explore_gap_js(v_json: &str, mode: &str, seed: u64) -> Result<String, JsError> {
    explore_gap(v_json, mode, seed).map_err(|e| JsError::new(&e))
}
