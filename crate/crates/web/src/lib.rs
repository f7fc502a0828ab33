//! Browser bindings: simulated saturation curves, ITS stability and
//! similarity-matrix reordering.
//!
//! Each exported function takes plain values and returns a JSON string; the
//! `*_json` functions hold the logic so they can be tested natively.

use codesat_core::codebook::{InitialCode, InterviewCodeSet};
use codesat_core::judge::StubJudge;
use codesat_core::metrics::{build_report, summarize_its};
use codesat_core::plot::{fit_annotation, fit_series, line_chart_svg, Series};
use codesat_core::reducer::reduce;
use codesat_core::similarity::{heatmap_svg, optimal_diagonal_ordering, SimilarityMatrix, DEFAULT_HIGHLIGHT};
use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use wasm_bindgen::prelude::*;

fn err(e: impl ToString) -> String {
    e.to_string()
}

/// Simulates coding `interviews` transcripts, each yielding `codes_per_interview`
/// codes drawn from `themes` themes with Zipf(`skew`) popularity, then reduces
/// them with a judge that calls two codes duplicates when they share a theme.
pub fn simulate_saturation_json(
    interviews: usize,
    codes_per_interview: usize,
    themes: usize,
    skew: f64,
    seed: u64,
) -> Result<String, String> {
    if interviews < 2 || codes_per_interview == 0 || interviews > 200 || codes_per_interview > 100 {
        return Err("need 2-200 interviews and 1-100 codes per interview".into());
    }
    if themes < codes_per_interview || themes > 5000 {
        return Err("themes must be at least the codes per interview (and at most 5000)".into());
    }
    if !(0.0..=5.0).contains(&skew) {
        return Err("skew must be between 0 and 5".into());
    }
    let weights: Vec<f64> = (0..themes).map(|t| 1.0 / ((t + 1) as f64).powf(skew)).collect();
    let dist = WeightedIndex::new(&weights).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut sets = Vec::with_capacity(interviews);
    for i in 0..interviews {
        let mut picked: Vec<usize> = Vec::with_capacity(codes_per_interview);
        while picked.len() < codes_per_interview {
            let t = dist.sample(&mut rng);
            if !picked.contains(&t) {
                picked.push(t);
            }
        }
        let codes = picked
            .iter()
            .enumerate()
            .map(|(j, t)| InitialCode::new(format!("Theme {t}"), format!("view {j} from interview {}", i + 1), ""))
            .collect::<Result<Vec<_>, _>>()
            .map_err(err)?;
        sets.push(InterviewCodeSet::new(format!("sim{:03}", i + 1), i + 1, codes).map_err(err)?);
    }

    let judge = StubJudge::new("same-theme", |a: &InitialCode, b: &InitialCode| a.name == b.name);
    let reduction = reduce(&sets, &judge).map_err(err)?;
    let report = build_report("simulation", "identity", "same-theme", reduction.counts).map_err(err)?;

    let points = |f: fn(&codesat_core::metrics::PositionCount) -> usize| -> Vec<(f64, f64)> {
        report.counts.iter().enumerate().map(|(k, c)| ((k + 1) as f64, f(c) as f64)).collect()
    };
    let mut series = vec![
        Series { label: "TCC".into(), points: points(|c| c.cumulative_total), dashed: false },
        Series { label: "UCC".into(), points: points(|c| c.cumulative_unique), dashed: false },
    ];
    let mut notes = Vec::new();
    if let Some(f) = &report.fit_unique {
        series.push(fit_series("UCC fit", f, report.counts.len()));
        notes.push(fit_annotation("UCC", f));
    }
    notes.push(format!("ITS = {}/{} = {}", report.unique_codes, report.total_codes, report.its_display()));
    let svg = line_chart_svg("Simulated cumulative codebooks", &series, &notes);
    Ok(json!({
        "total": report.total_codes,
        "unique": report.unique_codes,
        "its": report.its,
        "its_display": report.its_display(),
        "tcc": report.counts.iter().map(|c| c.cumulative_total).collect::<Vec<_>>(),
        "ucc": report.counts.iter().map(|c| c.cumulative_unique).collect::<Vec<_>>(),
        "fit_unique": report.fit_unique,
        "svg": svg,
    })
    .to_string())
}

/// CoV, mean, sample SD and displayed range of ITS values given as text
/// separated by commas, spaces or newlines.
pub fn stability_json(values: &str) -> Result<String, String> {
    let parsed = values
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| format!("'{s}' is not a number")))
        .collect::<Result<Vec<_>, _>>()?;
    let s = summarize_its(&parsed).map_err(err)?;
    serde_json::to_string(&s).map_err(err)
}

/// Reorders a similarity matrix (JSON array of rows) so the best one-to-one
/// matches sit on the diagonal.
pub fn reorder_matrix_json(rows: &str) -> Result<String, String> {
    let rows: Vec<Vec<f64>> = serde_json::from_str(rows).map_err(|e| format!("matrix must be a JSON array of rows: {e}"))?;
    if rows.len() > 60 || rows.first().is_some_and(|r| r.len() > 60) {
        return Err("matrix is limited to 60x60 in the demo".into());
    }
    let m = SimilarityMatrix::from_rows(&rows).map_err(err)?;
    let (ordering, ordered) = optimal_diagonal_ordering(&m).map_err(err)?;
    let reordered: Vec<Vec<f64>> = (0..ordered.rows()).map(|i| (0..ordered.cols()).map(|j| ordered.get(i, j)).collect()).collect();
    Ok(json!({
        "pairs": ordering.pairs,
        "score": ordering.score,
        "original_trace": m.trace(),
        "row_labels": ordered.row_labels,
        "col_labels": ordered.col_labels,
        "reordered": reordered,
        "svg_before": heatmap_svg(&m, Some(DEFAULT_HIGHLIGHT)),
        "svg_after": heatmap_svg(&ordered, Some(DEFAULT_HIGHLIGHT)),
    })
    .to_string())
}

#[wasm_bindgen]
pub fn simulate_saturation(
    interviews: usize,
    codes_per_interview: usize,
    themes: usize,
    skew: f64,
    seed: u32,
) -> Result<String, JsError> {
    simulate_saturation_json(interviews, codes_per_interview, themes, skew, seed as u64).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn stability(values: &str) -> Result<String, JsError> {
    stability_json(values).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn reorder_matrix(rows: &str) -> Result<String, JsError> {
    reorder_matrix_json(rows).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn simulation_is_seeded_and_consistent() {
        let a = simulate_saturation_json(12, 15, 80, 1.0, 3).unwrap();
        assert_eq!(a, simulate_saturation_json(12, 15, 80, 1.0, 3).unwrap());
        let v: Value = serde_json::from_str(&a).unwrap();
        assert_eq!(v["total"], 180);
        let unique = v["unique"].as_u64().unwrap();
        assert!((15..=80).contains(&unique));
        assert_eq!(v["ucc"][0], 15);
        assert!(v["svg"].as_str().unwrap().starts_with("<svg"));
    }

    #[test]
    fn simulation_rejects_bad_input() {
        assert!(simulate_saturation_json(12, 15, 10, 1.0, 0).is_err());
        assert!(simulate_saturation_json(1, 15, 80, 1.0, 0).is_err());
    }

    #[test]
    fn stability_reproduces_published_cov() {
        let v: Value = serde_json::from_str(&stability_json("0.40, 0.43, 0.43, 0.42, 0.40, 0.42, 0.39").unwrap()).unwrap();
        assert!((v["cov_percent"].as_f64().unwrap() - 3.88).abs() < 0.01);
        assert!(stability_json("0.4").is_err());
        assert!(stability_json("0.4, x").is_err());
    }

    #[test]
    fn reorder_two_by_two() {
        let v: Value = serde_json::from_str(&reorder_matrix_json("[[0.1,0.9],[0.8,0.2]]").unwrap()).unwrap();
        assert!((v["score"].as_f64().unwrap() - 1.7).abs() < 1e-12);
        assert_eq!(v["reordered"][0][0], 0.9);
        assert!(reorder_matrix_json("[[1,2],[3]]").is_err());
    }
}
