//! Browser demo bindings. Each operation is a plain function returning JSON
//! so it can be tested natively; the `wasm` module wraps them for JS.

use std::collections::BTreeMap;

use qvfuse_core::corpus::default_snapshot_date;
use qvfuse_core::eval::{rbp_from_judgments, Judged};
use qvfuse_core::freshness::{decay_at, DecayParams};
use qvfuse_core::fusion::{fuse_runs, ranking_from_run};
use qvfuse_core::trec_io::{parse_run, DEFAULT_MAX_DEPTH};
use serde::Serialize;

#[derive(Debug, Serialize)]
struct DecayCurve {
    base: f64,
    points: Vec<(f64, f64)>,
}

/// Freshness decay through `(start_days, start_value)` and
/// `(end_days, end_value)`, sampled at `samples` evenly spaced days in
/// `[0, max_days]`.
pub fn decay_curve(
    start_days: f64,
    start_value: f64,
    end_days: f64,
    end_value: f64,
    max_days: f64,
    samples: usize,
) -> Result<String, String> {
    let p = DecayParams::with_fit_points(
        (start_days, start_value),
        (end_days, end_value),
        default_snapshot_date(),
    )
    .map_err(|e| e.to_string())?;
    if max_days.is_nan() || max_days <= 0.0 || samples < 2 {
        return Err("need a positive day range and at least two samples".into());
    }
    let step = max_days / (samples - 1) as f64;
    let points = (0..samples)
        .map(|i| {
            let d = i as f64 * step;
            (d, decay_at(d, &p))
        })
        .collect();
    Ok(serde_json::to_string(&DecayCurve {
        base: p.base(),
        points,
    })
    .unwrap())
}

#[derive(Debug, Serialize)]
struct RbpStep {
    rank: usize,
    state: &'static str,
    weight: f64,
    score: f64,
    residual: f64,
}

#[derive(Debug, Serialize)]
struct RbpProfile {
    score: f64,
    residual: f64,
    steps: Vec<RbpStep>,
}

fn parse_states(judgments: &str) -> Result<Vec<Judged>, String> {
    judgments
        .chars()
        .filter(|c| !c.is_whitespace() && *c != ',')
        .map(|c| match c {
            'R' | 'r' | '1' | '+' => Ok(Judged::Relevant),
            'N' | 'n' | '0' | '-' => Ok(Judged::NonRelevant),
            '?' | 'U' | 'u' | '.' => Ok(Judged::Unjudged),
            other => Err(format!("unknown judgment symbol {other:?}; use R, N, or ?")),
        })
        .collect()
}

/// RBP after each prefix of a judgment string such as `"R N ? R"`
/// (relevant, non-relevant, unjudged).
pub fn rbp_profile(judgments: &str, phi: f64) -> Result<String, String> {
    if !(phi > 0.0 && phi < 1.0) {
        return Err(format!("phi must lie in (0, 1), got {phi}"));
    }
    let states = parse_states(judgments)?;
    let steps = (1..=states.len())
        .map(|n| {
            let s = rbp_from_judgments(states[..n].iter().copied(), phi);
            RbpStep {
                rank: n,
                state: match states[n - 1] {
                    Judged::Relevant => "relevant",
                    Judged::NonRelevant => "nonrelevant",
                    Judged::Unjudged => "unjudged",
                },
                weight: (1.0 - phi) * phi.powi(n as i32 - 1),
                score: s.score,
                residual: s.residual,
            }
        })
        .collect();
    let total = rbp_from_judgments(states, phi);
    Ok(serde_json::to_string(&RbpProfile {
        score: total.score,
        residual: total.residual,
        steps,
    })
    .unwrap())
}

#[derive(Debug, Serialize)]
struct FusedRow {
    topic: String,
    rank: usize,
    doc_id: String,
    score: f64,
    /// Raw score per source tag, for documents the source retrieved.
    sources: BTreeMap<String, f64>,
}

/// CombSUM over TREC run lines pasted together; lines are grouped into
/// runs by their tag column.
pub fn fuse_trec(text: &str, depth: usize) -> Result<String, String> {
    let mut groups: BTreeMap<&str, String> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let tag = line
            .split_whitespace()
            .nth(5)
            .ok_or_else(|| format!("line {}: expected 6 columns", i + 1))?;
        let group = groups.entry(tag).or_default();
        group.push_str(line);
        group.push('\n');
    }
    if groups.is_empty() {
        return Err("no run lines".into());
    }
    let runs = groups
        .iter()
        .map(|(tag, lines)| {
            parse_run(lines, DEFAULT_MAX_DEPTH).map_err(|e| format!("run {tag}: {e}"))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let fused = fuse_runs(&runs, depth, "fused").map_err(|e| e.to_string())?;
    let mut rows = Vec::new();
    for (topic, entries) in fused.topics() {
        let sources: Vec<_> = runs.iter().map(|r| ranking_from_run(r, topic)).collect();
        for e in entries {
            rows.push(FusedRow {
                topic: topic.to_string(),
                rank: e.rank,
                doc_id: e.doc_id.clone(),
                score: e.score,
                sources: sources
                    .iter()
                    .filter_map(|s| {
                        let d = s.docs.iter().find(|d| d.doc_id == e.doc_id)?;
                        Some((s.model.clone(), d.score))
                    })
                    .collect(),
            });
        }
    }
    Ok(serde_json::to_string(&rows).unwrap())
}

#[cfg(target_arch = "wasm32")]
mod wasm {
    use wasm_bindgen::prelude::*;

    #[wasm_bindgen(js_name = decayCurve)]
    pub fn decay_curve(
        start_days: f64,
        start_value: f64,
        end_days: f64,
        end_value: f64,
        max_days: f64,
        samples: usize,
    ) -> Result<String, JsError> {
        super::decay_curve(
            start_days,
            start_value,
            end_days,
            end_value,
            max_days,
            samples,
        )
        .map_err(|e| JsError::new(&e))
    }

    #[wasm_bindgen(js_name = rbpProfile)]
    pub fn rbp_profile(judgments: &str, phi: f64) -> Result<String, JsError> {
        super::rbp_profile(judgments, phi).map_err(|e| JsError::new(&e))
    }

    #[wasm_bindgen(js_name = fuseTrec)]
    pub fn fuse_trec(text: &str, depth: usize) -> Result<String, JsError> {
        super::fuse_trec(text, depth).map_err(|e| JsError::new(&e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    fn json(s: Result<String, String>) -> Value {
        serde_json::from_str(&s.unwrap()).unwrap()
    }

    #[test]
    fn decay_curve_hits_fit_points() {
        let v = json(decay_curve(0.0, 1.0, 120.0, 0.01, 240.0, 5));
        let pts = v["points"].as_array().unwrap();
        assert_eq!(pts.len(), 5);
        let at = |i: usize| (pts[i][0].as_f64().unwrap(), pts[i][1].as_f64().unwrap());
        assert_eq!(at(0), (0.0, 1.0));
        assert_eq!(at(2).0, 120.0);
        assert!((at(2).1 - 0.01).abs() < 1e-9);
        assert!((at(4).1 - 1e-4).abs() < 1e-9);
    }

    #[test]
    fn decay_curve_rejects_bad_input() {
        assert!(decay_curve(0.0, 1.0, 0.0, 0.5, 100.0, 10).is_err());
        assert!(decay_curve(0.0, 1.0, 120.0, 0.01, 0.0, 10).is_err());
        assert!(decay_curve(0.0, 1.0, 120.0, 0.01, 10.0, 1).is_err());
    }

    #[test]
    fn rbp_profile_accumulates() {
        let v = json(rbp_profile("R N ?", 0.5));
        assert_eq!(v["score"], 0.5);
        assert_eq!(v["residual"], 0.25);
        let steps = v["steps"].as_array().unwrap();
        assert_eq!(steps.len(), 3);
        assert_eq!(steps[0]["residual"], 0.5);
        assert_eq!(steps[1]["state"], "nonrelevant");
        assert_eq!(steps[2]["weight"], 0.125);
    }

    #[test]
    fn rbp_profile_of_nothing_is_all_residual() {
        let v = json(rbp_profile("", 0.8));
        assert_eq!(v["score"], 0.0);
        assert_eq!(v["residual"], 1.0);
        assert!(rbp_profile("R X", 0.5).is_err());
        assert!(rbp_profile("R", 1.0).is_err());
    }

    #[test]
    fn fuse_trec_groups_by_tag() {
        let text = "1 Q0 a 1 10 s1\n1 Q0 b 2 5 s1\n1 Q0 c 3 0 s1\n\
                    1 Q0 b 1 3 s2\n1 Q0 a 2 1 s2\n";
        let v = json(fuse_trec(text, 10));
        let rows = v.as_array().unwrap();
        let order: Vec<&str> = rows.iter().map(|r| r["doc_id"].as_str().unwrap()).collect();
        // a = 1 + 0, b = 0.5 + 1, c = 0
        assert_eq!(order, ["b", "a", "c"]);
        assert_eq!(rows[0]["score"], 1.5);
        assert_eq!(rows[0]["sources"]["s1"], 5.0);
        assert_eq!(rows[2]["sources"].as_object().unwrap().len(), 1);
    }

    #[test]
    fn fuse_trec_reports_bad_lines() {
        assert!(fuse_trec("1 Q0 a 1\n", 10).unwrap_err().contains("line 1"));
        assert!(fuse_trec("  \n", 10).is_err());
    }
}
