//! JND-spaced ladder selection by bisection over the rate parameter.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{CodecConfig, RateParam, RateParamKind, RateRange};
use crate::error::{Error, Result};

/// Maximum shortfall of a chosen point below its target.
pub const BISECTION_TOLERANCE: f64 = 0.5;

const TIE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JndParams {
    #[serde(default = "JndParams::default_step")]
    pub step: f64,
    #[serde(default = "JndParams::default_floor")]
    pub floor: f64,
    #[serde(default = "JndParams::default_points")]
    pub points: usize,
}

impl JndParams {
    fn default_step() -> f64 {
        6.0
    }
    fn default_floor() -> f64 {
        82.0
    }
    fn default_points() -> usize {
        5
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) || !self.floor.is_finite() || self.points == 0 {
            return Err(Error::Config(format!("invalid JND parameters {self:?}")));
        }
        Ok(())
    }

    /// `points` evenly spaced targets from `top` down to
    /// `max(top - (points-1)*step, floor)`.
    pub fn targets(&self, top: f64) -> Vec<f64> {
        if self.points == 1 {
            return vec![top];
        }
        let bottom = (top - (self.points - 1) as f64 * self.step).max(self.floor);
        let gap = (top - bottom) / (self.points - 1) as f64;
        (0..self.points).map(|i| if i + 1 == self.points { bottom } else { top - gap * i as f64 }).collect()
    }
}

impl Default for JndParams {
    fn default() -> Self {
        JndParams { step: Self::default_step(), floor: Self::default_floor(), points: Self::default_points() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JndLadder {
    /// Selected points, from highest to lowest quality, without repeats.
    pub rate_params: Vec<RateParam>,
    pub targets: Vec<f64>,
    pub qualities: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Rate-parameter values ordered from highest to lowest expected quality.
fn quality_order(config: &CodecConfig) -> Vec<RateParam> {
    let mut values = config.rate_param_range.values();
    if matches!(config.rate_param_range, RateRange::Labels(_)) && config.rate_param_kind == RateParamKind::QualityLevel {
        values.reverse();
    }
    values
}

/// Select a JND ladder across the codec's whole rate-parameter range.
pub fn build_jnd_ladder<F>(config: &CodecConfig, quality_fn: F, params: &JndParams) -> Result<JndLadder>
where
    F: FnMut(&RateParam) -> Result<f64>,
{
    jnd_ladder_over(&quality_order(config), quality_fn, params)
}

/// Select a JND ladder from `values`, which must be ordered from highest to
/// lowest expected quality. `quality_fn` is called at most once per value.
pub fn jnd_ladder_over<F>(values: &[RateParam], mut quality_fn: F, params: &JndParams) -> Result<JndLadder>
where
    F: FnMut(&RateParam) -> Result<f64>,
{
    params.validate()?;
    if values.is_empty() {
        return Err(Error::Config("empty rate-parameter range".into()));
    }
    let mut cache: HashMap<usize, f64> = HashMap::new();
    let mut sample = |i: usize| -> Result<f64> {
        if let Some(&q) = cache.get(&i) {
            return Ok(q);
        }
        let q = quality_fn(&values[i])?;
        cache.insert(i, q);
        Ok(q)
    };

    let top = sample(0)?;
    if top < params.floor {
        return Err(Error::ClipUnreachable { top, floor: params.floor });
    }
    let targets = params.targets(top);
    let last = values.len() - 1;

    let mut chosen: Vec<usize> = Vec::with_capacity(targets.len());
    let mut qualities = Vec::with_capacity(targets.len());
    for &target in &targets {
        // Largest index whose quality meets the target, assuming quality is
        // non-increasing in the index. Index 0 meets every target by construction.
        let (mut lo, mut hi) = (0usize, last);
        if sample(last)? >= target {
            lo = last;
        } else {
            while hi - lo > 1 {
                let mid = lo + (hi - lo) / 2;
                if sample(mid)? >= target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
        }
        let mut pick = lo;
        if lo < last {
            let q_lo = sample(lo)?;
            let q_next = sample(lo + 1)?;
            if q_next >= target - BISECTION_TOLERANCE && (target - q_next) <= (q_lo - target) + TIE_EPS {
                pick = lo + 1;
            }
        }
        chosen.push(pick);
        qualities.push(sample(pick)?);
    }

    let mut warnings = Vec::new();
    let mut sampled: Vec<(usize, f64)> = cache.into_iter().collect();
    sampled.sort_by_key(|&(i, _)| i);
    for w in sampled.windows(2) {
        if w[1].1 > w[0].1 + TIE_EPS {
            warnings.push(format!(
                "quality not monotone: {} at {} rises to {} at {}",
                w[0].1, values[w[0].0], w[1].1, values[w[1].0]
            ));
        }
    }

    let mut order: Vec<usize> = (0..chosen.len()).collect();
    order.sort_by_key(|&k| chosen[k]);
    order.dedup_by_key(|k| chosen[*k]);
    Ok(JndLadder {
        rate_params: order.iter().map(|&k| values[chosen[k]].clone()).collect(),
        targets: order.iter().map(|&k| targets[k]).collect(),
        qualities: order.iter().map(|&k| qualities[k]).collect(),
        warnings,
    })
}
