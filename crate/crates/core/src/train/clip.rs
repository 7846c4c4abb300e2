use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamSet;

/// Rescale the full gradient to norm `threshold` whenever its global norm
/// reaches the threshold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipRule {
    pub threshold: f64,
}

impl ClipRule {
    pub fn new(threshold: f64) -> Result<Self> {
        if !(threshold > 0.0 && threshold.is_finite()) {
            return Err(Error::invalid(format!(
                "clip threshold must be positive, got {threshold}"
            )));
        }
        Ok(ClipRule { threshold })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClipOutcome {
    pub pre_norm: f64,
    pub post_norm: f64,
    /// Factor applied to every component (1 when untouched).
    pub scale: f64,
    pub clipped: bool,
}

fn norm(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Clips a flat gradient in place.
pub fn clip_flat(grad: &mut [f64], rule: &ClipRule) -> Result<ClipOutcome> {
    if let Some(i) = grad.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteGradient {
            name: format!("component {i}"),
        });
    }
    Ok(clip_checked(grad, rule))
}

fn clip_checked(grad: &mut [f64], rule: &ClipRule) -> ClipOutcome {
    let pre = norm(grad);
    if pre < rule.threshold {
        return ClipOutcome {
            pre_norm: pre,
            post_norm: pre,
            scale: 1.0,
            clipped: false,
        };
    }
    let original = grad.to_vec();
    let mut scale = rule.threshold / pre;
    // Rounding can leave the rescaled norm an ulp above the threshold; step
    // the factor down until it is not.
    let post = loop {
        for (g, &o) in grad.iter_mut().zip(&original) {
            *g = o * scale;
        }
        let post = norm(grad);
        if post <= rule.threshold {
            break post;
        }
        scale = scale.next_down();
    };
    ClipOutcome {
        pre_norm: pre,
        post_norm: post,
        scale,
        clipped: true,
    }
}

/// Clips a structured gradient by its global norm across all blocks.
/// A non-finite entry is an error naming the offending block.
pub fn clip_gradients<P: ParamSet>(grads: &mut P, rule: &ClipRule) -> Result<ClipOutcome> {
    let mut bad = None;
    grads.visit("", &mut |p| {
        if bad.is_none() {
            if let Some(i) = p.data.iter().position(|v| !v.is_finite()) {
                bad = Some(format!("{}[{i}]", p.name));
            }
        }
    });
    if let Some(name) = bad {
        return Err(Error::NonFiniteGradient { name });
    }
    let mut flat = grads.flatten();
    let outcome = clip_checked(&mut flat, rule);
    if outcome.clipped {
        grads.assign_flat(&flat)?;
    }
    Ok(outcome)
}
