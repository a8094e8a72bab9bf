//! Winner-take-all selection and the soft-bounded STDP rule.

use alloc::vec;
use alloc::vec::Vec;

use super::layer::SpikingConv;
use super::{SpikeWave, NO_SPIKE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StdpConfig {
    pub a_plus: f64,
    pub a_minus: f64,
    /// Learning neurons per stimulus.
    pub kwta: usize,
    /// Chebyshev radius of the lateral inhibition around each winner.
    pub inhibition_radius: usize,
    /// Training stops once the mean `w (1 - w)` falls below this.
    pub convergence_threshold: f64,
    pub max_passes: usize,
    /// Double `a_plus` after every this many stimuli, up to `a_plus_max`,
    /// keeping the ratio `a_minus / a_plus`. `None` keeps the rates fixed.
    pub rate_doubling_interval: Option<usize>,
    pub a_plus_max: f64,
}

impl Default for StdpConfig {
    fn default() -> Self {
        StdpConfig {
            a_plus: 0.004,
            a_minus: -0.003,
            kwta: 5,
            inhibition_radius: 3,
            convergence_threshold: 0.01,
            max_passes: 2,
            rate_doubling_interval: Some(500),
            a_plus_max: 0.15,
        }
    }
}

impl StdpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.a_plus > 0.0 && self.a_minus < 0.0) {
            return Err(Error::invalid("stdp rates", "need a_plus > 0 > a_minus"));
        }
        if self.kwta == 0 {
            return Err(Error::invalid("kwta", "must be >= 1"));
        }
        if self.rate_doubling_interval == Some(0) {
            return Err(Error::invalid("rate_doubling_interval", "must be >= 1"));
        }
        Ok(())
    }

    /// Rates after `seen` stimuli under the doubling schedule.
    pub fn rates_at(&self, seen: usize) -> (f64, f64) {
        let Some(every) = self.rate_doubling_interval else {
            return (self.a_plus, self.a_minus);
        };
        let ratio = self.a_minus / self.a_plus;
        let mut a = self.a_plus;
        for _ in 0..seen / every {
            if a >= self.a_plus_max {
                break;
            }
            a = (a * 2.0).min(self.a_plus_max);
        }
        (a, a * ratio)
    }
}

/// A learning neuron: map, position, and spike time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Winner {
    pub map: usize,
    pub y: usize,
    pub x: usize,
    pub time: u8,
}

/// Greedy k-WTA. Spiking neurons are taken in order of earliest spike, then
/// highest potential, then lowest flat index; each winner inhibits its whole
/// map and every map inside its inhibition window.
pub fn select_winners(wave: &SpikeWave, kwta: usize, radius: usize) -> Vec<Winner> {
    let (c, h, w) = (wave.channels(), wave.height(), wave.width());
    let mut candidates: Vec<usize> = (0..wave.times().len()).filter(|&i| wave.times()[i] != NO_SPIKE).collect();
    let (t, p) = (wave.times(), wave.potentials());
    candidates.sort_by(|&a, &b| t[a].cmp(&t[b]).then(p[b].total_cmp(&p[a])).then(a.cmp(&b)));
    let mut map_taken = vec![false; c];
    let mut blocked = vec![false; h * w];
    let mut winners = Vec::with_capacity(kwta);
    for i in candidates {
        if winners.len() == kwta {
            break;
        }
        let (m, pos) = (i / (h * w), i % (h * w));
        if map_taken[m] || blocked[pos] {
            continue;
        }
        let (y, x) = (pos / w, pos % w);
        map_taken[m] = true;
        for by in y.saturating_sub(radius)..(y + radius + 1).min(h) {
            for bx in x.saturating_sub(radius)..(x + radius + 1).min(w) {
                blocked[by * w + bx] = true;
            }
        }
        winners.push(Winner { map: m, y, x, time: t[i] });
    }
    winners
}

/// Applies `dw = a * w (1 - w)` to each winner's kernel, with `a_plus`
/// where the pre-synaptic neuron spiked no later than the winner and
/// `a_minus` otherwise (including silent and padding inputs).
pub fn stdp_update(layer: &mut SpikingConv, input: &SpikeWave, winners: &[Winner], a_plus: f64, a_minus: f64) -> Result<()> {
    if input.channels() != layer.in_maps() {
        return Err(Error::DimensionMismatch {
            expected: layer.in_maps(),
            actual: input.channels(),
        });
    }
    let (h, w) = (input.height(), input.width());
    let (k, pad) = (layer.kernel(), layer.padding());
    for win in winners {
        if win.map >= layer.out_maps() {
            return Err(Error::invalid("winner", "map out of range"));
        }
        for c in 0..layer.in_maps() {
            for ky in 0..k {
                for kx in 0..k {
                    let pre = match ((win.y + ky).checked_sub(pad), (win.x + kx).checked_sub(pad)) {
                        (Some(y), Some(x)) if y < h && x < w => input.times()[(c * h + y) * w + x],
                        _ => NO_SPIKE,
                    };
                    let rate = if pre <= win.time { a_plus } else { a_minus };
                    let i = layer.weight_index(win.map, c, ky, kx);
                    let wt = layer.weights()[i] as f64;
                    layer.weights_mut()[i] = (wt + rate * wt * (1.0 - wt)).clamp(0.0, 1.0) as f32;
                }
            }
        }
    }
    Ok(())
}
