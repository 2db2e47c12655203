//! Model confidence set with the range statistic and a moving block
//! bootstrap.

use serde::{Deserialize, Serialize};

use crate::error::{NetArchError, Result};
use crate::par::map_indices;
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McsConfig {
    pub alpha: f64,
    pub bootstrap_reps: usize,
    pub block_len: usize,
    pub seed: u64,
}

impl Default for McsConfig {
    fn default() -> Self {
        Self {
            alpha: 0.10,
            bootstrap_reps: 5000,
            block_len: 10,
            seed: 20_240_601,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McsModel {
    pub model_id: String,
    /// Mean loss over the evaluation sample.
    pub loss: f64,
    /// 1 is best. Surviving models come first, ordered by their statistic;
    /// eliminated ones follow in reverse elimination order.
    pub rank: usize,
    /// For survivors, `max_j t_ij` over the final set (absent when the set
    /// has a single model); for eliminated models, the statistic at removal.
    pub statistic: Option<f64>,
    pub p_value: f64,
    pub in_set: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McsResult {
    pub config: McsConfig,
    /// Models in input order.
    pub models: Vec<McsModel>,
    /// Ids of the surviving models, best first.
    pub superior_set: Vec<String>,
    /// Ids in the order they were eliminated.
    pub elimination_order: Vec<String>,
}

fn block_indices(rng: &mut SplitMix64, n: usize, block: usize) -> Vec<usize> {
    let starts = n - block + 1;
    let mut idx = Vec::with_capacity(n);
    while idx.len() < n {
        let s = rng.next_below(starts);
        idx.extend((s..s + block).take(n - idx.len()));
    }
    idx
}

struct Pairwise {
    m: usize,
    diff: Vec<f64>,
    sd: Vec<f64>,
}

impl Pairwise {
    fn at(&self, i: usize, j: usize) -> usize {
        i * self.m + j
    }

    /// `t_ij`, zero for pairs whose losses agree on every date.
    fn t(&self, i: usize, j: usize) -> f64 {
        let k = self.at(i, j);
        if self.sd[k] == 0.0 {
            0.0
        } else {
            self.diff[k] / self.sd[k]
        }
    }
}

/// Runs the model confidence set on per-date losses, one series per model.
pub fn mcs(losses: &[Vec<f64>], ids: &[String], config: &McsConfig) -> Result<McsResult> {
    let m = losses.len();
    if m == 0 || ids.len() != m {
        return Err(NetArchError::invalid("need one id per loss series"));
    }
    let n = losses[0].len();
    if losses.iter().any(|l| l.len() != n) {
        return Err(NetArchError::invalid("loss series lengths differ"));
    }
    if !(config.alpha > 0.0 && config.alpha < 1.0) {
        return Err(NetArchError::invalid("alpha must lie in (0, 1)"));
    }
    if config.bootstrap_reps == 0 || config.block_len == 0 || config.block_len > n {
        return Err(NetArchError::invalid(
            "bootstrap needs at least one replication and a block length within the sample",
        ));
    }
    let mut seen = ids.to_vec();
    seen.sort();
    seen.dedup();
    if seen.len() != m {
        return Err(NetArchError::invalid("model ids must be unique"));
    }

    let mean = |v: &[f64], idx: Option<&[usize]>| match idx {
        None => v.iter().sum::<f64>() / n as f64,
        Some(idx) => idx.iter().map(|&t| v[t]).sum::<f64>() / n as f64,
    };
    let lbar: Vec<f64> = losses.iter().map(|l| mean(l, None)).collect();
    let boot: Vec<Vec<f64>> = map_indices(config.bootstrap_reps, |b| {
        let mut rng = SplitMix64::derive(config.seed, b as u64);
        let idx = block_indices(&mut rng, n, config.block_len);
        losses.iter().map(|l| mean(l, Some(&idx))).collect()
    });

    let reps = config.bootstrap_reps as f64;
    let mut pw = Pairwise {
        m,
        diff: vec![0.0; m * m],
        sd: vec![0.0; m * m],
    };
    for i in 0..m {
        for j in 0..m {
            if i == j {
                continue;
            }
            let d = lbar[i] - lbar[j];
            let identical = losses[i] == losses[j];
            let var = if identical {
                0.0
            } else {
                boot.iter()
                    .map(|bm| {
                        let z = (bm[i] - bm[j]) - d;
                        z * z
                    })
                    .sum::<f64>()
                    / reps
            };
            // rounding noise alone when the differential is constant
            let scale = 1e-10 * (lbar[i].abs() + lbar[j].abs()).max(f64::MIN_POSITIVE);
            if !identical && !(var > scale * scale) {
                return Err(NetArchError::BootstrapDegenerate(format!(
                    "loss differential of {} and {} has no bootstrap variation",
                    ids[i], ids[j]
                )));
            }
            let k = pw.at(i, j);
            pw.diff[k] = d;
            pw.sd[k] = var.sqrt();
        }
    }

    let mut alive: Vec<usize> = (0..m).collect();
    let mut p_running: f64 = 0.0;
    let mut p_value = vec![1.0; m];
    let mut removal_stat = vec![None; m];
    let mut order = Vec::new();
    while alive.len() > 1 {
        let e: Vec<f64> = alive
            .iter()
            .map(|&i| {
                alive
                    .iter()
                    .filter(|&&j| j != i)
                    .map(|&j| pw.t(i, j))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        let t_range = alive
            .iter()
            .flat_map(|&i| alive.iter().map(move |&j| (i, j)))
            .filter(|(i, j)| i != j)
            .map(|(i, j)| pw.t(i, j).abs())
            .fold(0.0, f64::max);
        let p = if t_range == 0.0 {
            1.0
        } else {
            let exceed = boot
                .iter()
                .filter(|bm| {
                    let mut stat: f64 = 0.0;
                    for &i in &alive {
                        for &j in &alive {
                            let k = pw.at(i, j);
                            if i != j && pw.sd[k] > 0.0 {
                                let z = ((bm[i] - bm[j]) - pw.diff[k]) / pw.sd[k];
                                stat = stat.max(z.abs());
                            }
                        }
                    }
                    stat >= t_range
                })
                .count();
            exceed as f64 / reps
        };
        p_running = p_running.max(p);
        // worst model: largest e, ties to the lexicographically larger id
        let pos = (0..alive.len())
            .max_by(|&a, &b| {
                e[a].total_cmp(&e[b])
                    .then_with(|| ids[alive[a]].cmp(&ids[alive[b]]))
            })
            .unwrap();
        let out = alive.remove(pos);
        p_value[out] = p_running;
        removal_stat[out] = Some(e[pos]);
        order.push(out);
    }
    let last = alive[0];
    p_value[last] = 1.0;

    let in_set: Vec<bool> = p_value.iter().map(|&p| p >= config.alpha).collect();
    let survivors: Vec<usize> = (0..m).filter(|&i| in_set[i]).collect();
    let final_stat: Vec<Option<f64>> = (0..m)
        .map(|i| {
            if !in_set[i] || survivors.len() < 2 {
                return None;
            }
            Some(
                survivors
                    .iter()
                    .filter(|&&j| j != i)
                    .map(|&j| pw.t(i, j))
                    .fold(f64::NEG_INFINITY, f64::max),
            )
        })
        .collect();
    let mut ranked = survivors.clone();
    ranked.sort_by(|&a, &b| {
        final_stat[a]
            .unwrap_or(0.0)
            .total_cmp(&final_stat[b].unwrap_or(0.0))
            .then_with(|| ids[a].cmp(&ids[b]))
    });
    let eliminated: Vec<usize> = order
        .iter()
        .rev()
        .copied()
        .filter(|&i| !in_set[i])
        .collect();
    let mut rank = vec![0; m];
    for (r, &i) in ranked.iter().chain(&eliminated).enumerate() {
        rank[i] = r + 1;
    }

    let models = (0..m)
        .map(|i| McsModel {
            model_id: ids[i].clone(),
            loss: lbar[i],
            rank: rank[i],
            statistic: if in_set[i] {
                final_stat[i]
            } else {
                removal_stat[i]
            },
            p_value: p_value[i],
            in_set: in_set[i],
        })
        .collect();
    Ok(McsResult {
        config: *config,
        models,
        superior_set: ranked.iter().map(|&i| ids[i].clone()).collect(),
        elimination_order: order.iter().map(|&i| ids[i].clone()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(m: usize) -> Vec<String> {
        (0..m).map(|i| format!("M{i}")).collect()
    }

    fn noise(seed: u64, n: usize, shift: f64) -> Vec<f64> {
        let mut rng = SplitMix64::new(seed);
        (0..n).map(|_| shift + rng.next_normal().powi(2)).collect()
    }

    fn small() -> McsConfig {
        McsConfig {
            bootstrap_reps: 500,
            ..McsConfig::default()
        }
    }

    #[test]
    fn clearly_worse_model_is_dropped() {
        let losses = vec![noise(1, 400, 0.0), noise(2, 400, 1.5), noise(3, 400, 0.02)];
        let r = mcs(&losses, &ids(3), &small()).unwrap();
        assert!(!r.models[1].in_set);
        assert!(r.models[1].p_value < 0.01);
        assert_eq!(r.elimination_order[0], "M1");
        assert!(r.models[0].in_set && r.models[2].in_set);
        assert_eq!(r.models[1].rank, 3);
    }

    #[test]
    fn identical_losses_are_all_retained() {
        let l = noise(5, 200, 0.0);
        let r = mcs(&[l.clone(), l], &ids(2), &small()).unwrap();
        assert!(r.models.iter().all(|m| m.in_set && m.p_value == 1.0));
    }

    #[test]
    fn constant_differential_is_degenerate() {
        let l = noise(5, 200, 0.0);
        let shifted: Vec<f64> = l.iter().map(|x| x + 0.5).collect();
        assert!(matches!(
            mcs(&[l, shifted], &ids(2), &small()),
            Err(NetArchError::BootstrapDegenerate(_))
        ));
    }

    #[test]
    fn p_values_are_monotone_in_elimination_order() {
        let losses: Vec<Vec<f64>> = (0..5)
            .map(|k| noise(10 + k, 300, 0.05 * k as f64))
            .collect();
        let r = mcs(&losses, &ids(5), &small()).unwrap();
        let p: Vec<f64> = r
            .elimination_order
            .iter()
            .map(|id| r.models.iter().find(|m| &m.model_id == id).unwrap().p_value)
            .collect();
        assert!(p.windows(2).all(|w| w[0] <= w[1]));
        let mut ranks: Vec<usize> = r.models.iter().map(|m| m.rank).collect();
        ranks.sort();
        assert_eq!(ranks, vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn blocks_cover_sample_length() {
        let mut rng = SplitMix64::new(0);
        let idx = block_indices(&mut rng, 23, 10);
        assert_eq!(idx.len(), 23);
        assert!(idx.iter().all(|&t| t < 23));
        assert_eq!(idx[1], idx[0] + 1);
    }
}
