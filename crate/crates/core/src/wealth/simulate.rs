//! Monte Carlo samples of the wealth process, used as an independent oracle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};
use rayon::prelude::*;

use super::MellinEvaluator;

/// Cross-section of total wealth and ability states.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub wealth: Vec<f64>,
    pub state: Vec<usize>,
}

struct Sampler {
    newborn_cum: Vec<f64>,
    transition_cum: Vec<Vec<f64>>,
}

impl Sampler {
    fn new(ev: &MellinEvaluator) -> Self {
        let n = ev.n_states();
        let cum = |v: Vec<f64>| -> Vec<f64> {
            let mut acc = 0.0;
            v.into_iter()
                .map(|x| {
                    acc += x;
                    acc
                })
                .collect()
        };
        Self {
            newborn_cum: cum(ev.newborn.iter().copied().collect()),
            transition_cum: (0..n).map(|i| cum(ev.transition.row(i).iter().copied().collect())).collect(),
        }
    }

    fn draw(cum: &[f64], u: f64) -> usize {
        cum.iter().position(|c| u < *c).unwrap_or(cum.len() - 1)
    }
}

const CHUNK: usize = 1 << 16;

/// Runs `n_agents` agents for `n_periods` periods starting as newborns at
/// wealth `h`. Each period an agent survives with probability `upsilon`,
/// draws its next state and multiplies wealth by `G[old, new]`; otherwise it
/// is replaced by a newborn. Each block of agents uses its own stream.
pub fn simulate_panel(ev: &MellinEvaluator, n_agents: usize, n_periods: usize, seed: u64) -> Panel {
    let sampler = Sampler::new(ev);
    let mut wealth = vec![ev.h; n_agents];
    let mut state = vec![0usize; n_agents];
    wealth.par_chunks_mut(CHUNK).zip(state.par_chunks_mut(CHUNK)).enumerate().for_each(|(block, (ws, ss))| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(block as u64);
        for s in ss.iter_mut() {
            *s = Sampler::draw(&sampler.newborn_cum, rng.random());
        }
        for _ in 0..n_periods {
            for (w, s) in ws.iter_mut().zip(ss.iter_mut()) {
                if rng.random::<f64>() < ev.upsilon {
                    let next = Sampler::draw(&sampler.transition_cum[*s], rng.random());
                    *w *= ev.growth[(*s, next)];
                    *s = next;
                } else {
                    *w = ev.h;
                    *s = Sampler::draw(&sampler.newborn_cum, rng.random());
                }
            }
        }
    });
    Panel { wealth, state }
}

/// Independent draws from the stationary distribution: an agent's age is
/// geometric with parameter `1 − upsilon`, and it has followed the chain
/// from a newborn draw for that many periods.
pub fn sample_stationary(ev: &MellinEvaluator, n_agents: usize, seed: u64) -> Panel {
    let sampler = Sampler::new(ev);
    let age_dist = Geometric::new(1.0 - ev.upsilon).expect("survival probability lies in (0,1)");
    let mut wealth = vec![ev.h; n_agents];
    let mut state = vec![0usize; n_agents];
    wealth.par_chunks_mut(CHUNK).zip(state.par_chunks_mut(CHUNK)).enumerate().for_each(|(block, (ws, ss))| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(block as u64);
        for (w, s) in ws.iter_mut().zip(ss.iter_mut()) {
            let age = age_dist.sample(&mut rng);
            *s = Sampler::draw(&sampler.newborn_cum, rng.random());
            for _ in 0..age {
                let next = Sampler::draw(&sampler.transition_cum[*s], rng.random());
                *w *= ev.growth[(*s, next)];
                *s = next;
            }
        }
    });
    Panel { wealth, state }
}
