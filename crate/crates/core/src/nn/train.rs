use super::adam::{adam_step, AdamConfig, AdamState};
use super::{Grads, ModelParams};
use crate::error::{Error, Result};
use crate::rng::Prng;
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch: 32,
            lr: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    /// Mean training loss evaluated at the start of each epoch.
    pub loss_curve: Vec<f64>,
    /// Mean training loss after the last epoch.
    pub final_loss: f64,
}

/// Samples per gradient group. Groups run in parallel and are summed in
/// index order, so results do not depend on the thread count.
const GROUP: usize = 4;

/// Mini-batch Adam over `n` samples with seeded shuffling.
///
/// `grad` accumulates one sample's gradient and returns its loss; `loss`
/// evaluates one sample without touching gradients. Batch gradients are
/// averaged. Parameters are rounded to `f32` precision on return so they
/// match what a saved model file reproduces.
pub fn fit<G, L>(
    params: &mut ModelParams,
    n: usize,
    cfg: &TrainConfig,
    grad: G,
    loss: L,
) -> Result<TrainReport>
where
    G: Fn(&ModelParams, usize, &mut Grads) -> Result<f64> + Sync,
    L: Fn(&ModelParams, usize) -> Result<f64> + Sync,
{
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if cfg.batch == 0 || !(cfg.lr > 0.0) {
        return Err(Error::InvalidArgument(
            "batch must be positive and learning rate > 0".into(),
        ));
    }
    let mean_loss = |p: &ModelParams| -> Result<f64> {
        let losses = (0..n)
            .into_par_iter()
            .map(|i| loss(p, i))
            .collect::<Result<Vec<f64>>>()?;
        // running mean: exact when every sample has the same loss
        Ok(losses
            .iter()
            .enumerate()
            .fold(0.0, |m, (i, &l)| m + (l - m) / (i + 1) as f64))
    };
    let adam = AdamConfig::new(cfg.lr);
    let mut state = AdamState::default();
    let mut rng = Prng::new(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        curve.push(mean_loss(params)?);
        rng.shuffle(&mut order);
        for chunk in order.chunks(cfg.batch) {
            let p: &ModelParams = params;
            let parts = chunk
                .par_chunks(GROUP)
                .map(|group| {
                    let mut g = p.zero_grads();
                    for &i in group {
                        grad(p, i, &mut g)?;
                    }
                    Ok(g)
                })
                .collect::<Result<Vec<Grads>>>()?;
            let mut parts = parts.into_iter();
            let mut grads = parts.next().expect("non-empty batch");
            for g in parts {
                grads.add(&g);
            }
            grads.scale(1.0 / chunk.len() as f64);
            adam_step(params, &grads, &mut state, &adam)?;
        }
        if !params.is_finite() {
            return Err(Error::InvalidArgument("training diverged".into()));
        }
    }
    params.round_to_f32();
    let final_loss = mean_loss(params)?;
    Ok(TrainReport {
        loss_curve: curve,
        final_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{softmax_cross_entropy, Cache, Head, NetSpec};

    fn toy() -> (ModelParams, Vec<(Vec<f64>, usize)>) {
        let spec = NetSpec {
            branches: vec![],
            extra_inputs: 2,
            hidden: vec![8],
            outputs: 3,
            head: Head::Softmax,
        };
        let data = (0..60)
            .map(|i| {
                let x = (i % 3) as f64;
                (vec![x, 1.0 - x], i % 3)
            })
            .collect();
        (ModelParams::init(spec, 4).unwrap(), data)
    }

    fn run(cfg: &TrainConfig) -> (ModelParams, TrainReport) {
        let (mut p, data) = toy();
        let report = fit(
            &mut p,
            data.len(),
            cfg,
            |p, i, g| {
                let mut cache = Cache::default();
                let out = p.forward(&[], &data[i].0, Some(&mut cache))?;
                let (l, mut probs) = softmax_cross_entropy(&out, data[i].1)?;
                probs[data[i].1] -= 1.0;
                p.backward(&cache, &probs, g, false)?;
                Ok(l)
            },
            |p, i| Ok(softmax_cross_entropy(&p.forward(&[], &data[i].0, None)?, data[i].1)?.0),
        )
        .unwrap();
        (p, report)
    }

    #[test]
    fn zero_head_starts_at_uniform_loss() {
        let (_, r) = run(&TrainConfig {
            epochs: 1,
            ..Default::default()
        });
        assert!((r.loss_curve[0] - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn learns_and_is_reproducible() {
        let cfg = TrainConfig {
            epochs: 40,
            batch: 8,
            lr: 1e-2,
            seed: 7,
        };
        let (a, ra) = run(&cfg);
        let (b, rb) = run(&cfg);
        assert_eq!(a, b);
        assert_eq!(ra, rb);
        assert!(ra.final_loss < 0.1 * ra.loss_curve[0], "{ra:?}");
    }

    #[test]
    fn thread_count_does_not_change_result() {
        let cfg = TrainConfig {
            epochs: 5,
            batch: 16,
            lr: 1e-2,
            seed: 1,
        };
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let (a, _) = one.install(|| run(&cfg));
        let (b, _) = run(&cfg);
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_empty_dataset() {
        let (mut p, _) = toy();
        let r = fit(
            &mut p,
            0,
            &TrainConfig::default(),
            |_, _, _| Ok(0.0),
            |_, _| Ok(0.0),
        );
        assert!(matches!(r, Err(Error::EmptyDataset)));
    }
}
