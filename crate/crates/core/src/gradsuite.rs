//! Finite-difference checks of every analytic gradient in the crate.

use rand::Rng;
use serde::Serialize;

use crate::encoder::{
    backward_views, encode, encode_backward, encode_cached, forward_views, init_params, BatchViews,
    EncoderConfig, EncoderParams, TokenSequence,
};
use crate::error::Result;
use crate::losses::{
    cossim_loss, cossim_loss_grad, escl_loss, escl_loss_grad, info_nce, info_nce_grad, rd_loss,
    rd_loss_grad, EquivariantLoss, LossConfig,
};
use crate::numerics::{
    grad_check, sample_dropout_mask, DropoutSpec, GradCheckReport, RngStream, Tensor, DEFAULT_EPS,
};
use crate::parallel;

/// Components probed per case before subsampling kicks in.
const MAX_COMPONENTS: usize = 400;

#[derive(Debug, Clone, Serialize)]
pub struct GradientCase {
    pub name: String,
    pub trial: u64,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub components_checked: usize,
}

impl GradientCase {
    fn new(name: &str, trial: u64, r: GradCheckReport) -> Self {
        GradientCase {
            name: name.to_string(),
            trial,
            max_rel_error: r.max_rel_error,
            worst_index: r.worst_index,
            components_checked: r.components_checked,
        }
    }
}

pub const CASE_NAMES: &[&str] = &[
    "quadratic",
    "info_nce",
    "rd_loss",
    "cossim_loss",
    "escl_loss/rd",
    "escl_loss/cossim",
    "escl_loss/none",
    "encoder",
    "pipeline",
];

fn matrix(n: usize, d: usize, rng: &RngStream) -> Tensor {
    let mut g = rng.generator();
    let data = (0..n * d).map(|_| g.random_range(-1.0..1.0)).collect();
    Tensor::from_vec(&[n, d], data).expect("finite entries")
}

fn split(x: &[f64], n: usize, d: usize, parts: usize) -> Result<Vec<Tensor>> {
    (0..parts)
        .map(|k| Tensor::from_vec(&[n, d], x[k * n * d..(k + 1) * n * d].to_vec()))
        .collect()
}

fn concat(ts: &[&Tensor]) -> Vec<f64> {
    ts.iter().flat_map(|t| t.data().iter().copied()).collect()
}

fn sentences(n: usize, vocab: usize, rng: &RngStream) -> Vec<TokenSequence> {
    let mut g = rng.generator();
    (0..n)
        .map(|_| {
            let len = g.random_range(1..=6);
            TokenSequence::new((0..len).map(|_| g.random_range(0..vocab)).collect())
                .expect("non-empty")
        })
        .collect()
}

fn check_case(name: &str, trial: u64, rng: &RngStream) -> Result<GradientCase> {
    let check_rng = rng.derive_label("probe");
    let mut g = rng.generator();
    let n = g.random_range(2..=6);
    let d = g.random_range(2..=8);
    let tau = [0.05, 0.1, 0.5][g.random_range(0..3)];
    let (h, hp, hn) = (
        matrix(n, d, &rng.derive(0)),
        matrix(n, d, &rng.derive(1)),
        matrix(n, d, &rng.derive(2)),
    );
    let check = |loss: &dyn Fn(&[f64]) -> Result<f64>, x: &[f64], a: &[f64]| {
        grad_check(loss, x, a, DEFAULT_EPS, MAX_COMPONENTS, &check_rng)
            .map(|r| GradientCase::new(name, trial, r))
    };

    match name {
        "quadratic" => {
            // f(x) = sum c_i x_i^2 + x_0 x_1, gradient known in closed form
            let x: Vec<f64> = h.data().to_vec();
            let c: Vec<f64> = hp.data().iter().map(|v| v.abs() + 0.5).collect();
            let f = |x: &[f64]| -> Result<f64> {
                Ok(x.iter().zip(&c).map(|(x, c)| c * x * x).sum::<f64>() + x[0] * x[1])
            };
            let mut a: Vec<f64> = x.iter().zip(&c).map(|(x, c)| 2.0 * c * x).collect();
            a[0] += x[1];
            a[1] += x[0];
            check(&f, &x, &a)
        }
        "info_nce" => {
            let (_, gh, gp) = info_nce_grad(&h, &hp, tau)?;
            let f = |x: &[f64]| {
                let t = split(x, n, d, 2)?;
                info_nce(&t[0], &t[1], tau)
            };
            check(&f, &concat(&[&h, &hp]), &concat(&[&gh, &gp]))
        }
        "rd_loss" | "cossim_loss" => {
            let rd = name == "rd_loss";
            let (_, [ga, gp, gn]) = if rd {
                rd_loss_grad(&h, &hp, &hn)?
            } else {
                cossim_loss_grad(&h, &hp, &hn)?
            };
            let f = |x: &[f64]| {
                let t = split(x, n, d, 3)?;
                if rd {
                    rd_loss(&t[0], &t[1], &t[2])
                } else {
                    cossim_loss(&t[0], &t[1], &t[2])
                }
            };
            check(&f, &concat(&[&h, &hp, &hn]), &concat(&[&ga, &gp, &gn]))
        }
        "escl_loss/rd" | "escl_loss/cossim" | "escl_loss/none" => {
            let variant: EquivariantLoss = name["escl_loss/".len()..].parse()?;
            // a large lambda keeps the equivariant term visible next to InfoNCE
            let cfg = LossConfig {
                temperature: tau,
                lambda: 0.5,
                variant,
            };
            let views = BatchViews::new(h, hp, hn)?;
            let (_, gv) = escl_loss_grad(&views, &cfg)?;
            let f = |x: &[f64]| {
                let mut t = split(x, n, d, 3)?.into_iter();
                let v = BatchViews::new(t.next().unwrap(), t.next().unwrap(), t.next().unwrap())?;
                escl_loss(&v, &cfg).map(|b| b.total)
            };
            check(
                &f,
                &concat(&[&views.anchor, &views.positive, &views.negative]),
                &concat(&[&gv.anchor, &gv.positive, &gv.negative]),
            )
        }
        "encoder" => {
            let config = EncoderConfig {
                vocab_size: 9,
                embed_dim: d,
                output_dim: g.random_range(2..=6),
            };
            let p = init_params(config, &rng.derive(3))?;
            let x = sentences(1, config.vocab_size, &rng.derive(4)).remove(0);
            let spec = DropoutSpec::new(0.3)?;
            let mask = sample_dropout_mask(&[x.len(), d], spec, &rng.derive(5));
            let probe: Vec<f64> = matrix(1, config.output_dim, &rng.derive(6)).into_data();
            let enc = encode_cached(&p, &x, spec, &mask)?;
            let analytic = encode_backward(&p, &x, &enc, &probe).flatten();
            let f = |flat: &[f64]| {
                let q = EncoderParams::from_flat(config, flat)?;
                let e = encode(&q, &x, spec, &mask)?;
                Ok(e.iter().zip(&probe).map(|(a, b)| a * b).sum())
            };
            check(&f, &p.flatten(), &analytic)
        }
        "pipeline" => {
            // escl loss of the three dropout views, differentiated w.r.t. the encoder
            let config = EncoderConfig {
                vocab_size: 11,
                embed_dim: d,
                output_dim: 4,
            };
            let p = init_params(config, &rng.derive(3))?;
            let sents = sentences(n, config.vocab_size, &rng.derive(4));
            let batch: Vec<(u64, &TokenSequence)> = sents
                .iter()
                .enumerate()
                .map(|(i, s)| (i as u64, s))
                .collect();
            let (lo, hi) = (DropoutSpec::new(0.1)?, DropoutSpec::new(0.45)?);
            let masks = rng.derive(5);
            let cfg = LossConfig {
                temperature: tau,
                lambda: 0.5,
                variant: EquivariantLoss::Rd,
            };
            let (views, cache) = forward_views(&p, &batch, lo, hi, &masks)?;
            let (_, gv) = escl_loss_grad(&views, &cfg)?;
            let analytic = backward_views(&p, &batch, &cache, &gv)?.flatten();
            let f = |flat: &[f64]| {
                let q = EncoderParams::from_flat(config, flat)?;
                let (v, _) = forward_views(&q, &batch, lo, hi, &masks)?;
                escl_loss(&v, &cfg).map(|b| b.total)
            };
            check(&f, &p.flatten(), &analytic)
        }
        other => unreachable!("unknown gradient case {other}"),
    }
}

/// Runs every case in [`CASE_NAMES`] on `trials` random instances.
///
/// Instances are drawn from `RngStream::new(seed)`; cases run in parallel and
/// come back in (trial, case) order.
pub fn run_gradient_suite(trials: u64, seed: u64) -> Result<Vec<GradientCase>> {
    let root = RngStream::new(seed).derive_label("gradcheck");
    let jobs: Vec<(u64, usize)> = (0..trials)
        .flat_map(|t| (0..CASE_NAMES.len()).map(move |c| (t, c)))
        .collect();
    parallel::map(&jobs, |&(t, c)| {
        check_case(CASE_NAMES[c], t, &root.derive(t).derive(c as u64))
    })
    .into_iter()
    .collect()
}
