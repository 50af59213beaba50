//! Contrastive and equivariant objectives over batches of view embeddings,
//! with analytic gradients with respect to every embedding row.
//!
//! Per-sentence terms are averaged over the batch.

use serde::{Deserialize, Serialize};

use crate::encoder::BatchViews;
use crate::error::{EsclError, Result};
use crate::numerics::{dot, l2_norm, Tensor};

pub const DEFAULT_TEMPERATURE: f64 = 0.05;
pub const DEFAULT_LAMBDA: f64 = 2.5e-3;

/// Which term is trained against the high-dropout view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EquivariantLoss {
    /// Relative difference: `exp(sim(h', h-) - sim(h, h+))`.
    Rd,
    /// Ablation baseline without the positive-pair term: `exp(sim(h', h-))`.
    CosSim,
    /// InfoNCE only.
    None,
}

impl EquivariantLoss {
    pub fn name(&self) -> &'static str {
        match self {
            EquivariantLoss::Rd => "rd",
            EquivariantLoss::CosSim => "cossim",
            EquivariantLoss::None => "none",
        }
    }
}

impl std::fmt::Display for EquivariantLoss {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for EquivariantLoss {
    type Err = EsclError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rd" => Ok(EquivariantLoss::Rd),
            "cossim" | "cos_sim" | "cos-sim" => Ok(EquivariantLoss::CosSim),
            "none" => Ok(EquivariantLoss::None),
            other => Err(EsclError::Config(format!(
                "unknown equivariant loss '{other}' (expected rd, cossim or none)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub temperature: f64,
    pub lambda: f64,
    pub variant: EquivariantLoss,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            temperature: DEFAULT_TEMPERATURE,
            lambda: DEFAULT_LAMBDA,
            variant: EquivariantLoss::Rd,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        check_temperature(self.temperature)?;
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(EsclError::Config(format!(
                "lambda must be finite and non-negative, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// Values of each objective term for one batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub info_nce: f64,
    /// The equivariant term before weighting (0 for [`EquivariantLoss::None`]).
    pub equivariant: f64,
    pub lambda: f64,
    pub total: f64,
    /// Mean `1 - sim(h, h+)`.
    pub dist_pos: f64,
    /// Mean `1 - sim(h', h-)` over `h'` in `{h, h+}`.
    pub dist_neg: f64,
}

fn check_temperature(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(EsclError::Config(format!(
            "temperature must be positive, got {tau}"
        )))
    }
}

/// Rows scaled to unit length, with the original norms kept for backprop.
struct UnitRows {
    rows: Vec<Vec<f64>>,
    norms: Vec<f64>,
}

impl UnitRows {
    fn new(t: &Tensor, what: &str) -> Result<Self> {
        if t.shape().len() != 2 || t.rows() == 0 || t.cols() == 0 {
            return Err(EsclError::Dimension(format!(
                "{what} must be a non-empty matrix, got shape {:?}",
                t.shape()
            )));
        }
        let mut rows = Vec::with_capacity(t.rows());
        let mut norms = Vec::with_capacity(t.rows());
        for (i, r) in t.row_iter().enumerate() {
            let n = l2_norm(r);
            if n == 0.0 || !n.is_finite() {
                return Err(EsclError::Degenerate(format!(
                    "{what} row {i} has norm {n}"
                )));
            }
            rows.push(r.iter().map(|v| v / n).collect());
            norms.push(n);
        }
        Ok(UnitRows { rows, norms })
    }

    fn sim(&self, i: usize, other: &UnitRows, j: usize) -> f64 {
        dot(&self.rows[i], &other.rows[j])
    }

    /// Maps gradients w.r.t. unit rows to gradients w.r.t. the raw rows.
    fn backprop(&self, unit_grads: Vec<Vec<f64>>) -> Tensor {
        let n = self.rows.len();
        let d = self.rows[0].len();
        let mut out = Tensor::zeros(&[n, d]);
        for (i, g) in unit_grads.iter().enumerate() {
            let u = &self.rows[i];
            let proj = dot(g, u);
            for ((o, gk), uk) in out.row_mut(i).iter_mut().zip(g).zip(u) {
                *o = (gk - proj * uk) / self.norms[i];
            }
        }
        out
    }
}

fn same_shape(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() == b.shape() {
        Ok(())
    } else {
        Err(EsclError::Dimension(format!(
            "embedding matrices of shape {:?} and {:?}",
            a.shape(),
            b.shape()
        )))
    }
}

fn zeros(n: usize, d: usize) -> Vec<Vec<f64>> {
    vec![vec![0.0; d]; n]
}

fn axpy(acc: &mut [f64], a: f64, x: &[f64]) {
    for (y, v) in acc.iter_mut().zip(x) {
        *y += a * v;
    }
}

/// InfoNCE value and gradients w.r.t. `h` and `h_pos`.
fn info_nce_impl(
    h: &Tensor,
    h_pos: &Tensor,
    tau: f64,
    want_grad: bool,
) -> Result<(f64, Option<(Tensor, Tensor)>)> {
    check_temperature(tau)?;
    same_shape(h, h_pos)?;
    let u = UnitRows::new(h, "anchor")?;
    let v = UnitRows::new(h_pos, "positive")?;
    let n = u.rows.len();
    let d = u.rows[0].len();
    let mut loss = 0.0;
    let mut gu = zeros(n, d);
    let mut gv = zeros(n, d);
    let mut logits = vec![0.0; n];
    for i in 0..n {
        for (j, l) in logits.iter_mut().enumerate() {
            *l = u.sim(i, &v, j) / tau;
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = logits.iter().map(|l| (l - max).exp()).sum();
        let lse = max + sum.ln();
        loss += lse - logits[i];
        if want_grad {
            for j in 0..n {
                let p = (logits[j] - lse).exp();
                let coeff = (p - if i == j { 1.0 } else { 0.0 }) / (n as f64 * tau);
                axpy(&mut gu[i], coeff, &v.rows[j]);
                axpy(&mut gv[j], coeff, &u.rows[i]);
            }
        }
    }
    let grads = want_grad.then(|| (u.backprop(gu), v.backprop(gv)));
    Ok((loss / n as f64, grads))
}

/// Mean over `i` of `-log(exp(s_ii / tau) / sum_j exp(s_ij / tau))` with
/// `s_ij = sim(h_i, h_pos_j)`; the denominator includes `j = i`.
pub fn info_nce(h: &Tensor, h_pos: &Tensor, tau: f64) -> Result<f64> {
    info_nce_impl(h, h_pos, tau, false).map(|(l, _)| l)
}

/// Gradients of [`info_nce`] w.r.t. `h` and `h_pos`.
pub fn info_nce_grad(h: &Tensor, h_pos: &Tensor, tau: f64) -> Result<(f64, Tensor, Tensor)> {
    let (l, g) = info_nce_impl(h, h_pos, tau, true)?;
    let (gh, gp) = g.expect("gradients requested");
    Ok((l, gh, gp))
}

/// InfoNCE written as `log(1 + sum_{j != i} exp(s_ij / tau) / exp(s_ii / tau))`.
pub fn info_nce_alt(h: &Tensor, h_pos: &Tensor, tau: f64) -> Result<f64> {
    check_temperature(tau)?;
    same_shape(h, h_pos)?;
    let u = UnitRows::new(h, "anchor")?;
    let v = UnitRows::new(h_pos, "positive")?;
    let n = u.rows.len();
    let mut loss = 0.0;
    for i in 0..n {
        let own = u.sim(i, &v, i) / tau;
        let others: f64 = (0..n)
            .filter(|&j| j != i)
            .map(|j| (u.sim(i, &v, j) / tau - own).exp())
            .sum();
        loss += others.ln_1p();
    }
    Ok(loss / n as f64)
}

struct Triplet {
    u: UnitRows,
    v: UnitRows,
    w: UnitRows,
}

impl Triplet {
    fn new(h: &Tensor, h_pos: &Tensor, h_neg: &Tensor) -> Result<Self> {
        same_shape(h, h_pos)?;
        same_shape(h, h_neg)?;
        Ok(Triplet {
            u: UnitRows::new(h, "anchor")?,
            v: UnitRows::new(h_pos, "positive")?,
            w: UnitRows::new(h_neg, "negative")?,
        })
    }

    /// `(sim(h, h-), sim(h+, h-), sim(h, h+))` for sentence `i`.
    fn sims(&self, i: usize) -> (f64, f64, f64) {
        (
            self.u.sim(i, &self.w, i),
            self.v.sim(i, &self.w, i),
            self.u.sim(i, &self.v, i),
        )
    }
}

/// Shared evaluation of the equivariant terms. `relative` selects RD over
/// CosSim. Returns the mean value and, if requested, gradients for the
/// three matrices.
fn equivariant_impl(t: &Triplet, relative: bool, want_grad: bool) -> (f64, Option<[Tensor; 3]>) {
    let n = t.u.rows.len();
    let d = t.u.rows[0].len();
    let inv_n = 1.0 / n as f64;
    let mut loss = 0.0;
    let (mut gu, mut gv, mut gw) = (zeros(n, d), zeros(n, d), zeros(n, d));
    for i in 0..n {
        let (a, b, c) = t.sims(i);
        let shift = if relative { c } else { 0.0 };
        let ea = (a - shift).exp();
        let eb = (b - shift).exp();
        loss += ea + eb;
        if want_grad {
            let (da, db) = (ea * inv_n, eb * inv_n);
            // a = <u, w>, b = <v, w>
            axpy(&mut gu[i], da, &t.w.rows[i]);
            axpy(&mut gw[i], da, &t.u.rows[i]);
            axpy(&mut gv[i], db, &t.w.rows[i]);
            axpy(&mut gw[i], db, &t.v.rows[i]);
            if relative {
                // c = <u, v> enters with a minus sign in both exponents
                let dc = -(da + db);
                axpy(&mut gu[i], dc, &t.v.rows[i]);
                axpy(&mut gv[i], dc, &t.u.rows[i]);
            }
        }
    }
    let grads = want_grad.then(|| [t.u.backprop(gu), t.v.backprop(gv), t.w.backprop(gw)]);
    (loss * inv_n, grads)
}

/// Relative-difference loss: mean over `i` of
/// `sum_{h' in {h_i, h_pos_i}} exp(sim(h', h_neg_i) - sim(h_i, h_pos_i))`.
pub fn rd_loss(h: &Tensor, h_pos: &Tensor, h_neg: &Tensor) -> Result<f64> {
    Ok(equivariant_impl(&Triplet::new(h, h_pos, h_neg)?, true, false).0)
}

/// Gradients of [`rd_loss`] w.r.t. `h`, `h_pos` and `h_neg`.
pub fn rd_loss_grad(h: &Tensor, h_pos: &Tensor, h_neg: &Tensor) -> Result<(f64, [Tensor; 3])> {
    let (l, g) = equivariant_impl(&Triplet::new(h, h_pos, h_neg)?, true, true);
    Ok((l, g.expect("gradients requested")))
}

/// CosSim ablation loss: mean over `i` of
/// `sum_{h' in {h_i, h_pos_i}} exp(sim(h', h_neg_i))`.
pub fn cossim_loss(h: &Tensor, h_pos: &Tensor, h_neg: &Tensor) -> Result<f64> {
    Ok(equivariant_impl(&Triplet::new(h, h_pos, h_neg)?, false, false).0)
}

/// Gradients of [`cossim_loss`] w.r.t. `h`, `h_pos` and `h_neg`.
pub fn cossim_loss_grad(h: &Tensor, h_pos: &Tensor, h_neg: &Tensor) -> Result<(f64, [Tensor; 3])> {
    let (l, g) = equivariant_impl(&Triplet::new(h, h_pos, h_neg)?, false, true);
    Ok((l, g.expect("gradients requested")))
}

fn distances(t: &Triplet) -> (f64, f64) {
    let n = t.u.rows.len() as f64;
    let (mut pos, mut neg) = (0.0, 0.0);
    for i in 0..t.u.rows.len() {
        let (a, b, c) = t.sims(i);
        pos += 1.0 - c;
        neg += ((1.0 - a) + (1.0 - b)) / 2.0;
    }
    (pos / n, neg / n)
}

fn escl_impl(
    views: &BatchViews,
    cfg: &LossConfig,
    want_grad: bool,
) -> Result<(LossBreakdown, Option<BatchViews>)> {
    cfg.validate()?;
    let (h, hp, hn) = (&views.anchor, &views.positive, &views.negative);
    let triplet = Triplet::new(h, hp, hn)?;
    let (info, info_grads) = info_nce_impl(h, hp, cfg.temperature, want_grad)?;
    let (equivariant, eq_grads) = match cfg.variant {
        EquivariantLoss::Rd => equivariant_impl(&triplet, true, want_grad),
        EquivariantLoss::CosSim => equivariant_impl(&triplet, false, want_grad),
        EquivariantLoss::None => (0.0, None),
    };
    let (dist_pos, dist_neg) = distances(&triplet);
    let breakdown = LossBreakdown {
        info_nce: info,
        equivariant,
        lambda: cfg.lambda,
        total: info + cfg.lambda * equivariant,
        dist_pos,
        dist_neg,
    };

    let grads = match info_grads {
        None => None,
        Some((mut gh, mut gp)) => {
            let mut gn = Tensor::zeros(hn.shape());
            if let Some([eh, ep, en]) = eq_grads {
                for (acc, g) in [(&mut gh, &eh), (&mut gp, &ep), (&mut gn, &en)] {
                    for (x, y) in acc.data_mut().iter_mut().zip(g.data()) {
                        *x += cfg.lambda * y;
                    }
                }
            }
            Some(BatchViews::new(gh, gp, gn)?)
        }
    };
    Ok((breakdown, grads))
}

/// `info_nce + lambda * equivariant` with distance diagnostics.
pub fn escl_loss(views: &BatchViews, cfg: &LossConfig) -> Result<LossBreakdown> {
    escl_impl(views, cfg, false).map(|(b, _)| b)
}

/// [`escl_loss`] plus the gradient of `total` w.r.t. every row of the three
/// view matrices.
pub fn escl_loss_grad(views: &BatchViews, cfg: &LossConfig) -> Result<(LossBreakdown, BatchViews)> {
    let (b, g) = escl_impl(views, cfg, true)?;
    Ok((b, g.expect("gradients requested")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{grad_check, RngStream, DEFAULT_EPS, GRAD_TOLERANCE};
    use rand::Rng;

    fn random_matrix(n: usize, d: usize, rng: &RngStream) -> Tensor {
        let mut g = rng.generator();
        Tensor::from_vec(
            &[n, d],
            (0..n * d).map(|_| g.random_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    fn triple(n: usize, d: usize, seed: u64) -> (Tensor, Tensor, Tensor) {
        let r = RngStream::new(seed);
        (
            random_matrix(n, d, &r.derive(0)),
            random_matrix(n, d, &r.derive(1)),
            random_matrix(n, d, &r.derive(2)),
        )
    }

    fn cos(a: &[f64], b: &[f64]) -> f64 {
        crate::numerics::cosine_similarity(a, b).unwrap()
    }

    // direct transcription without log-sum-exp
    fn naive_info_nce(h: &Tensor, hp: &Tensor, tau: f64) -> f64 {
        let n = h.rows();
        (0..n)
            .map(|i| {
                let num = (cos(h.row(i), hp.row(i)) / tau).exp();
                let den: f64 = (0..n).map(|j| (cos(h.row(i), hp.row(j)) / tau).exp()).sum();
                -(num / den).ln()
            })
            .sum::<f64>()
            / n as f64
    }

    fn loop_rd(h: &Tensor, hp: &Tensor, hn: &Tensor) -> f64 {
        let n = h.rows();
        let mut total = 0.0;
        for i in 0..n {
            let c = cos(h.row(i), hp.row(i));
            for hprime in [h.row(i), hp.row(i)] {
                total += (cos(hprime, hn.row(i)) - c).exp();
            }
        }
        total / n as f64
    }

    fn loop_cossim(h: &Tensor, hp: &Tensor, hn: &Tensor) -> f64 {
        let n = h.rows();
        let mut total = 0.0;
        for i in 0..n {
            for hprime in [h.row(i), hp.row(i)] {
                total += cos(hprime, hn.row(i)).exp();
            }
        }
        total / n as f64
    }

    #[test]
    fn info_nce_anchors() {
        let h = Tensor::from_rows(&[vec![1.0, 2.0]]).unwrap();
        assert_eq!(info_nce(&h, &h, 0.05).unwrap(), 0.0);
        assert_eq!(info_nce_alt(&h, &h, 0.05).unwrap(), 0.0);
        // all pairwise sims equal
        let h = Tensor::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let ln2 = std::f64::consts::LN_2;
        assert!((info_nce(&h, &h, 0.05).unwrap() - ln2).abs() < 1e-12);
        assert!((info_nce_alt(&h, &h, 0.05).unwrap() - ln2).abs() < 1e-12);
    }

    #[test]
    fn info_nce_matches_naive_oracle_and_alt_form() {
        for seed in 0..50 {
            let (h, hp, _) = triple(8, 16, seed);
            let fast = info_nce(&h, &hp, 0.05).unwrap();
            assert!((fast - naive_info_nce(&h, &hp, 0.05)).abs() < 1e-10);
            assert!((fast - info_nce_alt(&h, &hp, 0.05).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn info_nce_rejects_bad_inputs() {
        let (h, hp, _) = triple(3, 4, 1);
        assert!(matches!(info_nce(&h, &hp, 0.0), Err(EsclError::Config(_))));
        assert!(matches!(info_nce(&h, &hp, -1.0), Err(EsclError::Config(_))));
        let z = Tensor::zeros(&[3, 4]);
        assert!(matches!(
            info_nce(&z, &hp, 0.05),
            Err(EsclError::Degenerate(_))
        ));
        let (small, _, _) = triple(2, 4, 1);
        assert!(matches!(
            info_nce(&small, &hp, 0.05),
            Err(EsclError::Dimension(_))
        ));
    }

    #[test]
    fn equivariant_anchors() {
        let h = Tensor::from_rows(&[vec![0.3, -0.2, 0.9]]).unwrap();
        assert_eq!(rd_loss(&h, &h, &h).unwrap(), 2.0);
        let e = std::f64::consts::E;
        assert!((cossim_loss(&h, &h, &h).unwrap() - 2.0 * e).abs() < 1e-15);

        let h = Tensor::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let hn = Tensor::from_rows(&[vec![0.0, 1.0]]).unwrap();
        assert!((rd_loss(&h, &h, &hn).unwrap() - 2.0 / e).abs() < 1e-15);
        assert_eq!(cossim_loss(&h, &h, &hn).unwrap(), 2.0);
    }

    #[test]
    fn equivariant_losses_match_loop_oracles() {
        for seed in 0..50 {
            let (h, hp, hn) = triple(6, 10, 100 + seed);
            assert!((rd_loss(&h, &hp, &hn).unwrap() - loop_rd(&h, &hp, &hn)).abs() < 1e-12);
            assert!((cossim_loss(&h, &hp, &hn).unwrap() - loop_cossim(&h, &hp, &hn)).abs() < 1e-12);
        }
    }

    #[test]
    fn losses_are_scale_invariant_per_row() {
        let (h, hp, hn) = triple(5, 7, 3);
        let mut scaled = h.clone();
        for (i, c) in [0.1, 3.0, 7.5, 0.5, 42.0].iter().enumerate() {
            scaled.row_mut(i).iter_mut().for_each(|v| *v *= c);
        }
        assert!(
            (info_nce(&h, &hp, 0.05).unwrap() - info_nce(&scaled, &hp, 0.05).unwrap()).abs()
                < 1e-10
        );
        assert!(
            (rd_loss(&h, &hp, &hn).unwrap() - rd_loss(&scaled, &hp, &hn).unwrap()).abs() < 1e-10
        );
        assert!(
            (cossim_loss(&h, &hp, &hn).unwrap() - cossim_loss(&scaled, &hp, &hn).unwrap()).abs()
                < 1e-10
        );
    }

    #[test]
    fn info_nce_is_permutation_invariant() {
        let (h, hp, _) = triple(6, 5, 4);
        let perm = [2usize, 5, 0, 1, 4, 3];
        let ph = Tensor::from_rows(&perm.iter().map(|&i| h.row(i).to_vec()).collect::<Vec<_>>())
            .unwrap();
        let pp = Tensor::from_rows(&perm.iter().map(|&i| hp.row(i).to_vec()).collect::<Vec<_>>())
            .unwrap();
        assert!(
            (info_nce(&h, &hp, 0.05).unwrap() - info_nce(&ph, &pp, 0.05).unwrap()).abs() < 1e-12
        );
    }

    #[test]
    fn rd_is_monotone_in_each_similarity() {
        // h = e1, h+ = (cos c, sin c), h- = (cos a, 0, sin a)
        let rd_at = |sim_neg_angle: f64, sim_pos_angle: f64| {
            let h = Tensor::from_rows(&[vec![1.0, 0.0, 0.0]]).unwrap();
            let hp =
                Tensor::from_rows(&[vec![sim_pos_angle.cos(), sim_pos_angle.sin(), 0.0]]).unwrap();
            let hn =
                Tensor::from_rows(&[vec![sim_neg_angle.cos(), 0.0, sim_neg_angle.sin()]]).unwrap();
            rd_loss(&h, &hp, &hn).unwrap()
        };
        // smaller angle to h- means larger sim(h, h-)
        assert!(rd_at(0.5, 0.7) > rd_at(0.6, 0.7));
        // smaller angle to h+ means larger sim(h, h+)
        assert!(rd_at(0.5, 0.6) < rd_at(0.5, 0.7));
    }

    #[test]
    fn cossim_terms_ignore_the_positive_pair_similarity() {
        // rotating h+ in the plane orthogonal to h- changes sim(h, h+) but not
        // sim(h, h-): RD moves, the CosSim term of h does not
        let h = Tensor::from_rows(&[vec![1.0, 0.0, 0.0]]).unwrap();
        let hn = Tensor::from_rows(&[vec![0.0, 0.0, 1.0]]).unwrap();
        let hp1 = Tensor::from_rows(&[vec![1.0, 0.2, 0.0]]).unwrap();
        let hp2 = Tensor::from_rows(&[vec![0.2, 1.0, 0.0]]).unwrap();
        assert_ne!(
            rd_loss(&h, &hp1, &hn).unwrap(),
            rd_loss(&h, &hp2, &hn).unwrap()
        );
        assert_eq!(
            cossim_loss(&h, &hp1, &hn).unwrap(),
            cossim_loss(&h, &hp2, &hn).unwrap()
        );
    }

    #[test]
    fn combination_and_distances() {
        let (h, hp, hn) = triple(4, 6, 5);
        let views = BatchViews::new(h.clone(), hp.clone(), hn.clone()).unwrap();
        let info = info_nce(&h, &hp, 0.05).unwrap();
        let zero = LossConfig {
            lambda: 0.0,
            ..LossConfig::default()
        };
        assert_eq!(escl_loss(&views, &zero).unwrap().total, info);
        let none = LossConfig {
            lambda: 5.0,
            variant: EquivariantLoss::None,
            ..LossConfig::default()
        };
        let b = escl_loss(&views, &none).unwrap();
        assert_eq!(b.total, info);
        assert_eq!(b.equivariant, 0.0);

        let b = escl_loss(&views, &LossConfig::default()).unwrap();
        assert_eq!(b.total, b.info_nce + 2.5e-3 * b.equivariant);
        let rd = rd_loss(&h, &hp, &hn).unwrap();
        assert_eq!(b.equivariant, rd);
        let dp: f64 = (0..4).map(|i| 1.0 - cos(h.row(i), hp.row(i))).sum::<f64>() / 4.0;
        assert!((b.dist_pos - dp).abs() < 1e-14);
        let dn: f64 = (0..4)
            .map(|i| (2.0 - cos(h.row(i), hn.row(i)) - cos(hp.row(i), hn.row(i))) / 2.0)
            .sum::<f64>()
            / 4.0;
        assert!((b.dist_neg - dn).abs() < 1e-14);
    }

    #[test]
    fn default_weight_combination() {
        // total = 0.7 + 2.5e-3 * 2.0
        let total: f64 = 0.7 + DEFAULT_LAMBDA * 2.0;
        assert!((total - 0.705).abs() < 1e-15);
    }

    fn check_views_gradient(cfg: LossConfig, seed: u64) {
        let (h, hp, hn) = triple(4, 8, seed);
        let (n, d) = (4, 8);
        let views = BatchViews::new(h, hp, hn).unwrap();
        let (_, g) = escl_loss_grad(&views, &cfg).unwrap();
        let flat = [
            views.anchor.data(),
            views.positive.data(),
            views.negative.data(),
        ]
        .concat();
        let analytic = [g.anchor.data(), g.positive.data(), g.negative.data()].concat();
        let loss = |x: &[f64]| {
            let m = n * d;
            let v = BatchViews::new(
                Tensor::from_vec(&[n, d], x[..m].to_vec())?,
                Tensor::from_vec(&[n, d], x[m..2 * m].to_vec())?,
                Tensor::from_vec(&[n, d], x[2 * m..].to_vec())?,
            )?;
            escl_loss(&v, &cfg).map(|b| b.total)
        };
        let r = grad_check(
            loss,
            &flat,
            &analytic,
            DEFAULT_EPS,
            1000,
            &RngStream::new(0),
        )
        .unwrap();
        assert!(r.passed(GRAD_TOLERANCE), "{cfg:?}: {r:?}");
    }

    #[test]
    fn escl_gradients_match_finite_differences() {
        for (i, variant) in [
            EquivariantLoss::Rd,
            EquivariantLoss::CosSim,
            EquivariantLoss::None,
        ]
        .into_iter()
        .enumerate()
        {
            check_views_gradient(
                LossConfig {
                    variant,
                    ..LossConfig::default()
                },
                10 + i as u64,
            );
            check_views_gradient(
                LossConfig {
                    variant,
                    lambda: 1.0,
                    temperature: 0.5,
                },
                20 + i as u64,
            );
        }
    }

    #[test]
    fn variant_parsing() {
        assert_eq!(
            "RD".parse::<EquivariantLoss>().unwrap(),
            EquivariantLoss::Rd
        );
        assert_eq!(
            "cossim".parse::<EquivariantLoss>().unwrap(),
            EquivariantLoss::CosSim
        );
        assert!("mse".parse::<EquivariantLoss>().is_err());
    }
}
