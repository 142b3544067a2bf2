//! Sampling-based checks of the structural inequalities a model claims.
//!
//! Nothing here is a proof: every check evaluates `RHS - LHS` on a finite,
//! deterministic sample of the domain and reports the worst case found.
//! A sample fails when its margin is below `-1e-9` times the larger of
//! `|LHS|` and `|RHS|` at that sample; the reported worst sample is the one
//! with the smallest margin relative to that scale, so an entry passes exactly
//! when every sample passes.

use std::fmt::Write as _;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::model::{AssumptionConstants, ResidualPoly, SdeModel};
use crate::normal::{inverse_cdf, open_unit};
use crate::{Error, Result};

pub const REL_TOL: f64 = 1e-9;
const DIAGONAL_OFFSETS: [f64; 2] = [1e-4, 1e-2];

/// Deterministic sample of the ball of radius `radius_max`: the origin,
/// log-spaced axis points from 1e-3 to `radius_max`, and `n_random` shifted
/// Halton points. In pair mode, two-point checks see independent Halton pairs
/// plus near-diagonal pairs `(x, x + eps e_i)` around every point.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainSampler {
    pub dim: usize,
    pub radius_max: f64,
    pub n_radial: usize,
    pub n_random: usize,
    pub seed: u64,
    pub pair_mode: bool,
}

impl DomainSampler {
    pub fn new(dim: usize, radius_max: f64) -> Self {
        Self {
            dim,
            radius_max,
            n_radial: 40,
            n_random: 10_000,
            seed: 0,
            pair_mode: true,
        }
    }

    pub fn with_random(mut self, n_random: usize) -> Self {
        self.n_random = n_random;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::invalid("sampler dimension must be positive"));
        }
        if !(self.radius_max > 1e-3 && self.radius_max.is_finite()) {
            return Err(Error::invalid(format!("sampler radius must exceed 1e-3, got {}", self.radius_max)));
        }
        if self.n_radial < 2 {
            return Err(Error::invalid("at least two radial levels are needed"));
        }
        Ok(())
    }

    fn radii(&self) -> Vec<f64> {
        let (lo, hi) = (1e-3f64.ln(), self.radius_max.ln());
        (0..self.n_radial)
            .map(|i| {
                if i == 0 {
                    1e-3
                } else if i + 1 == self.n_radial {
                    self.radius_max
                } else {
                    (lo + (hi - lo) * i as f64 / (self.n_radial - 1) as f64).exp()
                }
            })
            .collect()
    }

    fn shifts(&self, count: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..count).map(|_| open_unit(rng.next_u64())).collect()
    }

    /// Point `k` of the Halton block starting at dimension `first`, mapped
    /// uniformly into the ball.
    fn ball_point(&self, k: u64, first: usize, primes: &[u64], shifts: &[f64]) -> Vec<f64> {
        let u = |j: usize| {
            let v = radical_inverse(k, primes[first + j]) + shifts[first + j];
            let v = v - v.floor();
            v.clamp(1e-300, 1.0 - f64::EPSILON)
        };
        let z: Vec<f64> = (0..self.dim).map(|j| inverse_cdf(u(j))).collect();
        let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        let r = self.radius_max * u(self.dim).powf(1.0 / self.dim as f64);
        if norm == 0.0 {
            return vec![0.0; self.dim];
        }
        z.iter().map(|v| r * v / norm).collect()
    }

    pub fn points(&self) -> Result<Vec<Vec<f64>>> {
        self.validate()?;
        let d = self.dim;
        let mut pts = vec![vec![0.0; d]];
        for r in self.radii() {
            for i in 0..d {
                for sign in [1.0, -1.0] {
                    let mut x = vec![0.0; d];
                    x[i] = sign * r;
                    pts.push(x);
                }
            }
        }
        let primes = first_primes(2 * (d + 1));
        let shifts = self.shifts(primes.len());
        for k in 1..=self.n_random as u64 {
            pts.push(self.ball_point(k, 0, &primes, &shifts));
        }
        Ok(pts)
    }

    pub fn pairs(&self) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
        if !self.pair_mode {
            return Err(Error::invalid("two-point checks need a sampler in pair mode"));
        }
        let d = self.dim;
        let primes = first_primes(2 * (d + 1));
        let shifts = self.shifts(primes.len());
        let mut pairs = Vec::new();
        for k in 1..=self.n_random as u64 {
            pairs.push((
                self.ball_point(k, 0, &primes, &shifts),
                self.ball_point(k, d + 1, &primes, &shifts),
            ));
        }
        for x in self.points()? {
            for i in 0..d {
                for eps in DIAGONAL_OFFSETS {
                    let mut y = x.clone();
                    y[i] += eps;
                    pairs.push((x.clone(), y));
                }
            }
        }
        Ok(pairs)
    }
}

fn radical_inverse(mut k: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut out = 0.0;
    while k > 0 {
        out += (k % base) as f64 * f;
        k /= base;
        f *= inv;
    }
    out
}

fn first_primes(n: usize) -> Vec<u64> {
    let mut primes: Vec<u64> = Vec::with_capacity(n);
    let mut c = 2u64;
    while primes.len() < n {
        if primes.iter().take_while(|&&p| p * p <= c).all(|&p| !c.is_multiple_of(p)) {
            primes.push(c);
        }
        c += 1;
    }
    primes
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionEntry {
    pub name: String,
    pub description: String,
    /// `RHS - LHS` at the worst sample.
    pub worst_margin: f64,
    /// Worst sample: a point, or a pair stored as `x` followed by `y`.
    pub argmin: Vec<f64>,
    pub tol_margin: f64,
    pub pass: bool,
    pub samples: usize,
    /// Byproducts such as tightest constants observed on the sample.
    pub estimates: Vec<(String, f64)>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub model: String,
    pub entries: Vec<AssumptionEntry>,
}

impl AssumptionReport {
    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn entry(&self, name: &str) -> Option<&AssumptionEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    /// `inequality,worst_margin,argmin,pass`; argmin coordinates are joined by
    /// `;` and the two points of a pair by `|`.
    pub fn to_csv(&self, dim: usize) -> String {
        let mut out = String::from("inequality,worst_margin,argmin,pass\n");
        for e in &self.entries {
            let _ = writeln!(out, "{},{:.16e},{},{}", e.name, e.worst_margin, format_argmin(&e.argmin, dim), e.pass);
        }
        out
    }

    pub fn to_text(&self, dim: usize) -> String {
        let mut out = format!("assumption report for {}\n", self.model);
        for e in &self.entries {
            let _ = writeln!(
                out,
                "  [{}] {:<18} {:<52} worst margin {:>12.5e} (tol {:.1e}) at {} over {} samples",
                if e.pass { "pass" } else { "FAIL" },
                e.name,
                e.description,
                e.worst_margin,
                e.tol_margin,
                format_argmin(&e.argmin, dim),
                e.samples
            );
            for (k, v) in &e.estimates {
                let _ = writeln!(out, "         {k} = {v:.6e}");
            }
            if let Some(note) = &e.note {
                let _ = writeln!(out, "         note: {note}");
            }
        }
        let _ = writeln!(out, "overall: {}", if self.all_pass() { "pass" } else { "FAIL" });
        out
    }
}

fn format_argmin(v: &[f64], dim: usize) -> String {
    if v.is_empty() {
        return String::from("-");
    }
    v.chunks(dim.max(1))
        .map(|c| c.iter().map(|x| format!("{x:.6e}")).collect::<Vec<_>>().join(";"))
        .collect::<Vec<_>>()
        .join("|")
}

/// Tracks the sample with the smallest scaled margin; earlier samples win ties.
struct Worst {
    rel: f64,
    margin: f64,
    scale: f64,
    at: Vec<f64>,
    count: usize,
}

impl Worst {
    fn new() -> Self {
        Self {
            rel: f64::INFINITY,
            margin: f64::INFINITY,
            scale: 0.0,
            at: Vec::new(),
            count: 0,
        }
    }

    fn offer(&mut self, lhs: f64, rhs: f64, at: impl FnOnce() -> Vec<f64>) {
        self.count += 1;
        let margin = rhs - lhs;
        let scale = lhs.abs().max(rhs.abs());
        let rel = if margin.is_nan() {
            f64::NEG_INFINITY
        } else if scale > 0.0 && scale.is_finite() {
            margin / scale
        } else {
            margin
        };
        if rel < self.rel {
            self.rel = rel;
            self.margin = margin;
            self.scale = scale;
            self.at = at();
        }
    }

    fn finish(self, name: &str, description: &str) -> AssumptionEntry {
        let tol = REL_TOL * self.scale;
        AssumptionEntry {
            name: name.into(),
            description: description.into(),
            worst_margin: self.margin,
            argmin: self.at,
            tol_margin: tol,
            pass: self.count > 0 && self.margin >= -tol,
            samples: self.count,
            estimates: Vec::new(),
            note: None,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a)
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn concat(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().chain(b).copied().collect()
}

fn check_dims(model: &SdeModel, sampler: &DomainSampler) -> Result<()> {
    if model.dim() != sampler.dim {
        return Err(Error::invalid(format!(
            "sampler dimension {} does not match model dimension {}",
            sampler.dim,
            model.dim()
        )));
    }
    Ok(())
}

/// `2<x, f(x)> + l1 |g(x)|^2 <= c1 |x|^2 + c2`.
pub fn check_onesided_growth(
    model: &SdeModel,
    constants: &AssumptionConstants,
    sampler: &DomainSampler,
) -> Result<AssumptionEntry> {
    check_dims(model, sampler)?;
    let mut worst = Worst::new();
    for x in sampler.points()? {
        let f = model.drift(&x);
        let g = model.diffusion(&x);
        let lhs = 2.0 * dot(&x, &f) + constants.l1 * norm2(&g);
        let rhs = constants.c1 * norm2(&x) + constants.c2;
        worst.offer(lhs, rhs, || x.clone());
    }
    Ok(worst.finish("onesided_growth", "2<x,f> + l1|g|^2 <= c1|x|^2 + c2"))
}

/// `2<x-y, f(x)-f(y)> + l2 |g(x)-g(y)|^2 <= c3 |x-y|^2`, over pairs with `x != y`.
pub fn check_monotonicity_pair(
    model: &SdeModel,
    constants: &AssumptionConstants,
    sampler: &DomainSampler,
) -> Result<AssumptionEntry> {
    check_dims(model, sampler)?;
    let mut worst = Worst::new();
    for (x, y) in sampler.pairs()? {
        if x == y {
            continue;
        }
        let dx = sub(&x, &y);
        let df = sub(&model.drift(&x), &model.drift(&y));
        let dg = sub(&model.diffusion(&x), &model.diffusion(&y));
        let lhs = 2.0 * dot(&dx, &df) + constants.l2 * norm2(&dg);
        let rhs = constants.c3 * norm2(&dx);
        worst.offer(lhs, rhs, || concat(&x, &y));
    }
    Ok(worst.finish("monotonicity", "2<dx,df> + l2|dg|^2 <= c3|dx|^2"))
}

/// Polynomial Lipschitz bound on the drift, and the derived growth bound
/// `|f(x)| v |g(x)| <= L3 (1 + |x|^q)` with `L3` estimated from the sample.
pub fn check_polynomial_lipschitz(
    model: &SdeModel,
    constants: &AssumptionConstants,
    sampler: &DomainSampler,
) -> Result<(AssumptionEntry, AssumptionEntry)> {
    check_dims(model, sampler)?;
    let q = model.growth_q();
    let mut lip = Worst::new();
    for (x, y) in sampler.pairs()? {
        if x == y {
            continue;
        }
        let df = sub(&model.drift(&x), &model.drift(&y));
        let lhs = norm2(&df).sqrt();
        let weight = 1.0 + norm2(&x).sqrt().powf(q - 1.0) + norm2(&y).sqrt().powf(q - 1.0);
        let rhs = constants.lipschitz * weight * norm2(&sub(&x, &y)).sqrt();
        lip.offer(lhs, rhs, || concat(&x, &y));
    }
    let lip = lip.finish("poly_lipschitz", "|df| <= L1(1+|x|^(q-1)+|y|^(q-1))|dx|");

    let points = sampler.points()?;
    let sizes: Vec<(f64, f64)> = points
        .iter()
        .map(|x| {
            let f = norm2(&model.drift(x)).sqrt();
            let g = norm2(&model.diffusion(x)).sqrt();
            (f.max(g), 1.0 + norm2(x).sqrt().powf(q))
        })
        .collect();
    let l3 = sizes.iter().map(|(s, w)| s / w).fold(0.0, f64::max);
    let mut growth = Worst::new();
    for (x, (size, weight)) in points.iter().zip(&sizes) {
        growth.offer(*size, l3 * weight, || x.clone());
    }
    let mut growth = growth.finish("poly_growth", "|f| v |g| <= L3(1+|x|^q), L3 from sample");
    growth.pass = l3.is_finite();
    growth.estimates.push(("L3".into(), l3));
    Ok((lip, growth))
}

/// Diffusion structure conditions, plus the sign conditions `k1 + c1 < 0` and
/// `k2 + c3 < 0`.
///
/// Without a residual polynomial `P`, the one-point condition is checked with
/// `P = 0`, which is stronger than required; the entry then counts the sample
/// points that would need a non-zero `P` and reports the bound the smallest
/// admissible `P` implies for `sup |P| / den^(2 - p/2)`.
pub fn check_g_structure(
    model: &SdeModel,
    constants: &AssumptionConstants,
    residual: Option<&ResidualPoly>,
    sampler: &DomainSampler,
) -> Result<Vec<AssumptionEntry>> {
    check_dims(model, sampler)?;
    let c = constants;
    let power = 2.0 - c.p_star / 2.0;

    let mut point = Worst::new();
    let mut k1_min = f64::NEG_INFINITY;
    let mut c3_bound = 0.0f64;
    let mut needs_p = 0usize;
    for x in sampler.points()? {
        let g = model.diffusion(&x);
        let gg = norm2(&g);
        let den = c.shift + norm2(&x) + c.alpha * gg;
        let xg = dot(&x, &g);
        let lhs = (1.0 - c.l1) * gg / den - 2.0 * xg * xg / (den * den);
        k1_min = k1_min.max(lhs);
        let p_val = residual.map(|p| p(&x)).unwrap_or(0.0);
        let rhs = c.k1 + p_val / (den * den);
        let needed = if residual.is_some() {
            p_val.abs()
        } else {
            if lhs - c.k1 > REL_TOL * lhs.abs().max(c.k1.abs()) {
                needs_p += 1;
            }
            ((lhs - c.k1) * den * den).max(0.0)
        };
        c3_bound = c3_bound.max(needed / den.powf(power));
        point.offer(lhs, rhs, || x.clone());
    }
    let mut point = point.finish("g_structure_point", "(1-l1)|g|^2/den - 2<x,g>^2/den^2 <= k1 + P/den^2");
    point.estimates.push(("k1_min_with_P0".into(), k1_min));
    if residual.is_some() {
        point.estimates.push(("sup|P|/den^(2-p/2)".into(), c3_bound));
    } else {
        point.estimates.push(("implied_C3".into(), c3_bound));
        if needs_p > 0 {
            point.note = Some(format!(
                "no residual polynomial supplied; {needs_p} sample points need P > 0 (P = 0 is conservative)"
            ));
        }
    }

    let mut pair = Worst::new();
    let mut k2_min = f64::NEG_INFINITY;
    for (x, y) in sampler.pairs()? {
        if x == y {
            continue;
        }
        let dx = sub(&x, &y);
        let dg = sub(&model.diffusion(&x), &model.diffusion(&y));
        let (u, v) = (norm2(&dx), norm2(&dg));
        let den = u + c.beta * v;
        let ip = dot(&dx, &dg);
        let lhs = (1.0 - c.l2) * v / den - 2.0 * ip * ip / (den * den);
        k2_min = k2_min.max(lhs);
        pair.offer(lhs, c.k2, || concat(&x, &y));
    }
    let mut pair = pair.finish("g_structure_pair", "(1-l2)|dg|^2/den - 2<dx,dg>^2/den^2 <= k2");
    pair.estimates.push(("k2_min".into(), k2_min));

    Ok(vec![
        point,
        pair,
        strict_negative("sign_k1_c1", "k1 + c1 < 0", c.k1 + c.c1),
        strict_negative("sign_k2_c3", "k2 + c3 < 0", c.k2 + c.c3),
    ])
}

fn strict_negative(name: &str, description: &str, value: f64) -> AssumptionEntry {
    AssumptionEntry {
        name: name.into(),
        description: description.into(),
        worst_margin: -value,
        argmin: Vec::new(),
        tol_margin: 0.0,
        pass: value < 0.0,
        samples: 1,
        estimates: Vec::new(),
        note: None,
    }
}

fn at_least(name: &str, description: &str, value: f64, bound: f64) -> AssumptionEntry {
    AssumptionEntry {
        name: name.into(),
        description: description.into(),
        worst_margin: value - bound,
        argmin: Vec::new(),
        tol_margin: 0.0,
        pass: value >= bound,
        samples: 1,
        estimates: Vec::new(),
        note: None,
    }
}

/// Runs every check against the claimed constants.
pub fn check_model(
    model: &SdeModel,
    constants: &AssumptionConstants,
    residual: Option<&ResidualPoly>,
    sampler: &DomainSampler,
) -> Result<AssumptionReport> {
    let q = model.growth_q();
    let (lip, growth) = check_polynomial_lipschitz(model, constants, sampler)?;
    let mut entries = vec![
        lip,
        growth,
        check_onesided_growth(model, constants, sampler)?,
        check_monotonicity_pair(model, constants, sampler)?,
    ];
    entries.extend(check_g_structure(model, constants, residual, sampler)?);
    entries.push(at_least("l1_side", "l1 >= max(2q, 3)", constants.l1, (2.0 * q).max(3.0)));
    entries.push(at_least("l2_side", "l2 >= 3", constants.l2, 3.0));
    Ok(AssumptionReport {
        model: model.name().to_string(),
        entries,
    })
}
