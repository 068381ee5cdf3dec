//! Knot refinement strategies.
//!
//! The greedy strategy is a surrogate for MaxMod: it inserts the gap midpoint whose
//! insertion changes the fitted MAP most in `L2[0, 1]`. Candidates are prescreened by the
//! gap between the kernel interpolant and the piecewise-linear fit at each midpoint, and only
//! the best few (plus the widest gap) receive a trial fit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::constraints::ConstraintSet;
use crate::error::{Error, Result};
use crate::grid::{DomainF, KnotGrid, PiecewiseLinear};
use crate::kernels::Kernel;
use crate::rkhs::RkhsContext;
use crate::smoother::{fit_map_warm, MapSolution, Observations, SmoothingProblem, WarmStart};

/// Everything needed to fit a MAP on a given grid.
#[derive(Debug, Clone, Copy)]
pub struct FitSetup<'a> {
    pub kernel: Kernel,
    pub obs: &'a Observations,
    pub cs: ConstraintSet,
    pub jitter: bool,
}

impl FitSetup<'_> {
    pub fn fit(&self, grid: &KnotGrid) -> Result<Fitted> {
        Fitted::new(RkhsContext::new(self.kernel, grid.clone(), self.jitter)?, self.obs, self.cs)
    }
}

/// A grid together with its assembled problem and MAP.
#[derive(Debug, Clone)]
pub struct Fitted {
    pub problem: SmoothingProblem,
    pub fit: MapSolution,
}

impl Fitted {
    pub fn new(ctx: RkhsContext, obs: &Observations, cs: ConstraintSet) -> Result<Self> {
        Self::warm(ctx, obs, cs, &WarmStart::default())
    }

    pub fn warm(ctx: RkhsContext, obs: &Observations, cs: ConstraintSet, warm: &WarmStart) -> Result<Self> {
        let problem = SmoothingProblem::assemble(ctx, obs.clone(), cs)?;
        let fit = fit_map_warm(&problem, warm)?;
        Ok(Self { problem, fit })
    }

    pub fn grid(&self) -> &KnotGrid {
        self.problem.ctx().grid()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Strategy {
    /// Equispaced grid with the requested count; consecutive grids are not nested.
    Equispaced,
    Greedy { trial_fits: usize },
    /// Uniform draws on `[0, 1]`, kept when they fall in the interval.
    Rejection { interval: DomainF },
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Equispaced => "equispaced",
            Strategy::Greedy { .. } => "greedy",
            Strategy::Rejection { .. } => "rejection",
        }
    }

    pub fn is_nested(&self) -> bool {
        !matches!(self, Strategy::Equispaced)
    }
}

/// Sub-gap midpoints `(position, midpoint, width)` of consecutive knots, restricted to `F`.
pub fn gap_midpoints(grid: &KnotGrid) -> Vec<(usize, f64, f64)> {
    let knots = grid.knots();
    let mut out = Vec::new();
    for (i, w) in knots.windows(2).enumerate() {
        for &(a, b) in grid.domain().intervals() {
            let (lo, hi) = (w[0].max(a), w[1].min(b));
            if hi > lo {
                let m = 0.5 * (lo + hi);
                if m > w[0] && m < w[1] {
                    out.push((i, m, hi - lo));
                }
            }
        }
    }
    out
}

/// Exact `L2[0, 1]` distance between the extensions of two piecewise-linear functions.
pub fn l2_distance(a: &PiecewiseLinear, b: &PiecewiseLinear) -> f64 {
    let mut pts: Vec<f64> = a.grid().knots().iter().chain(b.grid().knots().iter()).copied().collect();
    for d in [a.grid().domain(), b.grid().domain()] {
        for &(lo, hi) in d.intervals() {
            pts.push(lo);
            pts.push(hi);
        }
    }
    pts.push(0.0);
    pts.push(1.0);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let diff: Vec<f64> = pts.iter().map(|&t| a.eval_extended(t) - b.eval_extended(t)).collect();
    let mut s = 0.0;
    for i in 0..pts.len() - 1 {
        let h = pts[i + 1] - pts[i];
        let (p, q) = (diff[i], diff[i + 1]);
        s += h * (p * p + p * q + q * q) / 3.0;
    }
    s.sqrt()
}

/// Scored greedy candidate.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub position: usize,
    pub knot: f64,
    pub width: f64,
    pub prescreen: f64,
}

/// All midpoint candidates with their prescreen score `|rho_N(u)(m) - u(m)| sqrt(width)`.
pub fn greedy_candidates(cur: &Fitted) -> Vec<Candidate> {
    let ctx = cur.problem.ctx();
    let h = ctx.interpolant_coeffs(cur.fit.coeffs.coeffs());
    gap_midpoints(ctx.grid())
        .into_iter()
        .map(|(position, knot, width)| Candidate {
            position,
            knot,
            width,
            prescreen: (h.eval(knot) - cur.fit.coeffs.eval(knot)).abs() * width.sqrt(),
        })
        .collect()
}

/// Indices into `cands` receiving a trial fit: the best `k - 1` by prescreen and the widest gap.
pub fn shortlist(cands: &[Candidate], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..cands.len()).collect();
    order.sort_by(|&i, &j| cands[j].prescreen.total_cmp(&cands[i].prescreen).then(i.cmp(&j)));
    let mut picked: Vec<usize> = order.into_iter().take(k.saturating_sub(1).max(1)).collect();
    if k > 1 {
        let widest = (0..cands.len()).fold(None, |best: Option<usize>, i| match best {
            Some(b) if cands[b].width >= cands[i].width => Some(b),
            _ => Some(i),
        });
        if let Some(w) = widest {
            if !picked.contains(&w) {
                picked.push(w);
            }
        }
    }
    picked.sort_unstable();
    picked
}

/// Fit after inserting `t`, warm-started from the current solution.
pub fn trial_fit(cur: &Fitted, t: f64) -> Result<Fitted> {
    let ctx = cur.problem.ctx().refined(t)?;
    let start = ctx.grid().project(|s| cur.fit.coeffs.eval(s));
    let warm = WarmStart {
        point: Some(start.into_coeffs()),
        active_set: None,
    };
    Fitted::warm(ctx, cur.problem.observations(), *cur.problem.constraints(), &warm)
}

/// One greedy insertion; returns the chosen fit and its `L2` change.
pub fn greedy_step(cur: &Fitted, trial_fits: usize) -> Result<(Fitted, f64)> {
    let cands = greedy_candidates(cur);
    if cands.is_empty() {
        return Err(Error::BudgetExhausted { n: cur.grid().len() });
    }
    let mut best: Option<(Fitted, f64)> = None;
    for i in shortlist(&cands, trial_fits) {
        let next = trial_fit(cur, cands[i].knot)?;
        let score = l2_distance(&next.fit.coeffs, &cur.fit.coeffs);
        if best.as_ref().is_none_or(|(_, s)| score > *s) {
            best = Some((next, score));
        }
    }
    Ok(best.expect("shortlist is nonempty"))
}

/// One rejection-sampled insertion inside `interval`.
pub fn rejection_step(grid: &KnotGrid, interval: &DomainF, rng: &mut ChaCha8Rng) -> Result<KnotGrid> {
    if interval.measure() <= 0.0 {
        return Err(Error::Config("rejection interval has zero length".into()));
    }
    loop {
        let t: f64 = rng.random();
        if interval.contains(t) && grid.insertion_index(t).is_ok() {
            return grid.refine(t);
        }
    }
}

/// Drives a strategy from `N0` knots upward.
#[derive(Debug, Clone)]
pub struct Refiner {
    strategy: Strategy,
    nmax: usize,
    rng: ChaCha8Rng,
}

impl Refiner {
    pub fn new(strategy: Strategy, nmax: usize, seed: u64) -> Self {
        Self {
            strategy,
            nmax,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn strategy(&self) -> &Strategy {
        &self.strategy
    }

    pub fn initial_grid(&self, n0: usize, domain: &DomainF) -> Result<KnotGrid> {
        if domain.is_unit() {
            KnotGrid::equispaced(n0)
        } else {
            KnotGrid::spread_over(domain, n0)
        }
    }

    /// Grid with `target` knots, refining from `grid` (and its fit, for the greedy strategy).
    pub fn advance(
        &mut self,
        grid: KnotGrid,
        mut fitted: Option<Fitted>,
        target: usize,
        setup: &FitSetup<'_>,
    ) -> Result<(KnotGrid, Option<Fitted>)> {
        if target > self.nmax {
            return Err(Error::BudgetExhausted { n: self.nmax });
        }
        if grid.len() >= target {
            return Ok((grid, fitted));
        }
        match &self.strategy {
            Strategy::Equispaced => Ok((KnotGrid::equispaced(target)?, None)),
            Strategy::Rejection { interval } => {
                let interval = interval.clone();
                let mut g = grid;
                while g.len() < target {
                    g = rejection_step(&g, &interval, &mut self.rng)?;
                }
                Ok((g, None))
            }
            Strategy::Greedy { trial_fits } => {
                let mut g = grid;
                while g.len() < target {
                    let cur = match fitted.take() {
                        Some(f) => f,
                        None => setup.fit(&g)?,
                    };
                    let (next, _) = greedy_step(&cur, *trial_fits)?;
                    g = next.grid().clone();
                    fitted = Some(next);
                }
                Ok((g, fitted))
            }
        }
    }
}
