//! The domain `F`, knot grids, hat functions, piecewise-linear
//! interpolation and the multi-affine extension across holes of `F`.

use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of audit points laid on each interval of `F`.
pub const AUDIT_POINTS_PER_INTERVAL: usize = 2001;

/// A finite union of disjoint closed intervals in `[0, 1]` containing `0` and `1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainF {
    intervals: Vec<(f64, f64)>,
}

impl DomainF {
    pub fn unit() -> Self {
        Self {
            intervals: vec![(0.0, 1.0)],
        }
    }

    pub fn new(intervals: Vec<(f64, f64)>) -> Result<Self> {
        if intervals.is_empty() {
            return Err(Error::InvalidParameter("F needs at least one interval".into()));
        }
        for &(a, b) in &intervals {
            if !(a <= b) || a < 0.0 || b > 1.0 {
                return Err(Error::InvalidParameter(format!("bad F interval [{a}, {b}]")));
            }
        }
        for w in intervals.windows(2) {
            if !(w[0].1 < w[1].0) {
                return Err(Error::InvalidParameter(
                    "F intervals must be sorted and disjoint".into(),
                ));
            }
        }
        if intervals[0].0 != 0.0 || intervals[intervals.len() - 1].1 != 1.0 {
            return Err(Error::InvalidParameter("F must contain 0 and 1".into()));
        }
        Ok(Self { intervals })
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn is_unit(&self) -> bool {
        self.intervals == [(0.0, 1.0)]
    }

    pub fn measure(&self) -> f64 {
        self.intervals.iter().map(|(a, b)| b - a).sum()
    }

    pub fn contains(&self, t: f64) -> bool {
        self.intervals.iter().any(|&(a, b)| a <= t && t <= b)
    }

    /// Index of the interval containing `t`, if any.
    pub fn interval_of(&self, t: f64) -> Option<usize> {
        let i = self.intervals.partition_point(|&(_, b)| b < t);
        (i < self.intervals.len() && self.intervals[i].0 <= t).then_some(i)
    }

    /// For `t` in a hole of `F`, the flanking boundary points with their affine weights.
    pub fn bridge(&self, t: f64) -> Option<(f64, f64, f64, f64)> {
        if self.contains(t) {
            return None;
        }
        let i = self.intervals.partition_point(|&(_, b)| b < t);
        let lo = self.intervals[i - 1].1;
        let hi = self.intervals[i].0;
        let w_lo = (hi - t) / (hi - lo);
        Some((lo, hi, w_lo, 1.0 - w_lo))
    }

    /// Multi-affine extension `P(u)(t)` of a function known on `F`.
    pub fn extend(&self, u: impl Fn(f64) -> f64, t: f64) -> f64 {
        match self.bridge(t) {
            None => u(t),
            Some((lo, hi, w_lo, w_hi)) => u(lo) * w_lo + u(hi) * w_hi,
        }
    }

    /// Audit sample of `F`: equispaced points on every interval merged with `extra`.
    pub fn audit_points(&self, extra: &[f64]) -> Vec<f64> {
        let mut pts = Vec::with_capacity(self.intervals.len() * AUDIT_POINTS_PER_INTERVAL + extra.len());
        for &(a, b) in &self.intervals {
            if a == b {
                pts.push(a);
                continue;
            }
            let m = AUDIT_POINTS_PER_INTERVAL - 1;
            pts.extend((0..=m).map(|i| if i == m { b } else { a + (b - a) * i as f64 / m as f64 }));
        }
        pts.extend(extra.iter().copied().filter(|&t| self.contains(t)));
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    pub fn to_text(&self) -> String {
        self.intervals
            .iter()
            .map(|(a, b)| format!("{a}:{b}"))
            .collect::<Vec<_>>()
            .join(";")
    }

    pub fn from_text(s: &str) -> Result<Self> {
        let mut iv = Vec::new();
        for part in s.split(';').filter(|p| !p.trim().is_empty()) {
            let (a, b) = part
                .split_once(':')
                .ok_or_else(|| Error::Parse(format!("bad interval `{part}`")))?;
            let p = |x: &str| {
                x.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("`{x}`: {e}")))
            };
            iv.push((p(a)?, p(b)?));
        }
        Self::new(iv)
    }
}

/// Flanking knots of a point and the affine weights on them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbors {
    pub lo: f64,
    pub hi: f64,
    pub w_lo: f64,
    pub w_hi: f64,
    pub i_lo: usize,
    pub i_hi: usize,
}

/// A strictly increasing set of knots inside `F`.
#[derive(Debug, Clone)]
pub struct KnotGrid {
    knots: Arc<[f64]>,
    domain: Arc<DomainF>,
    parent: Option<Arc<KnotGrid>>,
}

impl PartialEq for KnotGrid {
    fn eq(&self, other: &Self) -> bool {
        self.knots == other.knots && self.domain == other.domain
    }
}

fn validate_knots(knots: &[f64], domain: &DomainF) -> Result<()> {
    if knots.is_empty() {
        return Err(Error::InvalidParameter("a grid needs at least one knot".into()));
    }
    for w in knots.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::InvalidParameter(format!(
                "knots must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
    }
    if let Some(t) = knots.iter().find(|&&t| !domain.contains(t)) {
        return Err(Error::InvalidParameter(format!("knot {t} is outside F")));
    }
    Ok(())
}

impl KnotGrid {
    /// Grid with `knots[0] = 0` and `knots[N-1] = 1`.
    pub fn new(knots: Vec<f64>, domain: DomainF) -> Result<Self> {
        validate_knots(&knots, &domain)?;
        if knots.len() < 2 || knots[0] != 0.0 || knots[knots.len() - 1] != 1.0 {
            return Err(Error::InvalidParameter("grid must contain the knots 0 and 1".into()));
        }
        Ok(Self::raw(knots, domain))
    }

    /// Grid without the endpoint requirement, for degenerate test set-ups.
    ///
    /// Hat functions use the virtual knots `-1` and `2` beyond the ends.
    pub fn from_knots(knots: Vec<f64>, domain: DomainF) -> Result<Self> {
        validate_knots(&knots, &domain)?;
        Ok(Self::raw(knots, domain))
    }

    fn raw(knots: Vec<f64>, domain: DomainF) -> Self {
        Self {
            knots: knots.into(),
            domain: Arc::new(domain),
            parent: None,
        }
    }

    /// `n >= 2` equispaced knots on `[0, 1]`.
    pub fn equispaced(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter("need at least two knots".into()));
        }
        let m = (n - 1) as f64;
        let knots = (0..n)
            .map(|i| if i == n - 1 { 1.0 } else { i as f64 / m })
            .collect();
        Self::new(knots, DomainF::unit())
    }

    /// `n` knots spread over the intervals of `F` in proportion to their lengths,
    /// every interval endpoint included.
    pub fn spread_over(domain: &DomainF, n: usize) -> Result<Self> {
        let iv = domain.intervals();
        let k = iv.len();
        if n < 2 * k {
            return Err(Error::InvalidParameter(format!(
                "need at least {} knots for {k} intervals",
                2 * k
            )));
        }
        let total = domain.measure();
        let h = total / (n - k) as f64;
        let mut counts: Vec<usize> = iv
            .iter()
            .map(|(a, b)| if a == b { 1 } else { ((b - a) / h).round() as usize + 1 })
            .collect();
        let assigned: usize = counts.iter().sum();
        let longest = (0..k)
            .max_by(|&i, &j| (iv[i].1 - iv[i].0).total_cmp(&(iv[j].1 - iv[j].0)))
            .unwrap_or(0);
        counts[longest] = (counts[longest] + n).checked_sub(assigned).ok_or_else(|| {
            Error::InvalidParameter("cannot spread knots over F".into())
        })?;
        let mut knots = Vec::with_capacity(n);
        for (&(a, b), &c) in iv.iter().zip(&counts) {
            if c == 1 {
                knots.push(a);
                continue;
            }
            let m = (c - 1) as f64;
            knots.extend((0..c).map(|i| if i == c - 1 { b } else { a + (b - a) * i as f64 / m }));
        }
        Self::new(knots, domain.clone())
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knots.is_empty()
    }

    pub fn domain(&self) -> &DomainF {
        &self.domain
    }

    pub fn parent(&self) -> Option<&KnotGrid> {
        self.parent.as_deref()
    }

    /// Position at which `t` would be inserted, or an error when `t` is unusable.
    pub fn insertion_index(&self, t: f64) -> Result<usize> {
        if !self.domain.contains(t) {
            return Err(Error::InvalidParameter(format!("knot {t} is outside F")));
        }
        let pos = self.knots.partition_point(|&k| k < t);
        if pos < self.len() && self.knots[pos] == t {
            return Err(Error::InvalidParameter(format!("knot {t} already present")));
        }
        Ok(pos)
    }

    /// Refined grid with the extra knot `t`; `self` becomes its parent.
    pub fn refine(&self, t: f64) -> Result<KnotGrid> {
        let pos = self.insertion_index(t)?;
        let mut knots = Vec::with_capacity(self.len() + 1);
        knots.extend_from_slice(&self.knots[..pos]);
        knots.push(t);
        knots.extend_from_slice(&self.knots[pos..]);
        Ok(KnotGrid {
            knots: knots.into(),
            domain: Arc::clone(&self.domain),
            parent: Some(Arc::new(self.clone())),
        })
    }

    /// `true` when every ancestor's knots are contained in its child's knots.
    pub fn is_nested(&self) -> bool {
        let mut cur = self;
        while let Some(p) = cur.parent() {
            if !p.knots.iter().all(|t| cur.knots.binary_search_by(|k| k.total_cmp(t)).is_ok()) {
                return false;
            }
            cur = p;
        }
        true
    }

    /// Hat function `phi_i(t)`, zero-based `i`.
    pub fn hat_eval(&self, i: usize, t: f64) -> f64 {
        let k = &self.knots;
        let n = k.len();
        let prev = if i == 0 { -1.0 } else { k[i - 1] };
        let next = if i + 1 == n { 2.0 } else { k[i + 1] };
        if t < prev || t > next {
            0.0
        } else if t <= k[i] {
            (t - prev) / (k[i] - prev)
        } else {
            (next - t) / (next - k[i])
        }
    }

    /// Flanking knots `t^-`, `t^+` of `t` and the interpolation weights.
    ///
    /// At a knot both sides coincide with weights `1/2`. Points beyond the outer knots
    /// are attached to the nearest knot.
    pub fn neighbors(&self, t: f64) -> Neighbors {
        let k = &self.knots;
        let n = k.len();
        let pos = k.partition_point(|&x| x < t);
        let at = |i: usize| Neighbors {
            lo: k[i],
            hi: k[i],
            w_lo: 0.5,
            w_hi: 0.5,
            i_lo: i,
            i_hi: i,
        };
        if pos < n && k[pos] == t {
            return at(pos);
        }
        if pos == 0 {
            return at(0);
        }
        if pos == n {
            return at(n - 1);
        }
        let (lo, hi) = (k[pos - 1], k[pos]);
        let w_lo = (hi - t) / (hi - lo);
        Neighbors {
            lo,
            hi,
            w_lo,
            w_hi: (t - lo) / (hi - lo),
            i_lo: pos - 1,
            i_hi: pos,
        }
    }

    /// Hat-function weights at `t` after the multi-affine extension of `F`,
    /// as at most four `(index, weight)` pairs with repeated indices merged.
    pub fn extended_weights(&self, t: f64) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(4);
        let mut push = |i: usize, w: f64| {
            if let Some(e) = out.iter_mut().find(|e| e.0 == i) {
                e.1 += w;
            } else {
                out.push((i, w));
            }
        };
        let add_point = |s: f64, scale: f64, push: &mut dyn FnMut(usize, f64)| {
            let nb = self.neighbors(s);
            push(nb.i_lo, scale * nb.w_lo);
            push(nb.i_hi, scale * nb.w_hi);
        };
        match self.domain.bridge(t) {
            None => add_point(t, 1.0, &mut push),
            Some((lo, hi, w_lo, w_hi)) => {
                add_point(lo, w_lo, &mut push);
                add_point(hi, w_hi, &mut push);
            }
        }
        out.retain(|e| e.1 != 0.0);
        out
    }

    /// Grid size `delta_N`, computed interval by interval on `F`.
    ///
    /// Knots outside an interval of `F` never shrink the distance for points inside it;
    /// an interval without knots yields `+inf`.
    pub fn delta(&self) -> f64 {
        let mut delta = 0.0f64;
        for &(a, b) in self.domain.intervals() {
            let lo = self.knots.partition_point(|&k| k < a);
            let hi = self.knots.partition_point(|&k| k <= b);
            let inside = &self.knots[lo..hi];
            let (Some(&first), Some(&last)) = (inside.first(), inside.last()) else {
                return f64::INFINITY;
            };
            delta = delta.max(first - a).max(b - last);
            for w in inside.windows(2) {
                delta = delta.max(0.5 * (w[1] - w[0]));
            }
        }
        delta
    }

    /// Audit sample of `F` including every knot.
    pub fn audit_points(&self) -> Vec<f64> {
        self.domain.audit_points(&self.knots)
    }

    /// Interpolant `pi_N(f)`.
    pub fn project(&self, f: impl Fn(f64) -> f64) -> PiecewiseLinear {
        let coeffs = DVector::from_iterator(self.len(), self.knots.iter().map(|&t| f(t)));
        PiecewiseLinear {
            grid: self.clone(),
            coeffs,
        }
    }

    /// Plain-text form: a header line with the intervals of `F`, then one knot per line.
    pub fn to_text(&self) -> String {
        let mut s = format!("# F={}\nknot\n", self.domain.to_text());
        for t in self.knots.iter() {
            s.push_str(&format!("{t:.17e}\n"));
        }
        s
    }

    pub fn from_text(s: &str) -> Result<Self> {
        let mut domain = DomainF::unit();
        let mut knots = Vec::new();
        for line in s.lines().map(str::trim).filter(|l| !l.is_empty()) {
            if let Some(f) = line.strip_prefix("# F=") {
                domain = DomainF::from_text(f)?;
            } else if line.starts_with('#') || line == "knot" {
                continue;
            } else {
                knots.push(
                    line.parse::<f64>()
                        .map_err(|e| Error::Parse(format!("`{line}`: {e}")))?,
                );
            }
        }
        Self::new(knots, domain)
    }
}

/// A function `sum_j c_j phi_j` on a knot grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    grid: KnotGrid,
    coeffs: DVector<f64>,
}

impl PiecewiseLinear {
    pub fn new(grid: KnotGrid, coeffs: DVector<f64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} coefficients for {} knots",
                coeffs.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, coeffs })
    }

    pub fn zeros(grid: KnotGrid) -> Self {
        let n = grid.len();
        Self {
            grid,
            coeffs: DVector::zeros(n),
        }
    }

    pub fn grid(&self) -> &KnotGrid {
        &self.grid
    }

    pub fn coeffs(&self) -> &DVector<f64> {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> DVector<f64> {
        self.coeffs
    }

    /// `sum_j c_j phi_j(t)`; exact at knots.
    pub fn eval(&self, t: f64) -> f64 {
        let nb = self.grid.neighbors(t);
        self.coeffs[nb.i_lo] * nb.w_lo + self.coeffs[nb.i_hi] * nb.w_hi
    }

    /// `P(u)(t)` for `u` restricted to `F`.
    pub fn eval_extended(&self, t: f64) -> f64 {
        self.grid.domain().extend(|s| self.eval(s), t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(knots: &[f64]) -> KnotGrid {
        KnotGrid::new(knots.to_vec(), DomainF::unit()).unwrap()
    }

    fn holes() -> DomainF {
        DomainF::new(vec![(0.0, 0.3), (0.6, 1.0)]).unwrap()
    }

    #[test]
    fn hat_values() {
        let g = unit(&[0.0, 0.5, 1.0]);
        assert_eq!(g.hat_eval(1, 0.25), 0.5);
        for i in 0..3 {
            for j in 0..3 {
                let v = g.hat_eval(i, g.knots()[j]);
                assert_eq!(v, if i == j { 1.0 } else { 0.0 });
            }
        }
        let g = unit(&[0.0, 0.3, 0.6, 1.0]);
        let s = g.hat_eval(1, 0.37) + g.hat_eval(2, 0.37);
        assert!((s - 1.0).abs() <= 1e-15);
    }

    #[test]
    fn neighbor_weights() {
        let g = unit(&[0.0, 0.5, 1.0]);
        let nb = g.neighbors(0.5);
        assert_eq!((nb.lo, nb.hi, nb.w_lo, nb.w_hi), (0.5, 0.5, 0.5, 0.5));
        let nb = g.neighbors(0.125);
        assert_eq!((nb.lo, nb.hi, nb.w_lo, nb.w_hi), (0.0, 0.5, 0.75, 0.25));
        let nb = unit(&[0.0, 1.0]).neighbors(1.0 / 3.0);
        assert!((nb.w_lo - 2.0 / 3.0).abs() < 1e-15 && (nb.w_hi - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn projection_examples() {
        let g = unit(&[0.0, 0.5, 1.0]);
        assert_eq!(g.project(|t| t * t).eval(0.25), 0.125);
        let c = g.project(|_| 2.75);
        for t in [0.0, 0.1, 0.77, 1.0] {
            assert_eq!(c.eval(t), 2.75);
        }
    }

    #[test]
    fn extension_bridges_holes() {
        let f = holes();
        let u = |t: f64| if t <= 0.3 { 1.0 } else { 3.0 };
        assert!((f.extend(u, 0.45) - 2.0).abs() < 1e-15);
        assert_eq!(f.extend(u, 0.1), 1.0);
        assert_eq!(DomainF::unit().extend(|t| t.sin(), 0.45), 0.45f64.sin());
    }

    #[test]
    fn delta_examples() {
        assert_eq!(KnotGrid::equispaced(3).unwrap().delta(), 0.25);
        assert_eq!(unit(&[0.0, 0.1, 1.0]).delta(), 0.45);
        let g = KnotGrid::new(vec![0.0, 0.3, 0.6, 1.0], holes()).unwrap();
        assert!((g.delta() - 0.2).abs() < 1e-15);
        let g = KnotGrid::new(vec![0.0, 1.0], holes()).unwrap();
        assert!((g.delta() - 0.4).abs() < 1e-15);
    }

    #[test]
    fn refine_keeps_nesting() {
        let g = KnotGrid::equispaced(3).unwrap();
        let r = g.refine(0.3).unwrap().refine(0.9).unwrap();
        assert_eq!(r.knots(), &[0.0, 0.3, 0.5, 0.9, 1.0]);
        assert!(r.is_nested());
        assert!(g.refine(0.5).is_err());
        assert!(KnotGrid::new(vec![0.0, 1.0], holes()).unwrap().refine(0.4).is_err());
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(KnotGrid::new(vec![0.0, 0.5, 0.5, 1.0], DomainF::unit()).is_err());
        assert!(KnotGrid::new(vec![0.1, 1.0], DomainF::unit()).is_err());
        assert!(KnotGrid::new(vec![0.0, 0.4, 1.0], holes()).is_err());
        assert!(DomainF::new(vec![(0.0, 0.5), (0.4, 1.0)]).is_err());
        assert!(DomainF::new(vec![(0.1, 1.0)]).is_err());
    }

    #[test]
    fn spread_over_holes() {
        let g = KnotGrid::spread_over(&holes(), 1000).unwrap();
        assert_eq!(g.len(), 1000);
        for t in [0.0, 0.3, 0.6, 1.0] {
            assert!(g.knots().contains(&t));
        }
    }

    #[test]
    fn text_round_trip() {
        let g = KnotGrid::new(vec![0.0, 0.25, 0.7, 1.0], holes()).unwrap();
        let back = KnotGrid::from_text(&g.to_text()).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn extended_weights_merge_in_dense_domain() {
        let g = unit(&[0.0, 0.5, 1.0]);
        assert_eq!(g.extended_weights(0.5), vec![(1, 1.0)]);
        let g = KnotGrid::new(vec![0.0, 0.3, 0.6, 1.0], holes()).unwrap();
        let w = g.extended_weights(0.45);
        assert_eq!(w.len(), 2);
        assert!((w[0].1 - 0.5).abs() < 1e-15 && (w[1].1 - 0.5).abs() < 1e-15);
    }
}
