//! Matrix-free mass and stiffness operators.
//!
//! With univariate collocation factors `B_l`, `Ḃ_l` at the weighted
//! quadrature points and weight factors `W^(a,b)_l`, the operators are
//!
//! ```text
//! M̃ = (W^(0,0)_d ⊗ … ⊗ W^(0,0)_1) D (B_d ⊗ … ⊗ B_1)
//! K̃ = Σ_{α,β} W^(α,β) D^(α,β) B^(β)
//! ```
//!
//! where the diagonal `D` holds the pulled-back coefficient at every
//! tensor point and `W^(α,β)`, `B^(β)` carry a derivative factor only in
//! directions `α` (test) and `β` (trial). Only the Dirichlet-interior basis
//! functions take part, and every product runs through sum-factorization.

use crate::coefficients::{mass_coefficient, stiffness_coefficient, ScalarField, TensorField, PULLBACK_FLOPS};
use crate::error::{Error, Result};
use crate::geometry::GeometryMap;
use crate::kron::{kron_apply_into, kron_apply_scaled_into, meter_acquire, meter_flops, meter_release, CostMeter};
use crate::sparse::CsrMatrix;
use crate::spline::TensorSpace;
use crate::wq::WqRule1D;

/// Univariate factors of one tensor weighted-quadrature discretization.
#[derive(Debug, Clone)]
pub struct WqFactors {
    dims: Vec<usize>,
    qdims: Vec<usize>,
    points: Vec<Vec<f64>>,
    b: Vec<[CsrMatrix; 2]>,
    w: Vec<[[CsrMatrix; 2]; 2]>,
    w_last_t: [[CsrMatrix; 2]; 2],
}

impl WqFactors {
    pub fn new(space: &TensorSpace, rules: &[WqRule1D]) -> Result<Self> {
        if rules.len() != space.dim() {
            return Err(Error::ShapeMismatch {
                expected: space.dim(),
                found: rules.len(),
            });
        }
        for (l, rule) in rules.iter().enumerate() {
            if rule.knot_vector() != space.knot_vector(l) {
                return Err(Error::InvalidArgument(format!(
                    "rule in direction {l} was built on a different knot vector"
                )));
            }
        }
        let b = rules
            .iter()
            .map(|r| [r.interior_collocation(0), r.interior_collocation(1)])
            .collect();
        let w: Vec<[[CsrMatrix; 2]; 2]> = rules
            .iter()
            .map(|r| {
                [
                    [r.interior_weights(0, 0), r.interior_weights(0, 1)],
                    [r.interior_weights(1, 0), r.interior_weights(1, 1)],
                ]
            })
            .collect();
        let last = w.last().unwrap();
        let w_last_t = [
            [last[0][0].transpose(), last[0][1].transpose()],
            [last[1][0].transpose(), last[1][1].transpose()],
        ];
        Ok(Self {
            dims: space.dims(),
            qdims: rules.iter().map(|r| r.num_points()).collect(),
            points: rules.iter().map(|r| r.points().to_vec()).collect(),
            b,
            w,
            w_last_t,
        })
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    /// Interior functions per direction.
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Quadrature points per direction.
    pub fn point_dims(&self) -> &[usize] {
        &self.qdims
    }

    pub fn num_dofs(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn num_points(&self) -> usize {
        self.qdims.iter().product()
    }

    /// Univariate points of direction `l`.
    pub fn points(&self, l: usize) -> &[f64] {
        &self.points[l]
    }

    /// Interior collocation `B_l` (`deriv = 0`) or `Ḃ_l` (`deriv = 1`).
    pub fn collocation(&self, l: usize, deriv: usize) -> &CsrMatrix {
        &self.b[l][deriv]
    }

    /// Interior weights `W^(a,b)_l`.
    pub fn weights(&self, l: usize, a: usize, b: usize) -> &CsrMatrix {
        &self.w[l][a][b]
    }

    /// Parametric coordinates of the tensor point with flat index `q`.
    pub fn point(&self, q: usize, xi: &mut [f64]) {
        let mut rest = q;
        for (l, x) in xi.iter_mut().enumerate() {
            *x = self.points[l][rest % self.qdims[l]];
            rest /= self.qdims[l];
        }
    }

    fn trial_factors(&self, beta: Option<usize>) -> Vec<&CsrMatrix> {
        (0..self.dim())
            .map(|l| &self.b[l][usize::from(beta == Some(l))])
            .collect()
    }

    fn test_factors(&self, alpha: Option<usize>, beta: Option<usize>) -> (Vec<&CsrMatrix>, &CsrMatrix) {
        let ab = |l: usize| (usize::from(alpha == Some(l)), usize::from(beta == Some(l)));
        let factors = (0..self.dim())
            .map(|l| {
                let (a, b) = ab(l);
                &self.w[l][a][b]
            })
            .collect();
        let (a, b) = ab(self.dim() - 1);
        (factors, &self.w_last_t[a][b])
    }

    /// Evaluates `value(ξ)` at every tensor point.
    fn fill_grid(&self, mut value: impl FnMut(&[f64]) -> Result<()>) -> Result<()> {
        let mut xi = vec![0.0; self.dim()];
        for q in 0..self.num_points() {
            self.point(q, &mut xi);
            value(&xi)?;
        }
        Ok(())
    }
}

/// Coefficient source for the diagonal stage.
enum Diagonal<'a> {
    Stored(&'a [f64]),
    OnTheFly(&'a dyn Fn(&[f64]) -> f64),
}

/// `out = W^(α,β) diag(coef) t`, streaming the coefficient plane by plane.
fn weighted_stage(
    f: &WqFactors,
    alpha: Option<usize>,
    beta: Option<usize>,
    t: &[f64],
    coef: Diagonal<'_>,
    out: &mut [f64],
    meter: &mut Option<&mut CostMeter>,
) -> Result<()> {
    let (factors, last_t) = f.test_factors(alpha, beta);
    let plane = f.num_points() / f.qdims[f.dim() - 1];
    let mut xi = vec![0.0; f.dim()];
    let mut scale = |c: usize, x: &[f64], s: &mut [f64]| match &coef {
        Diagonal::Stored(grid) => {
            let g = &grid[c * plane..(c + 1) * plane];
            for ((sk, xk), gk) in s.iter_mut().zip(x).zip(g) {
                *sk = gk * xk;
            }
        }
        Diagonal::OnTheFly(eval) => {
            for (k, (sk, xk)) in s.iter_mut().zip(x).enumerate() {
                f.point(c * plane + k, &mut xi);
                *sk = eval(&xi) * xk;
            }
        }
    };
    meter_flops(meter, f.num_points() as u64);
    kron_apply_scaled_into(&factors, last_t, t, &mut scale, out, meter.as_deref_mut())
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::ShapeMismatch { expected, found });
    }
    Ok(())
}

fn check_geometry(space: &TensorSpace, geom: &GeometryMap) -> Result<()> {
    if geom.dim() != space.dim() {
        return Err(Error::InvalidArgument(format!(
            "geometry dimension {} does not match space dimension {}",
            geom.dim(),
            space.dim()
        )));
    }
    Ok(())
}

fn per_point_cost(geom: &GeometryMap) -> u64 {
    geom.eval_cost() + PULLBACK_FLOPS
}

/// Matrix-free weighted-quadrature mass operator `M̃ = W D B`.
#[derive(Debug, Clone)]
pub struct MassOperator {
    factors: WqFactors,
    geom: GeometryMap,
    alpha: ScalarField,
    grid: Option<Vec<f64>>,
    setup_flops: u64,
}

impl MassOperator {
    /// Builds the factors and evaluates `c = α(F) det J` on the tensor grid.
    pub fn setup(
        space: &TensorSpace,
        rules: &[WqRule1D],
        geom: &GeometryMap,
        alpha: &ScalarField,
        mut meter: Option<&mut CostMeter>,
    ) -> Result<Self> {
        check_geometry(space, geom)?;
        let factors = WqFactors::new(space, rules)?;
        let grid = mass_grid(&factors, geom, alpha)?;
        let setup_flops = grid.len() as u64 * per_point_cost(geom);
        meter_flops(&mut meter, setup_flops);
        Ok(Self {
            factors,
            geom: geom.clone(),
            alpha: alpha.clone(),
            grid: Some(grid),
            setup_flops,
        })
    }

    pub fn factors(&self) -> &WqFactors {
        &self.factors
    }

    pub fn size(&self) -> usize {
        self.factors.num_dofs()
    }

    /// Stored coefficient values, `None` in on-the-fly mode.
    pub fn coefficient_grid(&self) -> Option<&[f64]> {
        self.grid.as_deref()
    }

    /// Scalars held for coefficients (zero in on-the-fly mode).
    pub fn coefficient_scalars(&self) -> usize {
        self.grid.as_ref().map_or(0, |g| g.len())
    }

    pub fn setup_flops(&self) -> u64 {
        self.setup_flops
    }

    pub fn is_on_the_fly(&self) -> bool {
        self.grid.is_none()
    }

    /// Drops the stored grid (coefficients recomputed in every apply) or
    /// restores it.
    pub fn set_on_the_fly(&mut self, enabled: bool) {
        if enabled {
            self.grid = None;
        } else if self.grid.is_none() {
            self.grid = Some(mass_grid(&self.factors, &self.geom, &self.alpha).expect("grid validated at setup"));
        }
    }

    pub fn apply(&self, v: &[f64], meter: Option<&mut CostMeter>) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.size()];
        self.apply_into(v, &mut out, meter)?;
        Ok(out)
    }

    pub fn apply_into(&self, v: &[f64], out: &mut [f64], mut meter: Option<&mut CostMeter>) -> Result<()> {
        let f = &self.factors;
        check_len(f.num_dofs(), v.len())?;
        check_len(f.num_dofs(), out.len())?;
        let nq = f.num_points();
        let mut t = vec![0.0; nq];
        meter_acquire(&mut meter, nq);
        kron_apply_into(&f.trial_factors(None), v, &mut t, meter.as_deref_mut())?;
        match &self.grid {
            Some(grid) => weighted_stage(f, None, None, &t, Diagonal::Stored(grid), out, &mut meter)?,
            None => {
                let eval = |xi: &[f64]| mass_coefficient(&self.geom, &self.alpha, xi).expect("grid validated at setup");
                meter_flops(&mut meter, nq as u64 * per_point_cost(&self.geom));
                weighted_stage(f, None, None, &t, Diagonal::OnTheFly(&eval), out, &mut meter)?;
            }
        }
        meter_release(&mut meter, nq);
        Ok(())
    }
}

fn mass_grid(f: &WqFactors, geom: &GeometryMap, alpha: &ScalarField) -> Result<Vec<f64>> {
    let mut grid = Vec::with_capacity(f.num_points());
    f.fill_grid(|xi| {
        grid.push(mass_coefficient(geom, alpha, xi)?);
        Ok(())
    })?;
    Ok(grid)
}

/// Position of `(α, β)` in the packed upper triangle.
fn packed(d: usize, alpha: usize, beta: usize) -> usize {
    let (i, j) = if alpha <= beta { (alpha, beta) } else { (beta, alpha) };
    i * d - i * i.saturating_sub(1) / 2 + (j - i)
}

/// Matrix-free weighted-quadrature stiffness operator.
#[derive(Debug, Clone)]
pub struct StiffnessOperator {
    factors: WqFactors,
    geom: GeometryMap,
    k: TensorField,
    grids: Option<Vec<Vec<f64>>>,
    setup_flops: u64,
}

impl StiffnessOperator {
    /// Builds the factors and evaluates the `d(d+1)/2` distinct entries of
    /// `C = det J · J^{-1} K J^{-T}` on the tensor grid.
    pub fn setup(
        space: &TensorSpace,
        rules: &[WqRule1D],
        geom: &GeometryMap,
        k: &TensorField,
        mut meter: Option<&mut CostMeter>,
    ) -> Result<Self> {
        check_geometry(space, geom)?;
        let factors = WqFactors::new(space, rules)?;
        let grids = stiffness_grids(&factors, geom, k)?;
        let setup_flops = factors.num_points() as u64 * per_point_cost(geom);
        meter_flops(&mut meter, setup_flops);
        Ok(Self {
            factors,
            geom: geom.clone(),
            k: k.clone(),
            grids: Some(grids),
            setup_flops,
        })
    }

    pub fn factors(&self) -> &WqFactors {
        &self.factors
    }

    pub fn size(&self) -> usize {
        self.factors.num_dofs()
    }

    /// Stored grid of `C_{αβ}` (shared with `C_{βα}`).
    pub fn coefficient_grid(&self, alpha: usize, beta: usize) -> Option<&[f64]> {
        let d = self.factors.dim();
        self.grids.as_ref().map(|g| g[packed(d, alpha, beta)].as_slice())
    }

    pub fn coefficient_scalars(&self) -> usize {
        self.grids.as_ref().map_or(0, |g| g.iter().map(Vec::len).sum())
    }

    pub fn setup_flops(&self) -> u64 {
        self.setup_flops
    }

    pub fn is_on_the_fly(&self) -> bool {
        self.grids.is_none()
    }

    pub fn set_on_the_fly(&mut self, enabled: bool) {
        if enabled {
            self.grids = None;
        } else if self.grids.is_none() {
            self.grids = Some(stiffness_grids(&self.factors, &self.geom, &self.k).expect("grid validated at setup"));
        }
    }

    pub fn apply(&self, v: &[f64], meter: Option<&mut CostMeter>) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.size()];
        self.apply_into(v, &mut out, meter)?;
        Ok(out)
    }

    /// `out = Σ_β Σ_α W^(α,β) D^(α,β) B^(β) v`, β outer and α inner.
    pub fn apply_into(&self, v: &[f64], out: &mut [f64], mut meter: Option<&mut CostMeter>) -> Result<()> {
        let f = &self.factors;
        let d = f.dim();
        let n = f.num_dofs();
        check_len(n, v.len())?;
        check_len(n, out.len())?;
        let nq = f.num_points();
        out.fill(0.0);
        let mut t = vec![0.0; nq];
        let mut part = vec![0.0; n];
        meter_acquire(&mut meter, nq + n);
        for beta in 0..d {
            kron_apply_into(&f.trial_factors(Some(beta)), v, &mut t, meter.as_deref_mut())?;
            for alpha in 0..d {
                match &self.grids {
                    Some(grids) => {
                        let grid = &grids[packed(d, alpha, beta)];
                        weighted_stage(f, Some(alpha), Some(beta), &t, Diagonal::Stored(grid), &mut part, &mut meter)?;
                    }
                    None => {
                        let eval = |xi: &[f64]| {
                            stiffness_coefficient(&self.geom, &self.k, xi).expect("grid validated at setup")[(alpha, beta)]
                        };
                        meter_flops(&mut meter, nq as u64 * per_point_cost(&self.geom));
                        weighted_stage(f, Some(alpha), Some(beta), &t, Diagonal::OnTheFly(&eval), &mut part, &mut meter)?;
                    }
                }
                for (o, p) in out.iter_mut().zip(&part) {
                    *o += p;
                }
                meter_flops(&mut meter, n as u64);
            }
        }
        meter_release(&mut meter, nq + n);
        Ok(())
    }
}

fn stiffness_grids(f: &WqFactors, geom: &GeometryMap, k: &TensorField) -> Result<Vec<Vec<f64>>> {
    let d = f.dim();
    let mut grids = vec![Vec::with_capacity(f.num_points()); d * (d + 1) / 2];
    f.fill_grid(|xi| {
        let c = stiffness_coefficient(geom, k, xi)?;
        for a in 0..d {
            for b in a..d {
                grids[packed(d, a, b)].push(c[(a, b)]);
            }
        }
        Ok(())
    })?;
    Ok(grids)
}

/// `K̃ + M̃`, with the mass term omitted when `α ≡ 0`.
#[derive(Debug, Clone)]
pub struct SystemOperator {
    stiffness: StiffnessOperator,
    mass: Option<MassOperator>,
}

impl SystemOperator {
    pub fn new(stiffness: StiffnessOperator, mass: Option<MassOperator>) -> Result<Self> {
        if let Some(m) = &mass {
            check_len(stiffness.size(), m.size())?;
        }
        Ok(Self { stiffness, mass })
    }

    /// Sets up both operators; the mass term is skipped for a zero `α`.
    pub fn setup(
        space: &TensorSpace,
        rules: &[WqRule1D],
        geom: &GeometryMap,
        k: &TensorField,
        alpha: &ScalarField,
        mut meter: Option<&mut CostMeter>,
    ) -> Result<Self> {
        let stiffness = StiffnessOperator::setup(space, rules, geom, k, meter.as_deref_mut())?;
        let mass = if alpha.is_zero() {
            None
        } else {
            Some(MassOperator::setup(space, rules, geom, alpha, meter)?)
        };
        Self::new(stiffness, mass)
    }

    pub fn stiffness(&self) -> &StiffnessOperator {
        &self.stiffness
    }

    pub fn mass(&self) -> Option<&MassOperator> {
        self.mass.as_ref()
    }

    pub fn size(&self) -> usize {
        self.stiffness.size()
    }

    pub fn set_on_the_fly(&mut self, enabled: bool) {
        self.stiffness.set_on_the_fly(enabled);
        if let Some(m) = &mut self.mass {
            m.set_on_the_fly(enabled);
        }
    }

    pub fn coefficient_scalars(&self) -> usize {
        self.stiffness.coefficient_scalars() + self.mass.as_ref().map_or(0, |m| m.coefficient_scalars())
    }

    pub fn setup_flops(&self) -> u64 {
        self.stiffness.setup_flops() + self.mass.as_ref().map_or(0, |m| m.setup_flops())
    }

    pub fn apply(&self, v: &[f64], meter: Option<&mut CostMeter>) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.size()];
        self.apply_into(v, &mut out, meter)?;
        Ok(out)
    }

    pub fn apply_into(&self, v: &[f64], out: &mut [f64], mut meter: Option<&mut CostMeter>) -> Result<()> {
        self.stiffness.apply_into(v, out, meter.as_deref_mut())?;
        if let Some(m) = &self.mass {
            let mut extra = vec![0.0; out.len()];
            meter_acquire(&mut meter, extra.len());
            m.apply_into(v, &mut extra, meter.as_deref_mut())?;
            for (o, e) in out.iter_mut().zip(&extra) {
                *o += e;
            }
            meter_flops(&mut meter, out.len() as u64);
            meter_release(&mut meter, extra.len());
        }
        Ok(())
    }
}

/// Weighted-quadrature rules for every direction of `space`.
pub fn build_rules(space: &TensorSpace) -> Result<Vec<WqRule1D>> {
    space.knot_vectors().iter().map(WqRule1D::new).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spline::TensorSpace;

    fn cube(p: usize, n_el: usize, dim: usize) -> (TensorSpace, Vec<WqRule1D>, GeometryMap) {
        let space = TensorSpace::uniform(dim, p, n_el).unwrap();
        let rules = build_rules(&space).unwrap();
        (space, rules, GeometryMap::Identity { dim })
    }

    #[test]
    fn packed_indices() {
        let idx: Vec<usize> = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]
            .iter()
            .map(|&(a, b)| packed(3, a, b))
            .collect();
        assert_eq!(idx, vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(packed(3, 2, 1), 4);
        assert_eq!(packed(2, 1, 1), 2);
        assert_eq!(packed(1, 0, 0), 0);
    }

    #[test]
    fn identity_grids_are_trivial() {
        let (space, rules, geom) = cube(2, 4, 3);
        let m = MassOperator::setup(&space, &rules, &geom, &ScalarField::Constant(1.0), None).unwrap();
        assert!(m.coefficient_grid().unwrap().iter().all(|&c| c == 1.0));
        let k = StiffnessOperator::setup(&space, &rules, &geom, &TensorField::Identity, None).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                let expected = if a == b { 1.0 } else { 0.0 };
                assert!(k.coefficient_grid(a, b).unwrap().iter().all(|&c| c == expected));
            }
        }
        assert_eq!(k.coefficient_scalars(), 6 * m.coefficient_scalars());
    }

    #[test]
    fn zero_vector_maps_to_zero() {
        let (space, rules, geom) = cube(3, 4, 2);
        let k = StiffnessOperator::setup(&space, &rules, &geom, &TensorField::Identity, None).unwrap();
        assert!(k.apply(&vec![0.0; k.size()], None).unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn length_mismatch_rejected() {
        let (space, rules, geom) = cube(2, 4, 2);
        let m = MassOperator::setup(&space, &rules, &geom, &ScalarField::Constant(1.0), None).unwrap();
        assert!(matches!(m.apply(&[1.0; 3], None), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn one_dimensional_mass_matches_gram() {
        let (space, rules, geom) = cube(3, 6, 1);
        let m = MassOperator::setup(&space, &rules, &geom, &ScalarField::Constant(1.0), None).unwrap();
        let gram = crate::spline::gram_matrix(space.knot_vector(0), 0, 0);
        let n = m.size();
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            let col = m.apply(&e, None).unwrap();
            for i in 0..n {
                assert!((col[i] - gram[(i + 1, j + 1)]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn on_the_fly_matches_stored() {
        let space = TensorSpace::uniform(3, 2, 4).unwrap();
        let rules = build_rules(&space).unwrap();
        let geom = crate::geometry::quarter_ring_map();
        let mut op = SystemOperator::setup(&space, &rules, &geom, &TensorField::Identity, &ScalarField::Constant(2.0), None)
            .unwrap();
        let v: Vec<f64> = (0..op.size()).map(|i| ((i * 7 % 13) as f64).sin()).collect();
        let mut m1 = CostMeter::new();
        let stored = op.apply(&v, Some(&mut m1)).unwrap();
        op.set_on_the_fly(true);
        assert_eq!(op.coefficient_scalars(), 0);
        let mut m2 = CostMeter::new();
        let fly = op.apply(&v, Some(&mut m2)).unwrap();
        let scale = stored.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for (a, b) in stored.iter().zip(&fly) {
            assert!((a - b).abs() <= 1e-14 * scale);
        }
        assert!(m2.flops > m1.flops);
    }
}
