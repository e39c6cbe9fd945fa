//! Multivariate polynomials with exact arithmetic on coefficients.
//!
//! The boundary-value studies drive the solvers with cubic polynomial data
//! because centered second differences are *exact* on cubics: the discrete
//! operator applied to a sampled cubic equals the sampled continuous operator
//! at every node. Polynomials here carry exact derivatives, so right-hand
//! sides and third-derivative contractions introduce no sampling error.

use crate::error::{HomogError, Result};
use crate::matrix::{SymMat, MAX_DIM};

/// A polynomial in up to [`MAX_DIM`] variables, stored as a sum of monomials.
///
/// The term list is kept canonical: exponent vectors are unique and sorted,
/// and zero coefficients are dropped, so `PartialEq` is structural equality
/// of the underlying polynomials.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly {
    dim: usize,
    terms: Vec<(f64, [u8; MAX_DIM])>,
}

impl Poly {
    /// The zero polynomial.
    pub fn zero(dim: usize) -> Result<Poly> {
        if dim == 0 || dim > MAX_DIM {
            return Err(HomogError::DimensionMismatch(format!(
                "polynomial dimension must be between 1 and {MAX_DIM}, got {dim}"
            )));
        }
        Ok(Poly { dim, terms: Vec::new() })
    }

    /// The constant polynomial `c`.
    pub fn constant(dim: usize, c: f64) -> Result<Poly> {
        Poly::from_terms(dim, vec![(c, [0; MAX_DIM])])
    }

    /// A single monomial `coeff · x₁^e₁ ⋯ x_n^e_n`.
    pub fn monomial(dim: usize, coeff: f64, exps: &[u8]) -> Result<Poly> {
        if exps.len() != dim {
            return Err(HomogError::DimensionMismatch(format!(
                "expected {dim} exponents, got {}",
                exps.len()
            )));
        }
        let mut e = [0u8; MAX_DIM];
        e[..dim].copy_from_slice(exps);
        Poly::from_terms(dim, vec![(coeff, e)])
    }

    /// Build from raw terms, combining duplicates and dropping zeros.
    pub fn from_terms(dim: usize, terms: Vec<(f64, [u8; MAX_DIM])>) -> Result<Poly> {
        let mut p = Poly::zero(dim)?;
        for (c, e) in terms {
            if !c.is_finite() {
                return Err(HomogError::NonFiniteSample { node: 0, context: "polynomial coefficient".into() });
            }
            if e[dim..].iter().any(|&x| x != 0) {
                return Err(HomogError::DimensionMismatch(format!(
                    "monomial uses a variable beyond dimension {dim}"
                )));
            }
            p.terms.push((c, e));
        }
        p.normalize();
        Ok(p)
    }

    fn normalize(&mut self) {
        self.terms.sort_by(|a, b| a.1.cmp(&b.1));
        let mut out: Vec<(f64, [u8; MAX_DIM])> = Vec::with_capacity(self.terms.len());
        for &(c, e) in &self.terms {
            match out.last_mut() {
                Some(last) if last.1 == e => last.0 += c,
                _ => out.push((c, e)),
            }
        }
        out.retain(|&(c, _)| c != 0.0);
        self.terms = out;
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total degree (0 for the zero polynomial).
    pub fn degree(&self) -> usize {
        self.terms
            .iter()
            .map(|(_, e)| e.iter().map(|&x| x as usize).sum())
            .max()
            .unwrap_or(0)
    }

    /// The canonical term list (coefficient, exponents).
    pub fn terms(&self) -> &[(f64, [u8; MAX_DIM])] {
        &self.terms
    }

    /// Evaluate at a point (coordinates beyond `dim` are ignored).
    pub fn eval(&self, x: &[f64; MAX_DIM]) -> f64 {
        let mut acc = 0.0;
        for &(c, e) in &self.terms {
            let mut term = c;
            for d in 0..self.dim {
                term *= x[d].powi(e[d] as i32);
            }
            acc += term;
        }
        acc
    }

    /// Sum of two polynomials over the same variables.
    pub fn add(&self, other: &Poly) -> Result<Poly> {
        if self.dim != other.dim {
            return Err(HomogError::DimensionMismatch(format!(
                "cannot add polynomials in {} and {} variables",
                self.dim, other.dim
            )));
        }
        let mut terms = self.terms.clone();
        terms.extend_from_slice(&other.terms);
        Poly::from_terms(self.dim, terms)
    }

    /// The polynomial scaled by a constant.
    pub fn scaled(&self, s: f64) -> Poly {
        let mut p = self.clone();
        for t in p.terms.iter_mut() {
            t.0 *= s;
        }
        p.normalize();
        p
    }

    /// Product of two polynomials over the same variables.
    pub fn mul(&self, other: &Poly) -> Result<Poly> {
        if self.dim != other.dim {
            return Err(HomogError::DimensionMismatch(format!(
                "cannot multiply polynomials in {} and {} variables",
                self.dim, other.dim
            )));
        }
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for &(c1, e1) in &self.terms {
            for &(c2, e2) in &other.terms {
                let mut e = [0u8; MAX_DIM];
                for d in 0..MAX_DIM {
                    e[d] = e1[d] + e2[d];
                }
                terms.push((c1 * c2, e));
            }
        }
        Poly::from_terms(self.dim, terms)
    }

    /// Exact partial derivative along one axis.
    pub fn derivative(&self, axis: usize) -> Result<Poly> {
        if axis >= self.dim {
            return Err(HomogError::AxisOutOfRange { axis, dim: self.dim });
        }
        let mut terms = Vec::with_capacity(self.terms.len());
        for &(c, e) in &self.terms {
            if e[axis] == 0 {
                continue;
            }
            let mut d = e;
            d[axis] -= 1;
            terms.push((c * e[axis] as f64, d));
        }
        Poly::from_terms(self.dim, terms)
    }
}

/// Manufactured data for a Dirichlet problem whose exact solution is the
/// cubic monomial u = x_j x_k x_l.
#[derive(Debug, Clone)]
pub struct CubicData {
    /// The exact solution; also the boundary data.
    pub u: Poly,
    /// Matching source term f = −ā_pq ∂²_pq u (an affine polynomial).
    pub f: Poly,
    /// The defining index triple.
    pub indices: (usize, usize, usize),
}

/// Build the cubic monomial u = x_j x_k x_l together with the source term
/// −ā_pq ∂²_pq u for a constant coefficient matrix ā. Indices may repeat.
pub fn cubic_data(abar: &SymMat, j: usize, k: usize, l: usize) -> Result<CubicData> {
    let dim = abar.dim();
    for idx in [j, k, l] {
        if idx >= dim {
            return Err(HomogError::AxisOutOfRange { axis: idx, dim });
        }
    }
    let mut exps = [0u8; MAX_DIM];
    exps[j] += 1;
    exps[k] += 1;
    exps[l] += 1;
    let u = Poly::from_terms(dim, vec![(1.0, exps)])?;

    let mut f = Poly::zero(dim)?;
    for p in 0..dim {
        let dp = u.derivative(p)?;
        for q in 0..dim {
            let dpq = dp.derivative(q)?;
            f = f.add(&dpq.scaled(-abar.get(p, q)))?;
        }
    }
    Ok(CubicData { u, f, indices: (j, k, l) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::test_support::Lcg;

    fn random_point(rng: &mut Lcg) -> [f64; MAX_DIM] {
        [rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)]
    }

    #[test]
    fn evaluation_matches_a_hand_expanded_polynomial() {
        // p(x, y) = 3 + 2x − y² + 5xy²
        let p = Poly::from_terms(2, vec![
            (3.0, [0, 0, 0]),
            (2.0, [1, 0, 0]),
            (-1.0, [0, 2, 0]),
            (5.0, [1, 2, 0]),
        ])
        .unwrap();
        let mut rng = Lcg(7);
        for _ in 0..32 {
            let pt = random_point(&mut rng);
            let (x, y) = (pt[0], pt[1]);
            let expect = 3.0 + 2.0 * x - y * y + 5.0 * x * y * y;
            assert!((p.eval(&pt) - expect).abs() <= 1e-12 * expect.abs().max(1.0));
        }
        assert_eq!(p.degree(), 3);
    }

    #[test]
    fn terms_are_canonical_and_zeros_are_dropped() {
        let p = Poly::from_terms(1, vec![
            (1.0, [1, 0, 0]),
            (2.0, [1, 0, 0]),
            (5.0, [0, 0, 0]),
            (-5.0, [0, 0, 0]),
        ])
        .unwrap();
        assert_eq!(p.terms(), &[(3.0, [1, 0, 0])]);
        let q = Poly::monomial(1, 3.0, &[1]).unwrap();
        assert_eq!(p, q);
        assert!(Poly::zero(2).unwrap().is_zero());
    }

    #[test]
    fn derivative_reduces_monomials_exactly() {
        // d/dx (x³y) = 3x²y; d/dy (x³y) = x³; d²/dxdy matches both orders.
        let p = Poly::monomial(2, 1.0, &[3, 1]).unwrap();
        let dx = p.derivative(0).unwrap();
        assert_eq!(dx, Poly::monomial(2, 3.0, &[2, 1]).unwrap());
        let dy = p.derivative(1).unwrap();
        assert_eq!(dy, Poly::monomial(2, 1.0, &[3, 0]).unwrap());
        let dxy = dx.derivative(1).unwrap();
        let dyx = dy.derivative(0).unwrap();
        assert_eq!(dxy, dyx);
        assert!(Poly::constant(2, 4.0).unwrap().derivative(0).unwrap().is_zero());
        assert!(p.derivative(2).is_err());
    }

    #[test]
    fn product_rule_holds_against_numeric_differentiation() {
        let p = Poly::from_terms(2, vec![(1.0, [2, 0, 0]), (-1.0, [0, 1, 0])]).unwrap();
        let q = Poly::from_terms(2, vec![(2.0, [1, 1, 0]), (3.0, [0, 0, 0])]).unwrap();
        let prod = p.mul(&q).unwrap();
        let expect = p.derivative(0).unwrap().mul(&q).unwrap()
            .add(&p.mul(&q.derivative(0).unwrap()).unwrap())
            .unwrap();
        assert_eq!(prod.derivative(0).unwrap(), expect);

        // Spot-check the derivative numerically at random points.
        let d = prod.derivative(1).unwrap();
        let mut rng = Lcg(11);
        let h = 1e-6;
        for _ in 0..16 {
            let pt = random_point(&mut rng);
            let mut hi = pt;
            hi[1] += h;
            let mut lo = pt;
            lo[1] -= h;
            let numeric = (prod.eval(&hi) - prod.eval(&lo)) / (2.0 * h);
            assert!((d.eval(&pt) - numeric).abs() <= 1e-5);
        }
    }

    #[test]
    fn cubic_data_solves_its_own_equation_identically() {
        // For every index triple, ā_pq ∂²_pq u + f ≡ 0 as polynomials.
        let abar = SymMat::from_rows(3, &[
            2.0, 0.3, -0.1, //
            0.3, 1.5, 0.2, //
            -0.1, 0.2, 1.8,
        ])
        .unwrap();
        for j in 0..3 {
            for k in 0..3 {
                for l in 0..3 {
                    let data = cubic_data(&abar, j, k, l).unwrap();
                    let mut residual = data.f.clone();
                    for p in 0..3 {
                        for q in 0..3 {
                            let dpq = data.u.derivative(p).unwrap().derivative(q).unwrap();
                            residual = residual.add(&dpq.scaled(abar.get(p, q))).unwrap();
                        }
                    }
                    assert!(
                        residual.is_zero(),
                        "({j},{k},{l}): residual {:?}",
                        residual.terms()
                    );
                    assert_eq!(data.u.degree(), 3);
                    assert!(data.f.degree() <= 1);
                }
            }
        }
    }

    #[test]
    fn cubic_data_matches_hand_computed_sources() {
        let abar = SymMat::from_rows(2, &[2.0, 0.5, 0.5, 3.0]).unwrap();
        // u = x₁²x₂: f = −(ā₁₁·2x₂ + 2ā₁₂·2x₁) = −4x₂ − 2x₁.
        let data = cubic_data(&abar, 0, 0, 1).unwrap();
        let expect = Poly::from_terms(2, vec![(-4.0, [0, 1, 0]), (-2.0, [1, 0, 0])]).unwrap();
        assert_eq!(data.f, expect);

        // u = x₁x₂² in the same metric: f = −(ā₂₂·2x₁ + 2ā₁₂·2x₂).
        let data = cubic_data(&abar, 0, 1, 1).unwrap();
        let expect = Poly::from_terms(2, vec![(-6.0, [1, 0, 0]), (-2.0, [0, 1, 0])]).unwrap();
        assert_eq!(data.f, expect);

        assert!(cubic_data(&abar, 0, 0, 2).is_err());
    }
}
