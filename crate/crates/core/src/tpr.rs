//! Tensor product representation algebra.
//!
//! A structure with constituents `(fᵢ, rᵢ)` is embedded as `T = Σ fᵢ rᵢᵀ`.
//! When the roles are linearly independent, the left inverse `U` of the role
//! matrix supplies unbinding vectors `uⱼ` (rows of `U`) with `rᵢᵀuⱼ = δᵢⱼ`,
//! so `T·uⱼ = fⱼ` exactly. Relational tuples use an order-3 variant in which
//! each argument is bound to the relation and to a positional role.

use thiserror::Error;

use crate::tensor::{Tensor, TensorError};

/// Ridge added to the Gram matrix when forming a (pseudo-)inverse.
pub const PINV_RIDGE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TprError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("{0} fillers but {1} roles")]
    Count(usize, usize),
    #[error("unbinding vector {index} does not recover its filler: residual {residual:e}")]
    Consistency { index: usize, residual: f64 },
    #[error("unbinding vectors are linearly dependent")]
    Dependent,
}

pub type Result<T> = std::result::Result<T, TprError>;

/// Filler and role dictionaries with the unbinding matrix of the roles.
#[derive(Clone, Debug, PartialEq)]
pub struct TprSpace {
    /// `d_F × n_F`, one filler per column.
    pub fillers: Tensor,
    /// `d_R × n_R`, one role per column.
    pub roles: Tensor,
    /// `n_R × d_R`; row `j` is the unbinding vector for role `j`.
    pub unbinding: Tensor,
}

impl TprSpace {
    pub fn new(fillers: Tensor, roles: Tensor) -> Result<Self> {
        fillers.as_matrix("TprSpace fillers")?;
        let unbinding = dual_basis(&roles)?;
        Ok(Self {
            fillers,
            roles,
            unbinding,
        })
    }

    pub fn filler_dim(&self) -> usize {
        self.fillers.shape()[0]
    }

    pub fn filler_count(&self) -> usize {
        self.fillers.shape()[1]
    }

    pub fn role_dim(&self) -> usize {
        self.roles.shape()[0]
    }

    pub fn role_count(&self) -> usize {
        self.roles.shape()[1]
    }

    pub fn filler(&self, i: usize) -> Result<Tensor> {
        Ok(self.fillers.column(i)?)
    }

    pub fn role(&self, j: usize) -> Result<Tensor> {
        Ok(self.roles.column(j)?)
    }

    pub fn unbinding_vector(&self, j: usize) -> Result<Tensor> {
        Ok(Tensor::vector(self.unbinding.row(j)?.to_vec()))
    }

    /// Binds filler `fᵢ` to role `rⱼ` for each `(i, j)` pair and sums.
    pub fn bind(&self, pairs: &[(usize, usize)]) -> Result<Tensor> {
        let fillers = pairs.iter().map(|&(f, _)| self.filler(f)).collect::<Result<Vec<_>>>()?;
        let roles = pairs.iter().map(|&(_, r)| self.role(r)).collect::<Result<Vec<_>>>()?;
        bind2_shaped(&fillers, &roles, self.filler_dim(), self.role_dim())
    }
}

/// `T = Σᵢ fᵢ ⊗ rᵢ`. Fails on empty input since the shape is unknown; use
/// [`bind2_shaped`] to get a zero tensor from empty lists.
pub fn bind2(fillers: &[Tensor], roles: &[Tensor]) -> Result<Tensor> {
    let (df, dr) = match (fillers.first(), roles.first()) {
        (Some(f), Some(r)) => (f.as_vector("bind2")?, r.as_vector("bind2")?),
        _ => return Err(TprError::Count(fillers.len(), roles.len())),
    };
    bind2_shaped(fillers, roles, df, dr)
}

pub fn bind2_shaped(fillers: &[Tensor], roles: &[Tensor], d_f: usize, d_r: usize) -> Result<Tensor> {
    if fillers.len() != roles.len() {
        return Err(TprError::Count(fillers.len(), roles.len()));
    }
    let mut t = Tensor::zeros(&[d_f, d_r]);
    for (f, r) in fillers.iter().zip(roles) {
        if f.as_vector("bind2")? != d_f || r.as_vector("bind2")? != d_r {
            return Err(TensorError::Dimension {
                op: "bind2",
                lhs: vec![d_f, d_r],
                rhs: vec![f.len(), r.len()],
            }
            .into());
        }
        t.add_assign(&f.outer(r)?)?;
    }
    Ok(t)
}

/// `T·u`: recovers the filler bound to the role dual to `u`.
pub fn unbind2(t: &Tensor, u: &Tensor) -> Result<Tensor> {
    t.as_matrix("unbind2")?;
    Ok(t.contract_last(u)?)
}

/// Left inverse of `R` (`d_R × n_R`), shaped `n_R × d_R`.
///
/// Uses ridge-regularised normal equations on whichever Gram matrix is
/// smaller: `(RᵀR + λI)⁻¹Rᵀ` when `n_R ≤ d_R`, otherwise the algebraically
/// identical `Rᵀ(RRᵀ + λI)⁻¹`. Exact for full column rank, the minimum-norm
/// pseudo-inverse in the overcomplete case.
pub fn dual_basis(roles: &Tensor) -> Result<Tensor> {
    let (d, n) = roles.as_matrix("dual_basis")?;
    if d == 0 || n == 0 {
        return Err(TensorError::Rank {
            op: "dual_basis",
            expected: 2,
            shape: roles.shape().to_vec(),
        }
        .into());
    }
    let rt = roles.transpose()?;
    if n <= d {
        let mut gram = rt.matmul(roles)?;
        add_ridge(&mut gram, PINV_RIDGE);
        Ok(solve_spd(&gram, &rt)?)
    } else {
        let mut gram = roles.matmul(&rt)?;
        add_ridge(&mut gram, PINV_RIDGE);
        // U = Rᵀ G⁻¹  ⇔  Uᵀ = G⁻¹ R
        let ut = solve_spd(&gram, roles)?;
        Ok(ut.transpose()?)
    }
}

fn add_ridge(gram: &mut Tensor, ridge: f64) {
    let n = gram.shape()[0];
    let data = gram.data_mut();
    for i in 0..n {
        data[i * n + i] += ridge;
    }
}

/// Solves `A X = B` for symmetric positive-definite `A` by Cholesky.
pub(crate) fn solve_spd(a: &Tensor, b: &Tensor) -> std::result::Result<Tensor, TensorError> {
    let (n, n2) = a.as_matrix("solve_spd")?;
    let (bn, cols) = b.as_matrix("solve_spd")?;
    if n != n2 || bn != n {
        return Err(TensorError::Dimension {
            op: "solve_spd",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let ad = a.data();
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = ad[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 0.0 {
                    return Err(TensorError::Parameter("matrix is not positive definite".into()));
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    let mut x = b.data().to_vec();
    for c in 0..cols {
        // forward: L y = b
        for i in 0..n {
            let mut s = x[i * cols + c];
            for k in 0..i {
                s -= l[i * n + k] * x[k * cols + c];
            }
            x[i * cols + c] = s / l[i * n + i];
        }
        // backward: Lᵀ x = y
        for i in (0..n).rev() {
            let mut s = x[i * cols + c];
            for k in i + 1..n {
                s -= l[k * n + i] * x[k * cols + c];
            }
            x[i * cols + c] = s / l[i * n + i];
        }
    }
    Tensor::new(vec![n, cols], x)
}

/// Vector dimensions and positional roles for order-3 tuple bindings.
#[derive(Clone, Debug, PartialEq)]
pub struct TupleTprConfig {
    pub d_arg: usize,
    pub d_rel: usize,
    pub d_pos: usize,
    /// `d_Pos × positions`, column `i` is positional role `pᵢ`.
    pub positions: Tensor,
    /// Unbinding vectors `p′ᵢ`, duals of the positional roles.
    pub position_unbinding: Vec<Tensor>,
}

impl TupleTprConfig {
    /// Positional roles given explicitly; unbinding vectors are their duals.
    pub fn new(d_arg: usize, d_rel: usize, positions: Tensor) -> Result<Self> {
        let (d_pos, count) = positions.as_matrix("TupleTprConfig")?;
        let dual = dual_basis(&positions)?;
        let position_unbinding = (0..count)
            .map(|i| Ok(Tensor::vector(dual.row(i)?.to_vec())))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            d_arg,
            d_rel,
            d_pos,
            positions,
            position_unbinding,
        })
    }

    /// Standard basis vectors `e₁, e₂, …` as positional roles.
    pub fn orthonormal(d_arg: usize, d_rel: usize, d_pos: usize, count: usize) -> Result<Self> {
        let positions = Tensor::from_fn(&[d_pos, count], |k| {
            let (i, j) = (k / count, k % count);
            if i == j {
                1.0
            } else {
                0.0
            }
        });
        Self::new(d_arg, d_rel, positions)
    }

    pub fn position_count(&self) -> usize {
        self.positions.shape()[1]
    }

    pub fn position(&self, i: usize) -> Result<Tensor> {
        Ok(self.positions.column(i)?)
    }
}

/// `H = Σᵢ aᵢ ⊗ r_rel ⊗ pᵢ`, shaped `d_Arg × d_Rel × d_Pos`.
pub fn bind_tuple(args: &[Tensor], r_rel: &Tensor, cfg: &TupleTprConfig) -> Result<Tensor> {
    if args.len() > cfg.position_count() {
        return Err(TprError::Count(args.len(), cfg.position_count()));
    }
    if r_rel.as_vector("bind3")? != cfg.d_rel {
        return Err(TensorError::Dimension {
            op: "bind3",
            lhs: vec![cfg.d_rel],
            rhs: r_rel.shape().to_vec(),
        }
        .into());
    }
    let (da, dr, dp) = (cfg.d_arg, cfg.d_rel, cfg.d_pos);
    let mut h = Tensor::zeros(&[da, dr, dp]);
    for (i, a) in args.iter().enumerate() {
        if a.as_vector("bind3")? != da {
            return Err(TensorError::Dimension {
                op: "bind3",
                lhs: vec![da],
                rhs: a.shape().to_vec(),
            }
            .into());
        }
        let ar = a.outer(r_rel)?.flatten();
        let p = cfg.position(i)?;
        h.add_assign(&ar.outer(&p)?.reshape(&[da, dr, dp])?)?;
    }
    Ok(h)
}

/// Binary tuple binding `a₁⊗r_rel⊗p₁ + a₂⊗r_rel⊗p₂`.
pub fn bind3(a1: &Tensor, a2: &Tensor, r_rel: &Tensor, cfg: &TupleTprConfig) -> Result<Tensor> {
    bind_tuple(&[a1.clone(), a2.clone()], r_rel, cfg)
}

/// Two-step unbinding `(H·p′ᵢ)·r′_rel`.
pub fn unbind3(h: &Tensor, p_unbind: &Tensor, r_rel_unbind: &Tensor) -> Result<Tensor> {
    if h.rank() != 3 {
        return Err(TensorError::Rank {
            op: "unbind3",
            expected: 3,
            shape: h.shape().to_vec(),
        }
        .into());
    }
    let b = h.contract_last(p_unbind)?;
    Ok(b.contract_last(r_rel_unbind)?)
}

/// Result of splitting a tensor into a pure TPR part and a residual.
#[derive(Clone, Debug)]
pub struct Decomposition {
    /// `Σᵢ fᵢ rᵢᵀ` over the given unbinding vectors' duals.
    pub tpr: Tensor,
    /// `H − tpr`; annihilates every given unbinding vector.
    pub residual: Tensor,
    /// Roles dual to the given unbinding vectors, one per unbinding vector.
    pub roles: Vec<Tensor>,
}

/// Default tolerance for `H·uᵢ ≈ fᵢ` in [`decompose_residual`], relative to
/// `max(1, ‖fᵢ‖)`.
pub const CONSISTENCY_TOL: f64 = 1e-6;

/// Splits `H` (`d_F × d_R`) into `H_tpr + Z` where `H_tpr = Σ fᵢ rᵢᵀ` and
/// `Z·uᵢ = 0` for every unbinding vector `uᵢ`.
///
/// The roles are the first rows of the inverse of a basis of `ℝ^{d_R}` that
/// starts with the unbinding vectors, which is `(UᵀU)⁻¹Uᵀ`. The fillers used
/// in `H_tpr` are `H·uᵢ`, which the consistency check guarantees agree with the
/// supplied `fᵢ`.
pub fn decompose_residual(h: &Tensor, unbind_vectors: &[Tensor], fillers: &[Tensor]) -> Result<Decomposition> {
    decompose_residual_with_tol(h, unbind_vectors, fillers, CONSISTENCY_TOL)
}

pub fn decompose_residual_with_tol(
    h: &Tensor,
    unbind_vectors: &[Tensor],
    fillers: &[Tensor],
    tol: f64,
) -> Result<Decomposition> {
    let (d_f, d_r) = h.as_matrix("decompose_residual")?;
    if unbind_vectors.len() != fillers.len() {
        return Err(TprError::Count(fillers.len(), unbind_vectors.len()));
    }
    let k = unbind_vectors.len();
    if k > d_r {
        return Err(TprError::Dependent);
    }
    let mut recovered = Vec::with_capacity(k);
    for (i, (u, f)) in unbind_vectors.iter().zip(fillers).enumerate() {
        let hu = unbind2(h, u)?;
        let residual = hu.max_abs_diff(f);
        if hu.len() != f.len() || residual > tol * f.frobenius_norm().max(1.0) {
            return Err(TprError::Consistency { index: i, residual });
        }
        recovered.push(hu);
    }

    // independence check: each u must keep a component outside the span of the previous ones
    let mut ortho: Vec<Vec<f64>> = Vec::with_capacity(d_r);
    for u in unbind_vectors {
        if u.as_vector("decompose_residual")? != d_r {
            return Err(TensorError::Dimension {
                op: "decompose_residual",
                lhs: vec![d_r],
                rhs: u.shape().to_vec(),
            }
            .into());
        }
        let scale = u.frobenius_norm().max(f64::MIN_POSITIVE);
        match gram_schmidt(u.data(), &ortho) {
            Some(q) if norm(&q) > 1e-10 * scale => ortho.push(normalize(q)),
            _ => return Err(TprError::Dependent),
        }
    }
    // Completing {u} with an orthonormal basis of its orthogonal complement
    // gives an invertible basis whose inverse starts with the rows
    // (UᵀU)⁻¹Uᵀ. Gram–Schmidt above has established full column rank, so the
    // solve needs no ridge.
    let roles = if k == 0 {
        Vec::new()
    } else {
        let u = Tensor::from_columns(unbind_vectors)?;
        let ut = u.transpose()?;
        let inv = solve_spd(&ut.matmul(&u)?, &ut)?;
        (0..k)
            .map(|i| Ok(Tensor::vector(inv.row(i)?.to_vec())))
            .collect::<Result<_>>()?
    };
    let tpr = bind2_shaped(&recovered, &roles, d_f, d_r)?;
    let residual = h.sub(&tpr)?;
    Ok(Decomposition { tpr, residual, roles })
}

fn gram_schmidt(v: &[f64], basis: &[Vec<f64>]) -> Option<Vec<f64>> {
    let mut w = v.to_vec();
    // two passes for numerical orthogonality
    for _ in 0..2 {
        for q in basis {
            let c: f64 = w.iter().zip(q).map(|(a, b)| a * b).sum();
            for (x, qi) in w.iter_mut().zip(q) {
                *x -= c * qi;
            }
        }
    }
    if w.iter().all(|x| x.is_finite()) {
        Some(w)
    } else {
        None
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn normalize(v: Vec<f64>) -> Vec<f64> {
    let n = norm(&v);
    v.into_iter().map(|x| x / n).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, prop_assert, proptest};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(x: &[f64]) -> Tensor {
        Tensor::vector(x.to_vec())
    }

    fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn bind2_examples() {
        let e1 = v(&[1.0, 0.0]);
        let e2 = v(&[0.0, 1.0]);
        let t = bind2(&[e1.clone(), e2.clone()], &[e1.clone(), e2.clone()]).unwrap();
        assert_eq!(t, Tensor::identity(2));
        let t = bind2(&[v(&[2.0, 0.0]), v(&[0.0, 3.0])], &[v(&[1.0, 0.0]), v(&[1.0, 1.0])]).unwrap();
        assert_eq!(t.data(), &[2.0, 0.0, 3.0, 3.0]);
        assert_eq!(bind2_shaped(&[], &[], 3, 2).unwrap(), Tensor::zeros(&[3, 2]));
        assert!(matches!(bind2(&[e1.clone()], &[]), Err(TprError::Count(1, 0))));
        assert!(bind2(&[e1], &[v(&[1.0, 2.0, 3.0]), v(&[1.0, 0.0, 0.0])]).is_err());
    }

    #[test]
    fn unbind2_examples() {
        let id = Tensor::identity(2);
        assert_eq!(unbind2(&id, &v(&[1.0, 0.0])).unwrap().data(), &[1.0, 0.0]);
        let t = Tensor::matrix(&[vec![2.0, 0.0], vec![3.0, 3.0]]).unwrap();
        assert_eq!(unbind2(&t, &v(&[1.0, -1.0])).unwrap().data(), &[2.0, 0.0]);
        assert_eq!(unbind2(&t, &v(&[0.0, 0.0])).unwrap().data(), &[0.0, 0.0]);
        assert!(unbind2(&t, &v(&[1.0])).is_err());
    }

    #[test]
    fn dual_basis_examples() {
        let u = dual_basis(&Tensor::identity(3)).unwrap();
        assert!(u.max_abs_diff(&Tensor::identity(3)) < 1e-9);
        let r = Tensor::matrix(&[vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap();
        let u = dual_basis(&r).unwrap();
        let expected = Tensor::matrix(&[vec![1.0, -1.0], vec![0.0, 1.0]]).unwrap();
        assert!(u.max_abs_diff(&expected) < 1e-9);
    }

    #[test]
    fn overcomplete_frame_gives_two_thirds_diagonal() {
        // three unit roles at 0°, 120°, 240°: RRᵀ = 3/2·I so R⁺ = 2/3·Rᵀ
        let ang = [0.0f64, 120.0, 240.0].map(f64::to_radians);
        let r = Tensor::matrix(&[ang.map(f64::cos).to_vec(), ang.map(f64::sin).to_vec()]).unwrap();
        let u = dual_basis(&r).unwrap();
        let ur = u.matmul(&r).unwrap();
        for i in 0..3 {
            assert!((ur.at(&[i, i]) - 2.0 / 3.0).abs() < 1e-9);
        }
        let expected = r.transpose().unwrap().scale(2.0 / 3.0);
        assert!(u.max_abs_diff(&expected) < 1e-9);
    }

    #[test]
    fn bind3_basis_construction() {
        let cfg = TupleTprConfig::orthonormal(2, 1, 2, 2).unwrap();
        let h = bind3(&v(&[1.0, 0.0]), &v(&[0.0, 1.0]), &v(&[1.0]), &cfg).unwrap();
        assert_eq!(h.shape(), &[2, 1, 2]);
        for i in 0..2 {
            for k in 0..2 {
                let expected = if (i, k) == (0, 0) || (i, k) == (1, 1) { 1.0 } else { 0.0 };
                assert_eq!(h.at(&[i, 0, k]), expected);
            }
        }
        // ridge-regularised duals are exact to ~1e-10
        let a = unbind3(&h, &cfg.position_unbinding[0], &v(&[1.0])).unwrap();
        assert!(a.max_abs_diff(&v(&[1.0, 0.0])) < 1e-9);
        let zero = bind3(&v(&[0.0, 0.0]), &v(&[0.0, 0.0]), &v(&[1.0]), &cfg).unwrap();
        assert!(zero.data().iter().all(|&x| x == 0.0));
        assert!(unbind3(&zero, &cfg.position_unbinding[1], &v(&[1.0]))
            .unwrap()
            .data()
            .iter()
            .all(|&x| x == 0.0));
    }

    #[test]
    fn bind3_round_trip_with_unit_relation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = TupleTprConfig::orthonormal(6, 4, 5, 2).unwrap();
        let a1 = random(&mut rng, &[6]);
        let a2 = random(&mut rng, &[6]);
        let r = random(&mut rng, &[4]);
        let r = r.scale(1.0 / r.frobenius_norm());
        let h = bind3(&a1, &a2, &r, &cfg).unwrap();
        let b1 = unbind3(&h, &cfg.position_unbinding[0], &r).unwrap();
        let b2 = unbind3(&h, &cfg.position_unbinding[1], &r).unwrap();
        assert!(b1.max_abs_diff(&a1) < 1e-10);
        assert!(b2.max_abs_diff(&a2) < 1e-10);
    }

    /// Direct index-loop definition of the tuple binding.
    fn bind3_loops(a1: &Tensor, a2: &Tensor, r: &Tensor, p1: &Tensor, p2: &Tensor) -> Vec<f64> {
        let (da, dr, dp) = (a1.len(), r.len(), p1.len());
        let mut out = vec![0.0; da * dr * dp];
        for i in 0..da {
            for j in 0..dr {
                for k in 0..dp {
                    out[(i * dr + j) * dp + k] =
                        a1.data()[i] * r.data()[j] * p1.data()[k] + a2.data()[i] * r.data()[j] * p2.data()[k];
                }
            }
        }
        out
    }

    fn unbind3_loops(h: &Tensor, p: &Tensor, r: &Tensor) -> Vec<f64> {
        let (da, dr, dp) = (h.shape()[0], h.shape()[1], h.shape()[2]);
        (0..da)
            .map(|i| {
                let mut s = 0.0;
                for j in 0..dr {
                    let mut b = 0.0;
                    for k in 0..dp {
                        b += h.at(&[i, j, k]) * p.data()[k];
                    }
                    s += b * r.data()[j];
                }
                s
            })
            .collect()
    }

    proptest! {
        #[test]
        fn bind3_and_unbind3_match_index_loops(
            da in 1usize..=4, dr in 1usize..=4, dp in 2usize..=4, seed in any::<u64>()
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let positions = random(&mut rng, &[dp, 2]);
            let cfg = TupleTprConfig::new(da, dr, positions).unwrap();
            let a1 = random(&mut rng, &[da]);
            let a2 = random(&mut rng, &[da]);
            let r = random(&mut rng, &[dr]);
            let h = bind3(&a1, &a2, &r, &cfg).unwrap();
            let brute = bind3_loops(&a1, &a2, &r, &cfg.position(0).unwrap(), &cfg.position(1).unwrap());
            for (x, y) in h.data().iter().zip(&brute) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            let p = random(&mut rng, &[dp]);
            let ru = random(&mut rng, &[dr]);
            let got = unbind3(&h, &p, &ru).unwrap();
            for (x, y) in got.data().iter().zip(&unbind3_loops(&h, &p, &ru)) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn exact_pure_tpr_has_no_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let roles = random(&mut rng, &[5, 3]);
        let u = dual_basis(&roles).unwrap();
        let us: Vec<Tensor> = (0..3).map(|i| Tensor::vector(u.row(i).unwrap().to_vec())).collect();
        let fs: Vec<Tensor> = (0..3).map(|_| random(&mut rng, &[4])).collect();
        let rs: Vec<Tensor> = (0..3).map(|j| roles.column(j).unwrap()).collect();
        let h = bind2(&fs, &rs).unwrap();
        let d = decompose_residual(&h, &us, &fs).unwrap();
        for ui in &us {
            assert!(d.residual.contract_last(ui).unwrap().frobenius_norm() < 1e-8);
        }
    }

    #[test]
    fn residual_recovers_orthogonal_component() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let d_r = 4;
        // unbinding vectors e₁, e₂; w ⟂ both
        let us = vec![v(&[1.0, 0.0, 0.0, 0.0]), v(&[0.0, 1.0, 0.0, 0.0])];
        let roles = us.clone();
        let fs: Vec<Tensor> = (0..2).map(|_| random(&mut rng, &[3])).collect();
        let pure = bind2(&fs, &roles).unwrap();
        let vv = random(&mut rng, &[3]);
        let w = v(&[0.0, 0.0, 0.6, 0.8]);
        let extra = vv.outer(&w).unwrap();
        let h = pure.add(&extra).unwrap();
        let d = decompose_residual(&h, &us, &fs).unwrap();
        assert_eq!(d.residual.shape(), &[3, d_r]);
        assert!(d.residual.max_abs_diff(&extra) < 1e-9);
    }

    #[test]
    fn inconsistent_unbinding_is_rejected() {
        let h = Tensor::identity(2);
        let us = vec![v(&[1.0, 0.0])];
        let fs = vec![v(&[2.0, 0.0])];
        assert!(matches!(
            decompose_residual(&h, &us, &fs),
            Err(TprError::Consistency { index: 0, .. })
        ));
    }

    #[test]
    fn dependent_unbinding_vectors_are_rejected() {
        let h = Tensor::identity(2);
        let us = vec![v(&[1.0, 0.0]), v(&[2.0, 0.0])];
        let fs = vec![v(&[1.0, 0.0]), v(&[2.0, 0.0])];
        assert_eq!(decompose_residual(&h, &us, &fs).unwrap_err(), TprError::Dependent);
    }
}
