//! Bounded radial kernels, Gram matrices and finite kernel expansions
//! `f = Σ_i α_i k(·, x_i)` living in the kernel's RKHS.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    /// `exp(-‖x - x'‖² / γ²)`
    GaussianRbf,
    /// `exp(-‖x - x'‖ / γ)`
    LaplacianRbf,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawKernel", into = "RawKernel")]
pub struct Kernel {
    kind: KernelKind,
    gamma: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawKernel {
    kind: KernelKind,
    gamma: f64,
}

impl TryFrom<RawKernel> for Kernel {
    type Error = Error;
    fn try_from(raw: RawKernel) -> Result<Self> {
        Kernel::new(raw.kind, raw.gamma)
    }
}

impl From<Kernel> for RawKernel {
    fn from(k: Kernel) -> Self {
        RawKernel {
            kind: k.kind,
            gamma: k.gamma,
        }
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

impl Kernel {
    pub fn new(kind: KernelKind, gamma: f64) -> Result<Self> {
        if gamma > 0.0 && gamma.is_finite() {
            Ok(Self { kind, gamma })
        } else {
            Err(Error::Config(format!(
                "kernel bandwidth must be positive, got {gamma}"
            )))
        }
    }

    pub fn gaussian(gamma: f64) -> Result<Self> {
        Self::new(KernelKind::GaussianRbf, gamma)
    }

    pub fn laplacian(gamma: f64) -> Result<Self> {
        Self::new(KernelKind::LaplacianRbf, gamma)
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn eval(&self, x: &[f64], z: &[f64]) -> Result<f64> {
        if x.len() != z.len() {
            return Err(Error::Dimension {
                index: 1,
                expected: x.len(),
                found: z.len(),
            });
        }
        Ok(self.eval_unchecked(x, z))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, x: &[f64], z: &[f64]) -> f64 {
        let d2 = squared_distance(x, z);
        match self.kind {
            KernelKind::GaussianRbf => (-d2 / (self.gamma * self.gamma)).exp(),
            KernelKind::LaplacianRbf => (-d2.sqrt() / self.gamma).exp(),
        }
    }

    /// `sup_x √k(x, x)`. Both radial kernels have unit diagonal, so this is 1 on
    /// every region as well as on the whole space.
    pub fn sup_norm_bound(&self) -> f64 {
        1.0
    }

    pub fn gram_matrix<'a, I>(&self, points: I) -> Result<GramMatrix>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let points: Vec<&[f64]> = points.into_iter().collect();
        let n = points.len();
        let dim = points.first().map_or(0, |p| p.len());
        if let Some((index, p)) = points.iter().enumerate().find(|(_, p)| p.len() != dim) {
            return Err(Error::Dimension {
                index,
                expected: dim,
                found: p.len(),
            });
        }
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = self.eval_unchecked(points[i], points[i]);
            for j in 0..i {
                let v = self.eval_unchecked(points[i], points[j]);
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        Ok(GramMatrix { n, data })
    }
}

/// Dense symmetric kernel matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix {
    n: usize,
    data: Vec<f64>,
}

impl GramMatrix {
    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// `αᵀ G α`.
    pub fn quadratic_form(&self, alpha: &[f64]) -> f64 {
        (0..self.n)
            .map(|i| {
                alpha[i]
                    * self
                        .row(i)
                        .iter()
                        .zip(alpha)
                        .map(|(g, a)| g * a)
                        .sum::<f64>()
            })
            .sum()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// A function `Σ_i α_i k(·, x_i)` in the RKHS of `kernel`. The empty expansion is
/// the zero function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawExpansion", into = "RawExpansion")]
pub struct KernelExpansion {
    kernel: Kernel,
    dim: usize,
    points: Vec<f64>,
    coefficients: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExpansion {
    kernel: Kernel,
    dim: usize,
    points: Vec<Vec<f64>>,
    coefficients: Vec<f64>,
}

impl TryFrom<RawExpansion> for KernelExpansion {
    type Error = Error;
    fn try_from(raw: RawExpansion) -> Result<Self> {
        KernelExpansion::new(raw.kernel, raw.dim, &raw.points, raw.coefficients)
    }
}

impl From<KernelExpansion> for RawExpansion {
    fn from(f: KernelExpansion) -> Self {
        let points = f.points().map(<[f64]>::to_vec).collect();
        RawExpansion {
            kernel: f.kernel,
            dim: f.dim,
            points,
            coefficients: f.coefficients,
        }
    }
}

impl KernelExpansion {
    pub fn zero(kernel: Kernel, dim: usize) -> Self {
        Self {
            kernel,
            dim,
            points: Vec::new(),
            coefficients: Vec::new(),
        }
    }

    pub fn new(
        kernel: Kernel,
        dim: usize,
        points: &[Vec<f64>],
        coefficients: Vec<f64>,
    ) -> Result<Self> {
        if points.len() != coefficients.len() {
            return Err(Error::Domain(format!(
                "{} expansion points but {} coefficients",
                points.len(),
                coefficients.len()
            )));
        }
        let mut flat = Vec::with_capacity(points.len() * dim);
        for (index, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(Error::Dimension {
                    index,
                    expected: dim,
                    found: p.len(),
                });
            }
            flat.extend_from_slice(p);
        }
        Ok(Self {
            kernel,
            dim,
            points: flat,
            coefficients,
        })
    }

    /// Builds an expansion from a flat row-major point buffer.
    pub(crate) fn from_flat(
        kernel: Kernel,
        dim: usize,
        points: Vec<f64>,
        coefficients: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(points.len(), coefficients.len() * dim);
        Self {
            kernel,
            dim,
            points,
            coefficients,
        }
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        let dim = self.dim.max(1);
        self.points.chunks_exact(dim).take(self.len())
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::Dimension {
                index: 0,
                expected: self.dim,
                found: x.len(),
            });
        }
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64]) -> f64 {
        self.points()
            .zip(&self.coefficients)
            .map(|(p, a)| a * self.kernel.eval_unchecked(x, p))
            .sum()
    }

    /// `√(αᵀ G α)`, with tiny negative round-off clamped to zero.
    pub fn rkhs_norm(&self) -> f64 {
        self.rkhs_norm_squared().max(0.0).sqrt()
    }

    pub fn rkhs_norm_squared(&self) -> f64 {
        let pts: Vec<&[f64]> = self.points().collect();
        let mut total = 0.0;
        for (pi, ai) in pts.iter().zip(&self.coefficients) {
            let mut row = 0.0;
            for (pj, aj) in pts.iter().zip(&self.coefficients) {
                row += aj * self.kernel.eval_unchecked(pi, pj);
            }
            total += ai * row;
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, SymmetricEigen};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect()
    }

    #[test]
    fn kernel_values() {
        let g1 = Kernel::gaussian(1.0).unwrap();
        assert_eq!(g1.eval(&[0.3, 0.1], &[0.3, 0.1]).unwrap(), 1.0);
        assert_relative_eq!(
            g1.eval(&[0.0], &[1.0]).unwrap(),
            0.367_879_441_171_442_33,
            max_relative = 1e-15
        );
        let g2 = Kernel::gaussian(2.0).unwrap();
        assert_relative_eq!(
            g2.eval(&[0.0], &[2.0]).unwrap(),
            (-1.0f64).exp(),
            max_relative = 1e-15
        );
        let l = Kernel::laplacian(0.5).unwrap();
        assert_relative_eq!(
            l.eval(&[0.0, 0.0], &[3.0, 4.0]).unwrap(),
            (-10.0f64).exp(),
            max_relative = 1e-14
        );
        assert!(matches!(
            g1.eval(&[0.0], &[0.0, 1.0]),
            Err(Error::Dimension { .. })
        ));
        assert!(Kernel::gaussian(0.0).is_err());
        assert!(Kernel::laplacian(-1.0).is_err());
    }

    #[test]
    fn sup_norm_is_one() {
        for k in [
            Kernel::gaussian(0.1).unwrap(),
            Kernel::laplacian(7.0).unwrap(),
        ] {
            assert_eq!(k.sup_norm_bound(), 1.0);
        }
    }

    #[test]
    fn gram_small_cases() {
        let k = Kernel::gaussian(1.0).unwrap();
        let g = k.gram_matrix([[0.5].as_slice()]).unwrap();
        assert_eq!(g.as_slice(), &[1.0]);
        let g = k.gram_matrix([[0.5].as_slice(), [0.5].as_slice()]).unwrap();
        assert_eq!(g.as_slice(), &[1.0, 1.0, 1.0, 1.0]);
        assert!(k
            .gram_matrix([[0.5].as_slice(), [0.5, 1.0].as_slice()])
            .is_err());
    }

    #[test]
    fn gram_matches_elementwise_eval() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts = random_points(&mut rng, 3, 2);
        for k in [
            Kernel::gaussian(0.7).unwrap(),
            Kernel::laplacian(0.7).unwrap(),
        ] {
            let g = k.gram_matrix(pts.iter().map(Vec::as_slice)).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    assert_eq!(g.get(i, j), k.eval(&pts[i], &pts[j]).unwrap());
                }
            }
        }
    }

    #[test]
    fn gram_is_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..20 {
            let n = rng.gen_range(2..=50);
            let d = rng.gen_range(1..=3);
            let pts = random_points(&mut rng, n, d);
            let gamma = rng.gen_range(0.05..3.0);
            let k = if trial % 2 == 0 {
                Kernel::gaussian(gamma).unwrap()
            } else {
                Kernel::laplacian(gamma).unwrap()
            };
            let g = k.gram_matrix(pts.iter().map(Vec::as_slice)).unwrap();
            let m = DMatrix::from_row_slice(n, n, g.as_slice());
            assert_eq!(m, m.transpose());
            let eig = SymmetricEigen::new(m.clone());
            let min = eig
                .eigenvalues
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min);
            assert!(min >= -1e-8 * m.norm(), "min eigenvalue {min}");
        }
    }

    #[test]
    fn expansion_cases() {
        let k = Kernel::gaussian(1.0).unwrap();
        let zero = KernelExpansion::zero(k, 2);
        assert_eq!(zero.eval(&[3.0, 1.0]).unwrap(), 0.0);
        assert_eq!(zero.rkhs_norm(), 0.0);

        let one = KernelExpansion::new(k, 1, &[vec![0.4]], vec![2.5]).unwrap();
        assert_eq!(one.eval(&[0.4]).unwrap(), 2.5);

        let anti = KernelExpansion::new(k, 1, &[vec![0.0], vec![1.0]], vec![1.0, -1.0]).unwrap();
        assert_eq!(anti.eval(&[0.5]).unwrap(), 0.0);

        let unit = KernelExpansion::new(k, 1, &[vec![0.0]], vec![1.0]).unwrap();
        assert_eq!(unit.rkhs_norm(), 1.0);
        let double = KernelExpansion::new(k, 1, &[vec![1.0], vec![1.0]], vec![1.0, 1.0]).unwrap();
        assert_eq!(double.rkhs_norm(), 2.0);

        assert!(matches!(
            one.eval(&[0.4, 0.0]),
            Err(Error::Dimension { .. })
        ));
        assert!(KernelExpansion::new(k, 1, &[vec![0.0]], vec![]).is_err());
    }

    #[test]
    fn norm_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let k = Kernel::gaussian(0.8).unwrap();
        let pts = random_points(&mut rng, 5, 2);
        let alpha: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f = KernelExpansion::new(k, 2, &pts, alpha.clone()).unwrap();
        let mut q = 0.0;
        for i in 0..5 {
            for j in 0..5 {
                let d2: f64 = pts[i]
                    .iter()
                    .zip(&pts[j])
                    .map(|(a, b)| (a - b).powi(2))
                    .sum();
                q += alpha[i] * alpha[j] * (-d2 / 0.64).exp();
            }
        }
        assert_relative_eq!(f.rkhs_norm(), q.sqrt(), max_relative = 1e-13);
        let g = k.gram_matrix(pts.iter().map(Vec::as_slice)).unwrap();
        assert_relative_eq!(g.quadratic_form(&alpha), q, max_relative = 1e-13);
    }

    #[test]
    fn expansion_json_round_trip() {
        let k = Kernel::laplacian(0.3).unwrap();
        let f = KernelExpansion::new(
            k,
            2,
            &[vec![0.1, 1.0 / 3.0], vec![-2.0, 1e-17]],
            vec![0.1 + 0.2, -7.25],
        )
        .unwrap();
        let text = serde_json::to_string(&f).unwrap();
        let back: KernelExpansion = serde_json::from_str(&text).unwrap();
        assert_eq!(back, f);
    }

    proptest! {
        #[test]
        fn kernel_symmetric_and_bounded(a in prop::collection::vec(-5.0f64..5.0, 3), b in prop::collection::vec(-5.0f64..5.0, 3), gamma in 0.01f64..10.0) {
            for k in [Kernel::gaussian(gamma).unwrap(), Kernel::laplacian(gamma).unwrap()] {
                let v = k.eval(&a, &b).unwrap();
                prop_assert_eq!(v, k.eval(&b, &a).unwrap());
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }

        #[test]
        fn eval_is_linear_in_coefficients(
            pts in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 2), 1..8),
            seed in any::<u64>(),
            s in -3.0f64..3.0,
            t in -3.0f64..3.0,
            x in prop::collection::vec(-2.0f64..2.0, 2),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let k = Kernel::gaussian(0.9).unwrap();
            let a: Vec<f64> = pts.iter().map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: Vec<f64> = pts.iter().map(|_| rng.gen_range(-1.0..1.0)).collect();
            let combo: Vec<f64> = a.iter().zip(&b).map(|(u, v)| s * u + t * v).collect();
            let fa = KernelExpansion::new(k, 2, &pts, a).unwrap().eval(&x).unwrap();
            let fb = KernelExpansion::new(k, 2, &pts, b).unwrap().eval(&x).unwrap();
            let fc = KernelExpansion::new(k, 2, &pts, combo).unwrap().eval(&x).unwrap();
            prop_assert!((fc - (s * fa + t * fb)).abs() <= 1e-12 * (1.0 + fc.abs()));
        }
    }
}
