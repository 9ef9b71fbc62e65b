//! Angle encoding of projection bases, orthonormalization, projection of
//! mixtures and data, and the PCA reference basis.

use crate::data::Dataset;
use crate::gmm::GaussianMixture;
use crate::linalg::{self, orthonormality_defect, sym_eigen_desc, thin_q};
use crate::{Error, Real, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

/// Largest `|BᵀB - I|` entry accepted as orthonormal.
pub const ORTHONORMAL_TOL: f64 = 1e-8;

/// `d` blocks of `p - 1` angles, block `j` being `(φ_j, θ_1j, …, θ_(p-2)j)`,
/// with `φ ∈ [0, 2π]` and `θ ∈ [0, π]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleGenome<T: Real> {
    angles: Vec<T>,
    p: usize,
    d: usize,
}

/// Per-gene box constraints of a genome for ambient dimension `p` and
/// subspace dimension `d`.
pub fn angle_bounds<T: Real>(p: usize, d: usize) -> Vec<(T, T)> {
    (0..d)
        .flat_map(|_| {
            std::iter::once((T::zero(), T::two_pi()))
                .chain(std::iter::repeat_n((T::zero(), T::pi()), p.saturating_sub(2)))
        })
        .collect()
}

fn check_dims(p: usize, d: usize) -> Result<()> {
    if p < 2 || d == 0 || d >= p {
        return Err(Error::InvalidArgument(format!(
            "need p >= 2 and 1 <= d < p, got p={p}, d={d}"
        )));
    }
    Ok(())
}

impl<T: Real> AngleGenome<T> {
    pub fn new(angles: Vec<T>, p: usize, d: usize) -> Result<Self> {
        check_dims(p, d)?;
        if angles.len() != d * (p - 1) {
            return Err(Error::Dimension(format!(
                "genome for p={p}, d={d} needs {} angles, got {}",
                d * (p - 1),
                angles.len()
            )));
        }
        for (k, (a, (lo, hi))) in angles.iter().zip(angle_bounds::<T>(p, d)).enumerate() {
            if !a.finite() || *a < lo || *a > hi {
                return Err(Error::InvalidArgument(format!(
                    "angle {} = {a} outside [{lo}, {hi}]",
                    k + 1
                )));
            }
        }
        Ok(Self { angles, p, d })
    }

    pub fn angles(&self) -> &[T] {
        &self.angles
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    pub fn bounds(&self) -> Vec<(T, T)> {
        angle_bounds(self.p, self.d)
    }

    /// Writes `# p=<p> d=<d>` followed by one comma-separated line of angles.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# p={} d={}", self.p, self.d)?;
        let line: Vec<String> = self.angles.iter().map(|a| fmt17(a.as_f64())).collect();
        writeln!(out, "{}", line.join(","))?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidData("empty genome file".into()))??;
        let mut p = None;
        let mut d = None;
        for tok in header.trim_start_matches('#').split_whitespace() {
            if let Some(v) = tok.strip_prefix("p=") {
                p = v.parse().ok();
            } else if let Some(v) = tok.strip_prefix("d=") {
                d = v.parse().ok();
            }
        }
        let (Some(p), Some(d)) = (p, d) else {
            return Err(Error::InvalidData("genome header must be `# p=<p> d=<d>`".into()));
        };
        let mut angles = Vec::new();
        for (row, line) in lines.enumerate() {
            let line = line?;
            for (col, cell) in line.split(',').map(str::trim).filter(|c| !c.is_empty()).enumerate() {
                let v: f64 = cell.parse().map_err(|_| Error::Parse {
                    row: row + 2,
                    column: col + 1,
                    message: format!("`{cell}` is not a number"),
                })?;
                angles.push(T::lit(v));
            }
        }
        Self::new(angles, p, d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisOrigin {
    Decoded,
    Orthonormalized,
    Pca,
    External,
}

/// A `p x d` projection matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis<T: Real> {
    matrix: DMatrix<T>,
    origin: BasisOrigin,
}

impl<T: Real> Basis<T> {
    /// Wraps an arbitrary full-column-rank matrix.
    pub fn external(matrix: DMatrix<T>) -> Result<Self> {
        check_dims(matrix.nrows(), matrix.ncols())?;
        if matrix.iter().any(|v| !v.finite()) {
            return Err(Error::InvalidData("basis has non-finite entries".into()));
        }
        Ok(Self {
            matrix,
            origin: BasisOrigin::External,
        })
    }

    /// The first `d` canonical vectors of `ℝ^p`.
    pub fn canonical(p: usize, d: usize) -> Result<Self> {
        check_dims(p, d)?;
        Ok(Self {
            matrix: DMatrix::identity(p, d),
            origin: BasisOrigin::Orthonormalized,
        })
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.matrix
    }

    pub fn origin(&self) -> BasisOrigin {
        self.origin
    }

    pub fn p(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn d(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn is_orthonormal(&self) -> bool {
        orthonormality_defect(&self.matrix) <= T::lit(ORTHONORMAL_TOL)
    }

    /// Orthogonal projector onto the span of the columns.
    pub fn projector(&self) -> Result<DMatrix<T>> {
        match self.origin {
            BasisOrigin::Orthonormalized | BasisOrigin::Pca => {
                Ok(linalg::symmetrize(&(&self.matrix * self.matrix.transpose())))
            }
            _ => linalg::span_projector(&self.matrix),
        }
    }

    /// `p` lines of `d` comma-separated values with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        for row in self.matrix.row_iter() {
            let cells: Vec<String> = row.iter().map(|v| fmt17(v.as_f64())).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }

    /// Reads a basis written by [`Basis::write_csv`]. Lines starting with `#`
    /// are ignored. The result is tagged `Orthonormalized` when its columns
    /// are orthonormal, otherwise `External`.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (r, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row = line
                .split(',')
                .enumerate()
                .map(|(c, cell)| {
                    cell.trim().parse::<f64>().map_err(|_| Error::Parse {
                        row: r + 1,
                        column: c + 1,
                        message: format!("`{}` is not a number", cell.trim()),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if let Some(first) = rows.first() {
                if first.len() != row.len() {
                    return Err(Error::InvalidData(format!("ragged basis row {}", r + 1)));
                }
            }
            rows.push(row);
        }
        let p = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        let flat: Vec<T> = rows.into_iter().flatten().map(T::lit).collect();
        let mut basis = Self::external(DMatrix::from_row_slice(p, d, &flat))?;
        if basis.is_orthonormal() {
            basis.origin = BasisOrigin::Orthonormalized;
        }
        Ok(basis)
    }
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Decodes the sine-cosine angle representation into unit-norm columns.
///
/// For column `j` with angles `(φ, θ_1, …, θ_(p-2))`:
/// `b_1 = Π sin θ_i · sin φ`, `b_2 = Π sin θ_i · cos φ` and for `k ≥ 3`
/// `b_k = sin θ_1 ⋯ sin θ_(p-k) · cos θ_(p-k+1)`, so `b_p = cos θ_1`.
pub fn decode<T: Real>(genome: &AngleGenome<T>) -> Basis<T> {
    let (p, d) = (genome.p, genome.d);
    let mut matrix = DMatrix::zeros(p, d);
    for (j, block) in genome.angles.chunks(p - 1).enumerate() {
        let phi = block[0];
        let theta = &block[1..];
        // prefix[m] = sin θ_1 ⋯ sin θ_m
        let mut prefix = Vec::with_capacity(p - 1);
        prefix.push(T::one());
        for t in theta {
            let last = *prefix.last().expect("nonempty");
            prefix.push(last * t.sin());
        }
        let full = prefix[p - 2];
        matrix[(0, j)] = full * phi.sin();
        matrix[(1, j)] = full * phi.cos();
        for k in 3..=p {
            matrix[(k - 1, j)] = prefix[p - k] * theta[p - k].cos();
        }
    }
    Basis {
        matrix,
        origin: BasisOrigin::Decoded,
    }
}

/// Angles `(φ, θ_1, …, θ_(p-2))` of a nonzero vector; the inverse of one
/// block of [`decode`] up to normalization.
pub fn encode_column<T: Real>(v: &DVector<T>) -> Result<Vec<T>> {
    let p = v.len();
    if p < 2 {
        return Err(Error::InvalidArgument("vector needs at least 2 entries".into()));
    }
    let norm = v.norm();
    if !(norm > T::zero()) {
        return Err(Error::InvalidArgument("cannot encode the zero vector".into()));
    }
    let u = v / norm;
    let mut theta = Vec::with_capacity(p - 2);
    for i in 1..=p - 2 {
        // θ_i pairs the remaining leading block u_1..u_(p-i) with u_(p-i+1)
        let head = u.rows(0, p - i).norm();
        theta.push(head.atan2(u[p - i]));
    }
    let mut phi = u[0].atan2(u[1]);
    if phi < T::zero() {
        phi += T::two_pi();
    }
    let mut out = vec![phi];
    out.extend(theta);
    Ok(out)
}

/// Genome whose decoded columns are the (normalized) columns of `b`.
pub fn encode<T: Real>(b: &DMatrix<T>) -> Result<AngleGenome<T>> {
    let (p, d) = b.shape();
    check_dims(p, d)?;
    let mut angles = Vec::with_capacity(d * (p - 1));
    for col in b.column_iter() {
        let mut block = encode_column(&col.into_owned())?;
        let (lo, hi) = (T::zero(), T::two_pi());
        block[0] = block[0].max(lo).min(hi);
        angles.extend(block);
    }
    AngleGenome::new(angles, p, d)
}

/// Thin-QR orthonormalization with nonnegative `R` diagonal; the span is
/// unchanged.
pub fn orthonormalize<T: Real>(basis: &Basis<T>) -> Result<Basis<T>> {
    Ok(Basis {
        matrix: thin_q(&basis.matrix)?,
        origin: BasisOrigin::Orthonormalized,
    })
}

fn require_orthonormal<T: Real>(basis: &Basis<T>) -> Result<()> {
    if !basis.is_orthonormal() {
        return Err(Error::InvalidArgument(format!(
            "basis columns are not orthonormal (max |BᵀB - I| = {})",
            orthonormality_defect(basis.matrix())
        )));
    }
    Ok(())
}

/// Distribution of `Bᵀx` for `x` following `model`: a `d`-dimensional mixture
/// with means `Bᵀμ_g`, covariances `BᵀΣ_gB` and the same weights.
pub fn project_mixture<T: Real>(model: &GaussianMixture<T>, basis: &Basis<T>) -> Result<GaussianMixture<T>> {
    if basis.p() != model.dim() {
        return Err(Error::Dimension(format!(
            "basis has {} rows, mixture dimension is {}",
            basis.p(),
            model.dim()
        )));
    }
    require_orthonormal(basis)?;
    let b = basis.matrix();
    let bt = b.transpose();
    let means = model.components().iter().map(|c| &bt * c.mean()).collect();
    let covs = model
        .components()
        .iter()
        .map(|c| linalg::symmetrize(&(&bt * c.covariance() * b)))
        .collect();
    GaussianMixture::new(
        model.weights().to_vec(),
        means,
        covs,
        model.covariance_model().after_projection(),
    )
}

/// `Z = XB`, keeping the labels.
pub fn project_data<T: Real>(data: &Dataset<T>, basis: &Basis<T>) -> Result<Dataset<T>> {
    if basis.p() != data.p() {
        return Err(Error::Dimension(format!(
            "basis has {} rows, data has {} columns",
            basis.p(),
            data.p()
        )));
    }
    let z = data.values() * basis.matrix();
    let names = (1..=basis.d()).map(|j| format!("z{j}")).collect();
    data.with_values(z, names)
}

/// Leading principal directions of a dataset.
#[derive(Debug, Clone)]
pub struct PcaBasis<T: Real> {
    pub basis: Basis<T>,
    /// All eigenvalues of the sample covariance, descending.
    pub eigenvalues: Vec<T>,
    /// Set when the `d`-th and `(d+1)`-th eigenvalues coincide.
    pub warning: Option<String>,
}

/// Top-`d` eigenvectors of the sample covariance, each signed so that its
/// largest-magnitude entry is positive.
pub fn pca_basis<T: Real>(data: &Dataset<T>, d: usize) -> Result<PcaBasis<T>> {
    check_dims(data.p(), d)?;
    let cov = linalg::sample_covariance(data.values());
    let (values, vectors) = sym_eigen_desc(&cov);
    let mut matrix = vectors.columns(0, d).into_owned();
    for mut col in matrix.column_iter_mut() {
        let (imax, _) =
            col.iter().enumerate().fold(
                (0, T::lit(-1.0)),
                |(bi, bv), (i, v)| if v.abs() > bv { (i, v.abs()) } else { (bi, bv) },
            );
        if col[imax] < T::zero() {
            col.neg_mut();
        }
    }
    if !(values[d - 1] > T::zero()) {
        return Err(Error::RankDeficient(format!("sample covariance has rank below {d}")));
    }
    let gap = values[d - 1] - values[d];
    let warning = (gap.abs() <= T::lit(1e-10) * values[0].abs().max(T::one())).then(|| {
        format!(
            "eigenvalues {d} and {} are tied ({}); the PCA subspace is not unique",
            d + 1,
            values[d - 1]
        )
    });
    Ok(PcaBasis {
        basis: Basis {
            matrix,
            origin: BasisOrigin::Pca,
        },
        eigenvalues: values,
        warning,
    })
}
