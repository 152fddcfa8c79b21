//! Dense matrices of configurable-precision floats.

use std::cmp::Ordering;
use std::fmt;

use astro_float::{BigFloat, Consts, RoundingMode, Sign};
use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Default mantissa width in bits.
pub const DEFAULT_PRECISION: usize = 256;
const RM: RoundingMode = RoundingMode::ToEven;

/// A dense row-major matrix of [`BigFloat`] entries.
#[derive(Clone)]
pub struct HpMatrix {
    rows: usize,
    cols: usize,
    precision: usize,
    data: Vec<BigFloat>,
}

impl fmt::Debug for HpMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HpMatrix")
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .field("precision", &self.precision)
            .finish_non_exhaustive()
    }
}

/// Result of converting an [`HpMatrix`] to doubles.
#[derive(Debug, Clone)]
pub struct F64Conversion {
    pub matrix: DMatrix<f64>,
    /// Set when at least one entry was rounded, underflowed or overflowed.
    pub lossy: bool,
}

fn check_precision(precision: usize) -> Result<()> {
    if precision < 53 {
        return Err(Error::Precondition(format!("precision {precision} is below 53 bits")));
    }
    Ok(())
}

pub(crate) fn hp(v: f64, precision: usize) -> BigFloat {
    BigFloat::from_f64(v, precision)
}

/// Mantissa in `[0.5, 1)`, sign and binary exponent of a non-zero value.
fn decompose(x: &BigFloat) -> Option<(f64, bool, i64)> {
    let (words, _, sign, exp, _) = x.as_raw_parts()?;
    let n = words.len();
    if n == 0 || words[n - 1] == 0 {
        return None;
    }
    let mut frac = words[n - 1] as f64 / 2f64.powi(64);
    if n >= 2 {
        frac += words[n - 2] as f64 / 2f64.powi(128);
    }
    Some((frac, sign == Sign::Neg, exp as i64))
}

/// Nearest double of a big float (0 for zero).
pub fn big_to_f64(x: &BigFloat) -> f64 {
    match decompose(x) {
        None => 0.0,
        Some((frac, neg, e)) => {
            let e = e.clamp(-4000, 4000) as i32;
            let v = frac * 2f64.powi(e / 2) * 2f64.powi(e - e / 2);
            if neg {
                -v
            } else {
                v
            }
        }
    }
}

/// Natural log of a non-negative big float, `-inf` for zero.
pub fn big_ln(x: &BigFloat) -> Result<f64> {
    match decompose(x) {
        None => Ok(f64::NEG_INFINITY),
        Some((_, true, _)) => Err(Error::Domain("logarithm of a negative value".into())),
        Some((frac, false, e)) => Ok(frac.ln() + e as f64 * std::f64::consts::LN_2),
    }
}

impl HpMatrix {
    pub fn zeros(rows: usize, cols: usize, precision: usize) -> Result<Self> {
        check_precision(precision)?;
        Ok(Self {
            rows,
            cols,
            precision,
            data: vec![BigFloat::new(precision); rows * cols],
        })
    }

    pub fn identity(n: usize, precision: usize) -> Result<Self> {
        let mut m = Self::zeros(n, n, precision)?;
        for i in 0..n {
            m.data[i * n + i] = hp(1.0, precision);
        }
        Ok(m)
    }

    /// Exact conversion from doubles.
    pub fn from_f64(m: &DMatrix<f64>, precision: usize) -> Result<Self> {
        check_precision(precision)?;
        let data = (0..m.nrows())
            .flat_map(|i| (0..m.ncols()).map(move |j| (i, j)))
            .map(|(i, j)| hp(m[(i, j)], precision))
            .collect();
        Ok(Self {
            rows: m.nrows(),
            cols: m.ncols(),
            precision,
            data,
        })
    }

    pub fn from_entries(rows: usize, cols: usize, precision: usize, data: Vec<BigFloat>) -> Result<Self> {
        check_precision(precision)?;
        if data.len() != rows * cols {
            return Err(Error::Shape(format!("{} entries for a {rows}x{cols} matrix", data.len())));
        }
        Ok(Self {
            rows,
            cols,
            precision,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn precision(&self) -> usize {
        self.precision
    }

    pub fn get(&self, i: usize, j: usize) -> &BigFloat {
        &self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: BigFloat) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[BigFloat] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get_f64(&self, i: usize, j: usize) -> f64 {
        big_to_f64(self.get(i, j))
    }

    /// Converts to doubles, flagging any loss of information.
    pub fn to_f64(&self) -> F64Conversion {
        let mut lossy = false;
        let matrix = DMatrix::from_fn(self.rows, self.cols, |i, j| {
            let x = self.get(i, j);
            let v = big_to_f64(x);
            if !lossy && hp(v, self.precision).cmp(x) != Some(0) {
                lossy = true;
            }
            v
        });
        F64Conversion { matrix, lossy }
    }

    /// Entrywise natural logarithm; fails on negative entries.
    pub fn ln_entries(&self) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(i, j)] = big_ln(self.get(i, j))?;
            }
        }
        Ok(out)
    }

    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> Self {
        let data = rows
            .iter()
            .flat_map(|&i| cols.iter().map(move |&j| (i, j)))
            .map(|(i, j)| self.get(i, j).clone())
            .collect();
        Self {
            rows: rows.len(),
            cols: cols.len(),
            precision: self.precision,
            data,
        }
    }

    pub fn transpose(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                data.push(self.get(i, j).clone());
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            precision: self.precision,
            data,
        }
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::Shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let p = self.precision.max(other.precision);
        let mut out = Self::zeros(self.rows, other.cols, p)?;
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let b = other.get(k, j);
                    if b.is_zero() {
                        continue;
                    }
                    let idx = i * out.cols + j;
                    out.data[idx] = out.data[idx].add(&a.mul(b, p, RM), p, RM);
                }
            }
        }
        Ok(out)
    }

    /// Entrywise `self - other`.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b, p| a.sub(b, p, RM))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b, p| a.add(b, p, RM))
    }

    fn zip(&self, other: &Self, f: impl Fn(&BigFloat, &BigFloat, usize) -> BigFloat) -> Result<Self> {
        if (self.rows, self.cols) != (other.rows, other.cols) {
            return Err(Error::Shape("entrywise operation on matrices of different shapes".into()));
        }
        let p = self.precision.max(other.precision);
        let data = self.data.iter().zip(&other.data).map(|(a, b)| f(a, b, p)).collect();
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            precision: p,
            data,
        })
    }

    /// Infinity norm (maximum absolute row sum), as a double.
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|x| big_to_f64(x).abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// `diag(exp(values))` at the given precision.
pub fn exp_diagonal(values: &[f64], precision: usize) -> Result<HpMatrix> {
    let n = values.len();
    let mut m = HpMatrix::zeros(n, n, precision)?;
    let mut cc = Consts::new().map_err(|e| Error::Domain(format!("{e:?}")))?;
    for (i, &v) in values.iter().enumerate() {
        m.set(i, i, hp(v, precision).exp(precision, RM, &mut cc));
    }
    Ok(m)
}

/// Column vector `exp(values)` at the given precision.
pub fn exp_column(values: &[f64], precision: usize) -> Result<HpMatrix> {
    let mut cc = Consts::new().map_err(|e| Error::Domain(format!("{e:?}")))?;
    let data = values.iter().map(|&v| hp(v, precision).exp(precision, RM, &mut cc)).collect();
    HpMatrix::from_entries(values.len(), 1, precision, data)
}

/// Solves `A X = B` by Gaussian elimination with partial pivoting.
///
/// Fails with [`Error::Singular`] when the pivot ratio suggests the system
/// cannot be resolved at the working precision.
pub fn hp_solve(a: &HpMatrix, b: &HpMatrix) -> Result<HpMatrix> {
    let n = a.rows;
    if a.cols != n || b.rows != n {
        return Err(Error::Shape(format!(
            "hp_solve needs a square system, got {}x{} and {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let p = a.precision.max(b.precision);
    let m = b.cols;
    let mut lhs = a.data.clone();
    let mut rhs = b.data.clone();
    let a_scale = a.norm_inf().max(f64::MIN_POSITIVE);
    let mut min_pivot = f64::INFINITY;
    let mut max_pivot: f64 = 0.0;

    for k in 0..n {
        let pivot_row = (k..n)
            .max_by(|&i, &j| {
                lhs[i * n + k]
                    .abs_cmp(&lhs[j * n + k])
                    .map_or(Ordering::Equal, |c| c.cmp(&0))
                    .then(j.cmp(&i))
            })
            .expect("non-empty range");
        let pivot_mag = big_to_f64(&lhs[pivot_row * n + k]).abs();
        if lhs[pivot_row * n + k].is_zero() {
            return Err(Error::Singular {
                condition: f64::INFINITY,
            });
        }
        min_pivot = min_pivot.min(pivot_mag);
        max_pivot = max_pivot.max(pivot_mag);
        if pivot_row != k {
            for j in 0..n {
                lhs.swap(k * n + j, pivot_row * n + j);
            }
            for j in 0..m {
                rhs.swap(k * m + j, pivot_row * m + j);
            }
        }
        let pivot = lhs[k * n + k].clone();
        for i in k + 1..n {
            if lhs[i * n + k].is_zero() {
                continue;
            }
            let factor = lhs[i * n + k].div(&pivot, p, RM);
            lhs[i * n + k] = BigFloat::new(p);
            for j in k + 1..n {
                let u = &lhs[k * n + j];
                if u.is_zero() {
                    continue;
                }
                let t = factor.mul(u, p, RM);
                lhs[i * n + j] = lhs[i * n + j].sub(&t, p, RM);
            }
            for j in 0..m {
                let u = &rhs[k * m + j];
                if u.is_zero() {
                    continue;
                }
                let t = factor.mul(u, p, RM);
                rhs[i * m + j] = rhs[i * m + j].sub(&t, p, RM);
            }
        }
    }

    let condition = (a_scale / min_pivot).max(max_pivot / min_pivot);
    if !condition.is_finite() || condition.log2() > (p as f64 - 8.0) {
        return Err(Error::Singular { condition });
    }

    for k in (0..n).rev() {
        let pivot = lhs[k * n + k].clone();
        for j in 0..m {
            let mut acc = rhs[k * m + j].clone();
            for i in k + 1..n {
                let u = &lhs[k * n + i];
                let x = &rhs[i * m + j];
                if u.is_zero() || x.is_zero() {
                    continue;
                }
                acc = acc.sub(&u.mul(x, p, RM), p, RM);
            }
            rhs[k * m + j] = if acc.is_zero() { acc } else { acc.div(&pivot, p, RM) };
        }
    }
    HpMatrix::from_entries(n, m, p, rhs)
}
