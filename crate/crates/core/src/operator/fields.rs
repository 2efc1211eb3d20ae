//! Building-block fields with analytic derivatives.

use nalgebra::{DMatrix, DVector};

use super::{MinMaxSplit, Point, VectorField};
use crate::error::{Error, Result};

/// `z ↦ z`.
pub fn identity(dim: usize) -> Result<VectorField> {
    Ok(VectorField::new(dim, |z: &Point| z.clone())?
        .with_jacobian(move |_z: &Point| DMatrix::identity(dim, dim))
        .with_second_directional(move |_z: &Point, _h: &Point| DVector::zeros(dim)))
}

/// `z ↦ M z`.
pub fn linear(m: DMatrix<f64>) -> Result<VectorField> {
    affine(m.clone(), DVector::zeros(m.nrows()))
}

/// `z ↦ M z + c`.
pub fn affine(m: DMatrix<f64>, c: DVector<f64>) -> Result<VectorField> {
    if !m.is_square() || m.nrows() != c.len() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            found: m.ncols().max(c.len()),
        });
    }
    let dim = m.nrows();
    let mj = m.clone();
    Ok(VectorField::new(dim, move |z: &Point| &m * z + &c)?
        .with_jacobian(move |_z: &Point| mj.clone())
        .with_second_directional(move |_z: &Point, _h: &Point| DVector::zeros(dim)))
}

/// `z ↦ c`.
pub fn constant(c: DVector<f64>) -> VectorField {
    let dim = c.len();
    VectorField::new(dim, move |_z: &Point| c.clone())
        .expect("constant field of dimension zero")
        .with_jacobian(move |_z: &Point| DMatrix::zeros(dim, dim))
        .with_second_directional(move |_z: &Point, _h: &Point| DVector::zeros(dim))
}

/// The bilinear game `F(x, y) = (B y, -Bᵀ x)` of `f(x, y) = xᵀ B y`.
pub fn bilinear(b: &DMatrix<f64>) -> Result<VectorField> {
    let split = MinMaxSplit::new(b.nrows(), b.ncols())?;
    let d = split.dim();
    let mut m = DMatrix::zeros(d, d);
    m.view_mut((0, split.dim_x), (split.dim_x, split.dim_y)).copy_from(b);
    m.view_mut((split.dim_x, 0), (split.dim_y, split.dim_x))
        .copy_from(&(-b.transpose()));
    linear(m)
}

/// The planar rotation `F(x, y) = (y, -x)`.
pub fn rotation() -> VectorField {
    bilinear(&DMatrix::identity(1, 1)).expect("1x1 bilinear game")
}

/// `∇d₄(h) = ‖h‖² h`, the gradient of `d₄(h) = ‖h‖⁴ / 4`.
pub fn d4_gradient(dim: usize) -> Result<VectorField> {
    Ok(VectorField::new(dim, |h: &Point| h * h.norm_squared())?
        .with_jacobian(cubic_jacobian)
        .with_second_directional(cubic_second))
}

/// `(s ‖x‖² x, s ‖y‖² y)`, the gradient of `s (‖x‖⁴ + ‖y‖⁴) / 4`.
pub fn block_cubic(split: MinMaxSplit, scale: f64) -> Result<VectorField> {
    let split = MinMaxSplit::new(split.dim_x, split.dim_y)?;
    let d = split.dim();
    Ok(VectorField::new(d, move |z: &Point| {
        let (x, y) = (split.x(z), split.y(z));
        split.join(&(&x * (scale * x.norm_squared())), &(&y * (scale * y.norm_squared())))
    })?
    .with_jacobian(move |z: &Point| {
        let mut j = DMatrix::zeros(d, d);
        let (x, y) = (split.x(z), split.y(z));
        j.view_mut((0, 0), (split.dim_x, split.dim_x))
            .copy_from(&(cubic_jacobian(&x) * scale));
        j.view_mut((split.dim_x, split.dim_x), (split.dim_y, split.dim_y))
            .copy_from(&(cubic_jacobian(&y) * scale));
        j
    })
    .with_second_directional(move |z: &Point, h: &Point| {
        let sx = cubic_second(&split.x(z), &split.x(h)) * scale;
        let sy = cubic_second(&split.y(z), &split.y(h)) * scale;
        split.join(&sx, &sy)
    }))
}

/// Jacobian of `z ↦ ‖z‖² z`: `‖z‖² I + 2 z zᵀ`.
pub(crate) fn cubic_jacobian(z: &Point) -> DMatrix<f64> {
    let n = z.len();
    DMatrix::identity(n, n) * z.norm_squared() + z * z.transpose() * 2.0
}

/// Second directional derivative of `z ↦ ‖z‖² z`: `2‖h‖² z + 4 (z·h) h`.
pub(crate) fn cubic_second(z: &Point, h: &Point) -> DVector<f64> {
    z * (2.0 * h.norm_squared()) + h * (4.0 * z.dot(h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{default_fd_step, max_relative_error};
    use nalgebra::dvector;

    #[test]
    fn eval_examples() {
        let id = identity(2).unwrap();
        assert_eq!(id.eval(&dvector![1.0, 2.0]).unwrap(), dvector![1.0, 2.0]);
        assert_eq!(rotation().eval(&dvector![1.0, 0.0]).unwrap(), dvector![0.0, -1.0]);
        let d4 = d4_gradient(2).unwrap();
        assert_eq!(d4.eval(&dvector![1.0, 1.0]).unwrap(), dvector![2.0, 2.0]);
    }

    #[test]
    fn jacobian_examples() {
        let rot = rotation().jacobian(&dvector![3.0, -7.0]).unwrap();
        assert_eq!(rot, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]));
        let z = dvector![1.0, 0.0];
        let d4 = d4_gradient(2).unwrap();
        let j = d4.jacobian(&z).unwrap();
        assert_eq!(j, DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 1.0]));
        let fd = d4.jacobian_fd(&z, default_fd_step(&z)).unwrap();
        assert!(max_relative_error(fd.as_slice(), j.as_slice()) < 1e-6);
        let d4 = d4_gradient(3).unwrap();
        let z = dvector![0.4, -1.1, 1.7];
        let fd = d4.jacobian_fd(&z, 1e-5).unwrap();
        assert!(max_relative_error(fd.as_slice(), d4.jacobian(&z).unwrap().as_slice()) < 1e-6);
    }

    #[test]
    fn linear_second_directional_is_zero() {
        let f = linear(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0])).unwrap();
        let v = f.second_directional(&dvector![1.0, 1.0], &dvector![0.5, -2.0]).unwrap();
        assert_eq!(v, DVector::zeros(2));
    }

    #[test]
    fn block_cubic_matches_split_evaluation() {
        let split = MinMaxSplit::new(1, 2).unwrap();
        let f = block_cubic(split, 2.0).unwrap();
        let v = f.eval(&dvector![2.0, 1.0, 1.0]).unwrap();
        assert_eq!(v, dvector![16.0, 4.0, 4.0]);
        assert!(affine(DMatrix::identity(2, 2), dvector![1.0]).is_err());
    }
}
