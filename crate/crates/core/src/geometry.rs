//! Coordinates on the exterior of the light cone.
//!
//! The canonical representation of a point is its null pair `(u, v)` with
//! `u = (t - r)/2`, `v = (t + r)/2`. The exterior region is `u < 0 < v`, where
//! `f = -uv` and `h = -v/u` are both positive.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, LabError, Result};

/// Spacetime dimension minus one, i.e. the number of spatial dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct Dimension(u32);

impl Dimension {
    pub fn new(n: u32) -> Result<Self> {
        if n < 2 {
            return Err(LabError::InvalidInput(format!("dimension n = {n} must be at least 2")));
        }
        Ok(Dimension(n))
    }

    pub fn get(self) -> u32 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64
    }

    /// Area of the unit sphere S^{n-1}.
    pub fn sphere_area(self) -> f64 {
        let n = self.as_f64();
        2.0 * std::f64::consts::PI.powf(n / 2.0) / gamma_half_integer(n)
    }

    /// Eigenvalue `l(l+n-2)` of the negative sphere Laplacian on degree-l harmonics.
    pub fn angular_eigenvalue(self, ell: u32) -> f64 {
        let l = ell as f64;
        l * (l + self.as_f64() - 2.0)
    }
}

impl TryFrom<u32> for Dimension {
    type Error = LabError;
    fn try_from(n: u32) -> Result<Self> {
        Dimension::new(n)
    }
}

impl From<Dimension> for u32 {
    fn from(d: Dimension) -> u32 {
        d.0
    }
}

// Gamma(x/2) for positive integer x.
fn gamma_half_integer(x: f64) -> f64 {
    let k = x.round() as i64;
    if k % 2 == 0 {
        (1..k / 2).map(|j| j as f64).product()
    } else {
        let mut g = std::f64::consts::PI.sqrt();
        let mut a = 0.5;
        while a < x / 2.0 - 0.25 {
            g *= a;
            a += 1.0;
        }
        g
    }
}

/// A point in null coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpacetimePoint {
    pub u: f64,
    pub v: f64,
}

impl SpacetimePoint {
    pub fn new(u: f64, v: f64) -> Self {
        SpacetimePoint { u, v }
    }

    /// A point that must lie in the exterior region.
    pub fn exterior(u: f64, v: f64) -> Result<Self> {
        let p = SpacetimePoint { u, v };
        p.require_exterior()?;
        Ok(p)
    }

    pub fn from_rect(t: f64, r: f64) -> Result<Self> {
        let (u, v) = null_from_rect(t, r)?;
        Ok(SpacetimePoint { u, v })
    }

    pub fn t(&self) -> f64 {
        self.u + self.v
    }
    pub fn r(&self) -> f64 {
        self.v - self.u
    }
    pub fn f(&self) -> f64 {
        -self.u * self.v
    }
    pub fn h(&self) -> f64 {
        -self.v / self.u
    }

    pub fn in_exterior(&self) -> bool {
        self.u < 0.0 && self.v > 0.0
    }

    pub fn require_exterior(&self) -> Result<()> {
        if self.u.is_finite() && self.v.is_finite() && self.in_exterior() {
            Ok(())
        } else {
            Err(LabError::OutsideExteriorRegion { u: self.u, v: self.v })
        }
    }
}

/// `(t, r)` to `(u, v)`.
pub fn null_from_rect(t: f64, r: f64) -> Result<(f64, f64)> {
    ensure_finite("t", t)?;
    ensure_finite("r", r)?;
    if r < 0.0 {
        return Err(LabError::InvalidInput(format!("radius r = {r} is negative")));
    }
    Ok(((t - r) / 2.0, (t + r) / 2.0))
}

/// `(u, v)` to `(f, h)` on the exterior region.
pub fn hyperbolic(u: f64, v: f64) -> Result<(f64, f64)> {
    let p = SpacetimePoint::exterior(u, v)?;
    Ok((p.f(), p.h()))
}

/// The exterior point with `f = omega` and `h = tau`.
pub fn point_from_fh(omega: f64, tau: f64) -> Result<SpacetimePoint> {
    if !(omega > 0.0 && tau > 0.0 && omega.is_finite() && tau.is_finite()) {
        return Err(LabError::InvalidInput(format!(
            "level values must be positive and finite, got f = {omega}, h = {tau}"
        )));
    }
    let so = omega.sqrt();
    let st = tau.sqrt();
    Ok(SpacetimePoint { u: -so / st, v: so * st })
}

/// Inner products and the volume density at a point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MetricData {
    pub grad_f_sq: f64,
    pub grad_h_sq: f64,
    pub grad_f_dot_grad_h: f64,
    pub box_f: f64,
    /// Density of the volume form in `(u, v)` per unit solid angle.
    pub volume_density: f64,
}

/// `g^{uv} = -1/2` pairing of two covectors given by their `(u, v)` components.
pub fn inverse_metric_pair(a: (f64, f64), b: (f64, f64)) -> f64 {
    -0.5 * (a.0 * b.1 + a.1 * b.0)
}

pub fn metric_data(p: SpacetimePoint, n: Dimension) -> Result<MetricData> {
    p.require_exterior()?;
    let (u, v) = (p.u, p.v);
    let df = (-v, -u);
    let dh = (v / (u * u), -1.0 / u);
    // box f from the mode-reduced operator: -f_uv + (n-1)/(2r)(f_v - f_u)
    let nn = n.as_f64();
    let box_f = 1.0 + (nn - 1.0) / (2.0 * p.r()) * (df.1 - df.0);
    Ok(MetricData {
        grad_f_sq: inverse_metric_pair(df, df),
        grad_h_sq: inverse_metric_pair(dh, dh),
        grad_f_dot_grad_h: inverse_metric_pair(df, dh),
        box_f,
        volume_density: 2.0 * p.r().powf(nn - 1.0),
    })
}

/// Conformal inversion `(u, v) -> (-1/v, -1/u)`.
pub fn invert(p: SpacetimePoint) -> Result<SpacetimePoint> {
    p.require_exterior()?;
    Ok(SpacetimePoint { u: -1.0 / p.v, v: -1.0 / p.u })
}

/// `{rho < f < omega, sigma < h < tau}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdmissibleRegion {
    pub rho: f64,
    pub omega: f64,
    pub sigma: f64,
    pub tau: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Membership {
    Interior,
    Boundary,
    Outside,
}

/// One of the four boundary pieces, with the cutoffs that bound it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum BoundaryPiece {
    /// `f = omega`, `sigma < h < tau`; outward normal along `grad f`.
    OuterHyperboloid { omega: f64, sigma: f64, tau: f64 },
    /// `f = rho`; outward normal along `-grad f`.
    InnerHyperboloid { rho: f64, sigma: f64, tau: f64 },
    /// `h = tau`, `rho < f < omega`; outward normal along `grad h`.
    FutureCone { tau: f64, rho: f64, omega: f64 },
    /// `h = sigma`; outward normal along `-grad h`.
    PastCone { sigma: f64, rho: f64, omega: f64 },
}

impl AdmissibleRegion {
    pub fn new(rho: f64, omega: f64, sigma: f64, tau: f64) -> Result<Self> {
        for (name, x) in [("rho", rho), ("omega", omega), ("sigma", sigma), ("tau", tau)] {
            if !(x > 0.0 && x.is_finite()) {
                return Err(LabError::InvalidInput(format!("{name} = {x} must be positive and finite")));
            }
        }
        if !(rho < omega) || !(sigma < tau) {
            return Err(LabError::InvalidCutoffs(format!(
                "need rho < omega and sigma < tau, got ({rho}, {omega}), ({sigma}, {tau})"
            )));
        }
        Ok(AdmissibleRegion { rho, omega, sigma, tau })
    }

    /// Membership with a relative tolerance band on the level values.
    pub fn classify(&self, p: SpacetimePoint, tol: f64) -> Membership {
        if !p.in_exterior() {
            return Membership::Outside;
        }
        let (f, h) = (p.f(), p.h());
        let below = |x: f64, lo: f64| x < lo * (1.0 - tol);
        let above = |x: f64, hi: f64| x > hi * (1.0 + tol);
        if below(f, self.rho) || above(f, self.omega) || below(h, self.sigma) || above(h, self.tau) {
            return Membership::Outside;
        }
        let near = |x: f64, y: f64| (x - y).abs() <= tol * y;
        if near(f, self.rho) || near(f, self.omega) || near(h, self.sigma) || near(h, self.tau) {
            Membership::Boundary
        } else {
            Membership::Interior
        }
    }

    pub fn contains(&self, p: SpacetimePoint, tol: f64) -> bool {
        self.classify(p, tol) != Membership::Outside
    }

    pub fn boundary_pieces(&self) -> [BoundaryPiece; 4] {
        let AdmissibleRegion { rho, omega, sigma, tau } = *self;
        [
            BoundaryPiece::OuterHyperboloid { omega, sigma, tau },
            BoundaryPiece::InnerHyperboloid { rho, sigma, tau },
            BoundaryPiece::FutureCone { tau, rho, omega },
            BoundaryPiece::PastCone { sigma, rho, omega },
        ]
    }

    /// The pieces below and above the level `f = level`.
    pub fn split_at(&self, level: f64) -> Result<(AdmissibleRegion, AdmissibleRegion)> {
        if !(self.rho < level && level < self.omega) {
            return Err(LabError::InvalidCutoffs(format!(
                "split level {level} not inside ({}, {})",
                self.rho, self.omega
            )));
        }
        Ok((
            AdmissibleRegion { omega: level, ..*self },
            AdmissibleRegion { rho: level, ..*self },
        ))
    }

    /// The image under inversion: `f -> 1/f`, `h` unchanged.
    pub fn inverted(&self) -> AdmissibleRegion {
        AdmissibleRegion { rho: 1.0 / self.omega, omega: 1.0 / self.rho, ..*self }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rect_to_null_examples() {
        assert_eq!(null_from_rect(0.0, 2.0).unwrap(), (-1.0, 1.0));
        assert_eq!(null_from_rect(3.0, 5.0).unwrap(), (-1.0, 4.0));
        assert!(matches!(null_from_rect(0.0, -1.0), Err(LabError::InvalidInput(_))));
    }

    #[test]
    fn hyperbolic_examples() {
        assert_eq!(hyperbolic(-2.0, 2.0).unwrap(), (4.0, 1.0));
        assert_eq!(hyperbolic(-1.0, 4.0).unwrap(), (4.0, 4.0));
        assert!(matches!(hyperbolic(1.0, 2.0), Err(LabError::OutsideExteriorRegion { .. })));
        assert!(matches!(hyperbolic(-1.0, 0.0), Err(LabError::OutsideExteriorRegion { .. })));
    }

    #[test]
    fn level_point_examples() {
        let p = point_from_fh(4.0, 1.0).unwrap();
        assert_eq!((p.u, p.v, p.r(), p.t()), (-2.0, 2.0, 4.0, 0.0));
        let p = point_from_fh(1.0, 4.0).unwrap();
        assert_relative_eq!(p.u, -0.5);
        assert_relative_eq!(p.v, 2.0);
        assert_relative_eq!(p.r(), 2.5);
        assert_relative_eq!(p.t(), 1.5);
        assert!(point_from_fh(0.0, 1.0).is_err());
    }

    #[test]
    fn metric_examples() {
        let n = Dimension::new(3).unwrap();
        let m = metric_data(SpacetimePoint::new(-2.0, 2.0), n).unwrap();
        assert_relative_eq!(m.grad_f_sq, 4.0);
        assert_relative_eq!(m.grad_h_sq, -0.25);
        assert_eq!(m.grad_f_dot_grad_h, 0.0);
        assert_relative_eq!(m.box_f, 2.0);
        assert_relative_eq!(m.volume_density, 32.0);
    }

    #[test]
    fn inversion_example() {
        let q = invert(SpacetimePoint::new(-2.0, 2.0)).unwrap();
        assert_eq!((q.u, q.v), (-0.5, 0.5));
        assert_relative_eq!(q.f(), 0.25);
    }

    #[test]
    fn sphere_areas() {
        let pi = std::f64::consts::PI;
        assert_relative_eq!(Dimension::new(2).unwrap().sphere_area(), 2.0 * pi, epsilon = 1e-14);
        assert_relative_eq!(Dimension::new(3).unwrap().sphere_area(), 4.0 * pi, epsilon = 1e-14);
        assert_relative_eq!(Dimension::new(4).unwrap().sphere_area(), 2.0 * pi * pi, epsilon = 1e-13);
        assert_relative_eq!(Dimension::new(5).unwrap().sphere_area(), 8.0 * pi * pi / 3.0, epsilon = 1e-13);
        assert!(Dimension::new(1).is_err());
    }

    #[test]
    fn region_membership() {
        let d = AdmissibleRegion::new(0.5, 2.0, 0.5, 2.0).unwrap();
        assert_eq!(d.classify(point_from_fh(1.0, 1.0).unwrap(), 1e-12), Membership::Interior);
        assert_eq!(d.classify(point_from_fh(2.0, 1.0).unwrap(), 1e-12), Membership::Boundary);
        assert_eq!(d.classify(point_from_fh(3.0, 1.0).unwrap(), 1e-12), Membership::Outside);
        assert!(matches!(AdmissibleRegion::new(1.0, 1.0, 0.5, 2.0), Err(LabError::InvalidCutoffs(_))));
    }
}
