//! Constant-velocity Kalman filter on `(x, y, ẋ, ẏ)`.
//!
//! Transition `A = [[1,0,1,0],[0,1,0,1],[0,0,1,0],[0,0,0,1]]`, measurement
//! `H = [[1,0,0,0],[0,1,0,0]]`, process noise `Q = q·I`, measurement noise
//! `R = r·I`.

use serde::{Deserialize, Serialize};

use crate::scalar::RealScalar;

type Mat4<T> = [[T; 4]; 4];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KalmanParams<T> {
    /// Process noise variance per state component.
    pub q: T,
    /// Measurement noise variance per axis.
    pub r: T,
}

impl Default for KalmanParams<f64> {
    fn default() -> Self {
        Self { q: 1e-4, r: 1e-4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KalmanState<T> {
    pub x: [T; 4],
    pub p: Mat4<T>,
}

impl<T: RealScalar> KalmanState<T> {
    pub fn new(x: [T; 4], p: Mat4<T>) -> Self {
        Self { x, p }
    }

    /// Zero velocity, position variance `pos_var`, velocity variance `vel_var`.
    pub fn at_rest(px: T, py: T, pos_var: T, vel_var: T) -> Self {
        let z = T::zero();
        Self {
            x: [px, py, z, z],
            p: diag([pos_var, pos_var, vel_var, vel_var]),
        }
    }

    pub fn position(&self) -> (T, T) {
        (self.x[0], self.x[1])
    }

    pub fn velocity(&self) -> (T, T) {
        (self.x[2], self.x[3])
    }

    /// `x ← A x`, `P ← A P Aᵀ + Q`.
    pub fn predict(&self, params: &KalmanParams<T>) -> Self {
        let [px, py, vx, vy] = self.x;
        let x = [px + vx, py + vy, vx, vy];
        let ap = mul(&transition(), &self.p);
        let mut p = mul(&ap, &transpose(&transition()));
        for (i, row) in p.iter_mut().enumerate() {
            row[i] += params.q;
        }
        Self { x, p: symmetrize(p) }
    }

    /// Standard update with measurement `(zx, zy)`.
    pub fn correct(&self, zx: T, zy: T, params: &KalmanParams<T>) -> Self {
        let p = &self.p;
        let gain = self.gain(params);
        let innovation = [zx - self.x[0], zy - self.x[1]];
        let mut x = self.x;
        for (i, xi) in x.iter_mut().enumerate() {
            *xi += gain[i][0] * innovation[0] + gain[i][1] * innovation[1];
        }
        // P ← (I − K H) P
        let mut new_p = *p;
        for i in 0..4 {
            for j in 0..4 {
                new_p[i][j] = p[i][j] - (gain[i][0] * p[0][j] + gain[i][1] * p[1][j]);
            }
        }
        Self {
            x,
            p: symmetrize(new_p),
        }
    }

    /// Kalman gain the next [`correct`](Self::correct) would apply.
    pub fn gain(&self, params: &KalmanParams<T>) -> [[T; 2]; 4] {
        let p = &self.p;
        // S = H P Hᵀ + R is the position block of P plus R; K = P Hᵀ S⁻¹.
        let s = [[p[0][0] + params.r, p[0][1]], [p[1][0], p[1][1] + params.r]];
        let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
        let s_inv = [[s[1][1] / det, -s[0][1] / det], [-s[1][0] / det, s[0][0] / det]];
        let mut gain = [[T::zero(); 2]; 4];
        for (i, g) in gain.iter_mut().enumerate() {
            for (j, gj) in g.iter_mut().enumerate() {
                *gj = p[i][0] * s_inv[0][j] + p[i][1] * s_inv[1][j];
            }
        }
        gain
    }
}

fn transition<T: RealScalar>() -> Mat4<T> {
    let (o, z) = (T::one(), T::zero());
    [[o, z, o, z], [z, o, z, o], [z, z, o, z], [z, z, z, o]]
}

fn diag<T: RealScalar>(d: [T; 4]) -> Mat4<T> {
    let mut m = [[T::zero(); 4]; 4];
    for i in 0..4 {
        m[i][i] = d[i];
    }
    m
}

fn mul<T: RealScalar>(a: &Mat4<T>, b: &Mat4<T>) -> Mat4<T> {
    let mut out = [[T::zero(); 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = (0..4).fold(T::zero(), |acc, k| acc + a[i][k] * b[k][j]);
        }
    }
    out
}

fn transpose<T: RealScalar>(a: &Mat4<T>) -> Mat4<T> {
    let mut out = *a;
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = a[j][i];
        }
    }
    out
}

fn symmetrize<T: RealScalar>(mut p: Mat4<T>) -> Mat4<T> {
    let half = T::from_f64(0.5).expect("representable");
    for i in 0..4 {
        for j in (i + 1)..4 {
            let m = (p[i][j] + p[j][i]) * half;
            p[i][j] = m;
            p[j][i] = m;
        }
    }
    p
}
