//! Programmable Mach-Zehnder meshes in the rectangular (Clements) arrangement.
//!
//! A mesh of width `N` is an input phase screen followed by `N` columns of
//! MZIs. Even columns hold MZIs on port pairs `(0,1), (2,3), ...`, odd
//! columns on `(1,2), (3,4), ...`, for `N(N-1)/2` devices in total.
//!
//! Each MZI is `BS · P(theta) · BS · P(phi)` with the 50:50 coupler
//! `BS = [[1, j], [j, 1]] / sqrt(2)` and `P(x) = diag(e^{jx}, 1)`:
//!
//! ```text
//! U(theta, phi) = j e^{j theta/2} [[e^{j phi} sin(theta/2),  cos(theta/2)],
//!                                  [e^{j phi} cos(theta/2), -sin(theta/2)]]
//! ```

use std::f64::consts::TAU;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

const J: C64 = C64::new(0.0, 1.0);

/// Reduce a phase into `[0, 2π)`.
pub fn wrap_phase(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Internal (`theta`) and external (`phi`) phase of one MZI, in radians.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MziSetting {
    theta: f64,
    phi: f64,
}

impl MziSetting {
    pub fn new(theta: f64, phi: f64) -> Result<Self> {
        if !theta.is_finite() || !phi.is_finite() {
            return Err(Error::invalid(format!(
                "MZI phases must be finite (theta={theta}, phi={phi})"
            )));
        }
        Ok(Self {
            theta: wrap_phase(theta),
            phi: wrap_phase(phi),
        })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    /// The 2×2 transfer matrix, row-major `[t00, t01, t10, t11]`.
    pub fn transfer(&self) -> [C64; 4] {
        let (s, c) = (0.5 * self.theta).sin_cos();
        let pre = J * C64::from_polar(1.0, 0.5 * self.theta);
        let ephi = C64::from_polar(1.0, self.phi);
        [pre * ephi * s, pre * c, pre * ephi * c, -pre * s]
    }
}

/// 2×2 transfer matrix of a single MZI.
pub fn mzi_transfer(setting: &MziSetting) -> SquareMatrix {
    SquareMatrix {
        n: 2,
        data: setting.transfer().to_vec(),
    }
}

/// One MZI slot: column index and the upper of its two ports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MziPlacement {
    pub column: usize,
    pub top: usize,
}

#[derive(Serialize, Deserialize)]
struct MeshShape {
    width: usize,
}

/// Clements arrangement for a fixed port count. Serialized as its width
/// alone since the placement list is canonical.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "MeshShape", into = "MeshShape")]
pub struct MeshLayout {
    width: usize,
    placements: Vec<MziPlacement>,
}

impl TryFrom<MeshShape> for MeshLayout {
    type Error = Error;

    fn try_from(shape: MeshShape) -> Result<Self> {
        build_mesh(shape.width)
    }
}

impl From<MeshLayout> for MeshShape {
    fn from(layout: MeshLayout) -> Self {
        MeshShape { width: layout.width }
    }
}

/// Lay out a rectangular mesh over `width` ports.
pub fn build_mesh(width: usize) -> Result<MeshLayout> {
    if width == 0 {
        return Err(Error::invalid("mesh width must be at least 1"));
    }
    let placements = (0..width)
        .flat_map(|column| {
            (column % 2..width.saturating_sub(1))
                .step_by(2)
                .map(move |top| MziPlacement { column, top })
        })
        .collect();
    Ok(MeshLayout { width, placements })
}

impl MeshLayout {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn placements(&self) -> &[MziPlacement] {
        &self.placements
    }

    pub fn mzi_count(&self) -> usize {
        self.placements.len()
    }

    pub fn column_count(&self) -> usize {
        self.width
    }

    /// Trainable phases: the input screen plus two per MZI.
    pub fn phase_count(&self) -> usize {
        self.width + 2 * self.mzi_count()
    }

    fn slot_index(&self, column: usize, top: usize) -> Option<usize> {
        self.placements
            .binary_search_by(|p| (p.column, p.top).cmp(&(column, top)))
            .ok()
    }
}

/// Phases for every element of a mesh. `output_phases` is the optional
/// diagonal screen after the last column; trained networks leave it unset,
/// decompositions use it to reproduce a target exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshParams {
    pub input_phases: Vec<f64>,
    pub mzis: Vec<MziSetting>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_phases: Option<Vec<f64>>,
}

impl MeshParams {
    pub fn zeros(layout: &MeshLayout) -> Self {
        Self {
            input_phases: vec![0.0; layout.width],
            mzis: vec![MziSetting { theta: 0.0, phi: 0.0 }; layout.mzi_count()],
            output_phases: None,
        }
    }

    pub fn check(&self, layout: &MeshLayout) -> Result<()> {
        if self.input_phases.len() != layout.width {
            return Err(Error::shape(format!(
                "{} input phases for a width-{} mesh",
                self.input_phases.len(),
                layout.width
            )));
        }
        if self.mzis.len() != layout.mzi_count() {
            return Err(Error::shape(format!(
                "{} MZI settings for a mesh with {} MZIs",
                self.mzis.len(),
                layout.mzi_count()
            )));
        }
        if let Some(out) = &self.output_phases {
            if out.len() != layout.width {
                return Err(Error::shape(format!(
                    "{} output phases for a width-{} mesh",
                    out.len(),
                    layout.width
                )));
            }
        }
        let phases = self.input_phases.iter().chain(self.output_phases.iter().flatten());
        if phases.into_iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("mesh phases must be finite"));
        }
        Ok(())
    }
}

/// A mesh with all phase factors evaluated, ready to propagate fields.
#[derive(Clone, Debug)]
pub struct CompiledMesh {
    input: Vec<C64>,
    mzis: Vec<(usize, [C64; 4])>,
    output: Option<Vec<C64>>,
}

impl CompiledMesh {
    pub fn new(layout: &MeshLayout, params: &MeshParams) -> Result<Self> {
        params.check(layout)?;
        Ok(Self::new_unchecked(layout, params))
    }

    pub(crate) fn new_unchecked(layout: &MeshLayout, params: &MeshParams) -> Self {
        let phase = |p: &f64| C64::from_polar(1.0, *p);
        Self {
            input: params.input_phases.iter().map(phase).collect(),
            mzis: layout
                .placements
                .iter()
                .zip(&params.mzis)
                .map(|(slot, s)| (slot.top, s.transfer()))
                .collect(),
            output: params.output_phases.as_ref().map(|o| o.iter().map(phase).collect()),
        }
    }

    pub fn width(&self) -> usize {
        self.input.len()
    }

    /// Propagate `field` through the mesh in place.
    #[inline]
    pub fn apply_in_place(&self, field: &mut [C64]) {
        debug_assert_eq!(field.len(), self.input.len());
        for (x, p) in field.iter_mut().zip(&self.input) {
            *x *= p;
        }
        for &(top, [t00, t01, t10, t11]) in &self.mzis {
            let a = field[top];
            let b = field[top + 1];
            field[top] = t00 * a + t01 * b;
            field[top + 1] = t10 * a + t11 * b;
        }
        if let Some(out) = &self.output {
            for (x, p) in field.iter_mut().zip(out) {
                *x *= p;
            }
        }
    }
}

/// Propagate a field column by column without forming the mesh matrix.
pub fn apply_mesh(layout: &MeshLayout, params: &MeshParams, field: &[C64]) -> Result<Vec<C64>> {
    if field.len() != layout.width {
        return Err(Error::shape(format!(
            "field of length {} into a width-{} mesh",
            field.len(),
            layout.width
        )));
    }
    let mesh = CompiledMesh::new(layout, params)?;
    let mut out = field.to_vec();
    mesh.apply_in_place(&mut out);
    Ok(out)
}

/// Dense matrix of the whole mesh.
pub fn mesh_unitary(layout: &MeshLayout, params: &MeshParams) -> Result<SquareMatrix> {
    params.check(layout)?;
    let n = layout.width;
    let mut u = SquareMatrix::identity(n);
    for (k, p) in params.input_phases.iter().enumerate() {
        u.scale_row(k, C64::from_polar(1.0, *p));
    }
    for (slot, setting) in layout.placements.iter().zip(&params.mzis) {
        u.left_mul_2x2(slot.top, setting.transfer());
    }
    if let Some(out) = &params.output_phases {
        for (k, p) in out.iter().enumerate() {
            u.scale_row(k, C64::from_polar(1.0, *p));
        }
    }
    Ok(u)
}

/// Square complex matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<C64>,
}

impl fmt::Debug for SquareMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.data.chunks(self.n.max(1))).finish()
    }
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![C64::new(0.0, 0.0); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for k in 0..n {
            m[(k, k)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<C64>>) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::shape("matrix rows must all have length equal to the row count"));
        }
        Ok(Self {
            n,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, r: usize) -> &[C64] {
        &self.data[r * self.n..(r + 1) * self.n]
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.n);
        for r in 0..self.n {
            for c in 0..self.n {
                out[(c, r)] = self[(r, c)].conj();
            }
        }
        out
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.n, rhs.n);
        let n = self.n;
        let mut out = Self::zeros(n);
        for r in 0..n {
            for k in 0..n {
                let a = self[(r, k)];
                for c in 0..n {
                    out.data[r * n + c] += a * rhs.data[k * n + c];
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        (0..self.n)
            .map(|r| self.row(r).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Largest entry-wise modulus of `self - rhs`.
    pub fn max_abs_diff(&self, rhs: &Self) -> f64 {
        assert_eq!(self.n, rhs.n);
        self.data
            .iter()
            .zip(&rhs.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// `max |U†U - I|`.
    pub fn unitarity_error(&self) -> f64 {
        self.adjoint().matmul(self).max_abs_diff(&Self::identity(self.n))
    }

    fn scale_row(&mut self, r: usize, z: C64) {
        let n = self.n;
        for x in &mut self.data[r * n..(r + 1) * n] {
            *x *= z;
        }
    }

    /// `self <- T · self` with `T` acting on rows `(top, top+1)`.
    fn left_mul_2x2(&mut self, top: usize, [t00, t01, t10, t11]: [C64; 4]) {
        for c in 0..self.n {
            let a = self[(top, c)];
            let b = self[(top + 1, c)];
            self[(top, c)] = t00 * a + t01 * b;
            self[(top + 1, c)] = t10 * a + t11 * b;
        }
    }

    /// `self <- self · T` with `T` acting on columns `(left, left+1)`.
    fn right_mul_2x2(&mut self, left: usize, [t00, t01, t10, t11]: [C64; 4]) {
        for r in 0..self.n {
            let a = self[(r, left)];
            let b = self[(r, left + 1)];
            self[(r, left)] = a * t00 + b * t10;
            self[(r, left + 1)] = a * t01 + b * t11;
        }
    }
}

impl std::ops::Index<(usize, usize)> for SquareMatrix {
    type Output = C64;

    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        &self.data[r * self.n + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for SquareMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        &mut self.data[r * self.n + c]
    }
}

fn adjoint_2x2([t00, t01, t10, t11]: [C64; 4]) -> [C64; 4] {
    [t00.conj(), t10.conj(), t01.conj(), t11.conj()]
}

/// Tolerance on `max |U†U - I|` accepted by [`clements_decompose`].
pub const DECOMPOSE_UNITARITY_TOL: f64 = 1e-8;

/// Program a rectangular mesh to realise `target` exactly.
///
/// Anti-diagonals of the target are nulled alternately from the right
/// (by MZI inverses on column pairs) and from the left (by MZIs on row
/// pairs). The left-hand MZIs are then commuted through the residual
/// diagonal so that every device ends up before it. The common phase of
/// the diagonal goes into the input screen and the remaining relative
/// phases into `output_phases`.
pub fn clements_decompose(target: &SquareMatrix) -> Result<MeshParams> {
    let n = target.dim();
    let layout = build_mesh(n)?;
    if target.data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::invalid("target matrix has non-finite entries"));
    }
    let err = target.unitarity_error();
    if err >= DECOMPOSE_UNITARITY_TOL {
        return Err(Error::invalid(format!(
            "target is not unitary (max |U†U - I| = {err:.3e})"
        )));
    }

    let mut u = target.clone();
    let mut right: Vec<(usize, MziSetting)> = Vec::new();
    let mut left: Vec<(usize, MziSetting)> = Vec::new();
    for diag in 0..n.saturating_sub(1) {
        if diag % 2 == 0 {
            for j in 0..=diag {
                let (row, col) = (n - 1 - j, diag - j);
                let (a, b) = (u[(row, col)], u[(row, col + 1)]);
                // (U·T†)[row, col] ∝ e^{-jφ} sin(θ/2) a + cos(θ/2) b
                let theta = 2.0 * b.norm().atan2(a.norm());
                let phi = if a.norm() == 0.0 || b.norm() == 0.0 {
                    0.0
                } else {
                    a.arg() - (-b).arg()
                };
                let t = MziSetting::new(theta, phi)?;
                u.right_mul_2x2(col, adjoint_2x2(t.transfer()));
                right.push((col, t));
            }
        } else {
            for j in 1..=diag + 1 {
                let (row, col) = (n + j - diag - 2, j - 1);
                let (a, b) = (u[(row - 1, col)], u[(row, col)]);
                // (T·U)[row, col] ∝ e^{jφ} cos(θ/2) a - sin(θ/2) b
                let theta = 2.0 * a.norm().atan2(b.norm());
                let phi = if a.norm() == 0.0 || b.norm() == 0.0 {
                    0.0
                } else {
                    b.arg() - a.arg()
                };
                let t = MziSetting::new(theta, phi)?;
                u.left_mul_2x2(row - 1, t.transfer());
                left.push((row - 1, t));
            }
        }
    }

    // U = T_l0† ... T_lK† · D · T_rM ... T_r0. Commute each T† through D:
    // T(θ,φ)† · diag(d1, d2) = diag(d1', d2') · T(θ, arg d1 - arg d2).
    let mut diag: Vec<C64> = (0..n).map(|k| u[(k, k)]).collect();
    let mut moved = Vec::with_capacity(left.len());
    for &(top, t) in left.iter().rev() {
        let (d1, d2) = (diag[top], diag[top + 1]);
        let k = -C64::from_polar(1.0, -t.theta());
        diag[top] = k * C64::from_polar(1.0, -t.phi()) * d2;
        diag[top + 1] = k * d2;
        moved.push((top, MziSetting::new(t.theta(), d1.arg() - d2.arg())?));
    }
    // Application order from the input side: T_r0 ... T_rM, then the
    // commuted left MZIs from T'_lK down to T'_l0.
    let sequence = right.into_iter().chain(moved);

    let mut mzis = vec![None; layout.mzi_count()];
    let mut depth = vec![0usize; n];
    for (top, setting) in sequence {
        let mut column = depth[top].max(depth[top + 1]);
        if column % 2 != top % 2 {
            column += 1;
        }
        let slot = layout
            .slot_index(column, top)
            .filter(|&i| mzis[i].is_none())
            .ok_or_else(|| Error::invalid(format!("no free mesh slot at column {column}, port {top}")))?;
        mzis[slot] = Some(setting);
        depth[top] = column + 1;
        depth[top + 1] = column + 1;
    }
    let mzis = mzis
        .into_iter()
        .map(|m| m.unwrap_or(MziSetting { theta: 0.0, phi: 0.0 }))
        .collect();

    let common = diag[0].arg();
    Ok(MeshParams {
        input_phases: vec![wrap_phase(common); n],
        mzis,
        output_phases: Some(diag.iter().map(|d| wrap_phase(d.arg() - common)).collect()),
    })
}
