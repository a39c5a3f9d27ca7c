//! Tensor fields and Lie-type derivatives along a vector field.
//!
//! Tensor fields store one scalar expression per component, contravariant
//! slots first. All derivative operators are symbolic; a flow-based
//! numerical oracle provides an independent cross-check for the holonomic
//! Lie derivative.

use crate::error::{Error, Result};
use crate::expr::{C64, Expr, Point};
use crate::geometry::{mat4, Frame, FrameContext, Mat4};

/// A tensor field of type (up, down): `4^(up+down)` scalar components,
/// indexed with all contravariant slots first.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorField {
    pub up: usize,
    pub down: usize,
    pub comps: Vec<Expr>,
}

/// All multi-indices of the given rank, each digit in 0..4, in
/// lexicographic order.
pub fn multi_indices(rank: usize) -> impl Iterator<Item = Vec<usize>> {
    (0..4usize.pow(rank as u32)).map(move |mut flat| {
        let mut idx = vec![0usize; rank];
        for slot in (0..rank).rev() {
            idx[slot] = flat % 4;
            flat /= 4;
        }
        idx
    })
}

fn flat_index(idx: &[usize]) -> usize {
    idx.iter().fold(0, |acc, &d| {
        debug_assert!(d < 4);
        acc * 4 + d
    })
}

impl TensorField {
    pub fn zeros(up: usize, down: usize) -> TensorField {
        TensorField {
            up,
            down,
            comps: vec![Expr::zero(); 4usize.pow((up + down) as u32)],
        }
    }

    pub fn from_fn<F: FnMut(&[usize]) -> Expr>(up: usize, down: usize, mut f: F) -> TensorField {
        let rank = up + down;
        TensorField {
            up,
            down,
            comps: multi_indices(rank).map(|idx| f(&idx)).collect(),
        }
    }

    pub fn scalar(e: Expr) -> TensorField {
        TensorField {
            up: 0,
            down: 0,
            comps: vec![e],
        }
    }

    pub fn rank(&self) -> usize {
        self.up + self.down
    }

    pub fn get(&self, idx: &[usize]) -> &Expr {
        debug_assert_eq!(idx.len(), self.rank());
        &self.comps[flat_index(idx)]
    }

    pub fn set(&mut self, idx: &[usize], e: Expr) {
        debug_assert_eq!(idx.len(), self.rank());
        let k = flat_index(idx);
        self.comps[k] = e;
    }

    pub fn map<F: FnMut(&Expr) -> Expr>(&self, mut f: F) -> TensorField {
        TensorField {
            up: self.up,
            down: self.down,
            comps: self.comps.iter().map(|e| f(e)).collect(),
        }
    }

    pub fn add(&self, other: &TensorField) -> TensorField {
        assert_eq!((self.up, self.down), (other.up, other.down));
        TensorField {
            up: self.up,
            down: self.down,
            comps: self
                .comps
                .iter()
                .zip(&other.comps)
                .map(|(a, b)| Expr::add(a.clone(), b.clone()))
                .collect(),
        }
    }

    pub fn sub(&self, other: &TensorField) -> TensorField {
        assert_eq!((self.up, self.down), (other.up, other.down));
        TensorField {
            up: self.up,
            down: self.down,
            comps: self
                .comps
                .iter()
                .zip(&other.comps)
                .map(|(a, b)| Expr::sub(a.clone(), b.clone()))
                .collect(),
        }
    }

    pub fn scale(&self, factor: &Expr) -> TensorField {
        self.map(|e| Expr::mul(factor.clone(), e.clone()))
    }

    /// Tensor product; contravariant slots of `self` then of `other`,
    /// covariant slots likewise.
    pub fn product(&self, other: &TensorField) -> TensorField {
        TensorField::from_fn(self.up + other.up, self.down + other.down, |idx| {
            let mut a = Vec::with_capacity(self.rank());
            let mut b = Vec::with_capacity(other.rank());
            a.extend_from_slice(&idx[..self.up]);
            b.extend_from_slice(&idx[self.up..self.up + other.up]);
            a.extend_from_slice(&idx[self.up + other.up..self.up + other.up + self.down]);
            b.extend_from_slice(&idx[self.up + other.up + self.down..]);
            Expr::mul(self.get(&a).clone(), other.get(&b).clone())
        })
    }

    /// Contraction of contravariant slot `up_slot` with covariant slot
    /// `down_slot` (both zero-based within their own groups).
    pub fn contract(&self, up_slot: usize, down_slot: usize) -> TensorField {
        assert!(up_slot < self.up && down_slot < self.down);
        TensorField::from_fn(self.up - 1, self.down - 1, |idx| {
            let mut acc = Expr::zero();
            for k in 0..4 {
                let mut full = Vec::with_capacity(self.rank());
                let mut it = idx.iter();
                for s in 0..self.up {
                    full.push(if s == up_slot { k } else { *it.next().unwrap() });
                }
                for s in 0..self.down {
                    full.push(if s == down_slot { k } else { *it.next().unwrap() });
                }
                acc = Expr::add(acc, self.get(&full).clone());
            }
            acc
        })
    }

    pub fn evaluate(&self, p: &Point) -> Result<Vec<C64>> {
        self.comps.iter().map(|e| e.evaluate(p)).collect()
    }
}

/// Largest component magnitude of `a - b` at the point.
pub fn max_residual(a: &TensorField, b: &TensorField, p: &Point) -> Result<f64> {
    assert_eq!((a.up, a.down), (b.up, b.down));
    let va = a.evaluate(p)?;
    let vb = b.evaluate(p)?;
    Ok(va
        .iter()
        .zip(&vb)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max))
}

/// Largest component magnitude of a tensor field at the point.
pub fn max_abs(a: &TensorField, p: &Point) -> Result<f64> {
    Ok(a.evaluate(p)?.iter().map(|x| x.norm()).fold(0.0, f64::max))
}

/// A vector field by its four scalar components in some frame.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub comps: [Expr; 4],
}

impl VectorField {
    pub fn new(comps: [Expr; 4]) -> VectorField {
        VectorField { comps }
    }

    pub fn zero() -> VectorField {
        VectorField::new(std::array::from_fn(|_| Expr::zero()))
    }

    pub fn as_tensor(&self) -> TensorField {
        TensorField {
            up: 1,
            down: 0,
            comps: self.comps.to_vec(),
        }
    }

    pub fn from_tensor(t: &TensorField) -> VectorField {
        assert_eq!((t.up, t.down), (1, 0));
        VectorField::new(std::array::from_fn(|i| t.comps[i].clone()))
    }
}

/// Holonomic Lie derivative: transport along the field, a negative
/// derivative-of-the-field term on every contravariant slot and a positive
/// one on every covariant slot.
pub fn lie_derivative_holonomic(x: &VectorField, y: &TensorField) -> TensorField {
    TensorField::from_fn(y.up, y.down, |idx| {
        let mut acc = Expr::zero();
        for k in 0..4 {
            acc = Expr::add(
                acc,
                Expr::mul(x.comps[k].clone(), y.get(idx).differentiate(k)),
            );
        }
        for s in 0..y.up {
            for k in 0..4 {
                let mut swapped = idx.to_vec();
                swapped[s] = k;
                acc = Expr::sub(
                    acc,
                    Expr::mul(x.comps[idx[s]].differentiate(k), y.get(&swapped).clone()),
                );
            }
        }
        for s in 0..y.down {
            let slot = y.up + s;
            for k in 0..4 {
                let mut swapped = idx.to_vec();
                swapped[slot] = k;
                acc = Expr::add(
                    acc,
                    Expr::mul(
                        x.comps[k].differentiate(idx[slot]),
                        y.get(&swapped).clone(),
                    ),
                );
            }
        }
        acc
    })
}

/// The slot action of a coefficient matrix `B^i_j = b[i][j]`: minus on
/// every contravariant slot, plus on every covariant slot. This is the
/// non-transport part shared by all generalized derivatives here.
pub fn slot_action(b: &Mat4, y: &TensorField) -> TensorField {
    TensorField::from_fn(y.up, y.down, |idx| {
        let mut acc = Expr::zero();
        for s in 0..y.up {
            for k in 0..4 {
                let mut swapped = idx.to_vec();
                swapped[s] = k;
                acc = Expr::sub(acc, Expr::mul(b[idx[s]][k].clone(), y.get(&swapped).clone()));
            }
        }
        for s in 0..y.down {
            let slot = y.up + s;
            for k in 0..4 {
                let mut swapped = idx.to_vec();
                swapped[slot] = k;
                acc = Expr::add(acc, Expr::mul(b[k][idx[slot]].clone(), y.get(&swapped).clone()));
            }
        }
        acc
    })
}

/// Generalized derivative in a frame: frame-directional transport along
/// the field plus the slot action of the supplied coefficient matrix.
pub fn generalized_lie_derivative(
    xf: &VectorField,
    v: &Mat4,
    y: &TensorField,
    frame: &Frame,
) -> TensorField {
    let transport = TensorField::from_fn(y.up, y.down, |idx| {
        let mut acc = Expr::zero();
        for m in 0..4 {
            acc = Expr::add(
                acc,
                Expr::mul(xf.comps[m].clone(), frame.dirderiv(m, y.get(idx))),
            );
        }
        acc
    });
    transport.add(&slot_action(v, y))
}

/// Which lift supplies the coefficient matrix of a generalized derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LiftVariant {
    Natural,
    Kosmann,
}

impl LiftVariant {
    pub fn parse(s: &str) -> Result<LiftVariant> {
        match s {
            "natural" => Ok(LiftVariant::Natural),
            "kosmann" => Ok(LiftVariant::Kosmann),
            other => Err(Error::VariantMismatch(format!(
                "unknown lift variant `{other}` (expected `natural` or `kosmann`)"
            ))),
        }
    }
}

/// Natural lift coefficients: frame derivatives of the field components
/// corrected by the commutation coefficients.
pub fn natural_lift(xf: &VectorField, ctx: &FrameContext) -> Mat4 {
    mat4(|i, j| {
        let mut acc = ctx.frame.dirderiv(j, &xf.comps[i]);
        for m in 0..4 {
            acc = Expr::sub(
                acc,
                Expr::mul(xf.comps[m].clone(), ctx.frame.c[i][m][j].clone()),
            );
        }
        acc
    })
}

/// Metric-skew lift coefficients, assembled directly from the frame-metric
/// components, their frame derivatives and the commutation coefficients.
/// Valid in any frame.
pub fn kosmann_lift(xf: &VectorField, ctx: &FrameContext) -> Mat4 {
    let gf = &ctx.g_frame;
    let gfi = &ctx.g_frame_inv;
    let frame = &ctx.frame;
    let half = |e: Expr| Expr::div(e, Expr::real(2.0));
    mat4(|i, j| {
        let mut acc = Expr::zero();
        for r in 0..4 {
            for m in 0..4 {
                acc = Expr::sub(
                    acc,
                    half(Expr::mul(
                        gfi[i][r].clone(),
                        Expr::mul(xf.comps[m].clone(), frame.dirderiv(m, &gf[r][j])),
                    )),
                );
            }
        }
        for s in 0..4 {
            for r in 0..4 {
                acc = Expr::sub(
                    acc,
                    half(Expr::mul(
                        gfi[i][s].clone(),
                        Expr::mul(frame.dirderiv(s, &xf.comps[r]), gf[r][j].clone()),
                    )),
                );
            }
        }
        acc = Expr::add(acc, half(frame.dirderiv(j, &xf.comps[i])));
        for m in 0..4 {
            acc = Expr::sub(
                acc,
                half(Expr::mul(xf.comps[m].clone(), frame.c[i][m][j].clone())),
            );
        }
        for s in 0..4 {
            for m in 0..4 {
                for r in 0..4 {
                    acc = Expr::add(
                        acc,
                        half(Expr::mul(
                            gfi[i][s].clone(),
                            Expr::mul(
                                xf.comps[m].clone(),
                                Expr::mul(frame.c[r][m][s].clone(), gf[r][j].clone()),
                            ),
                        )),
                    );
                }
            }
        }
        acc
    })
}

/// Lift coefficients for the chosen variant.
pub fn lift(variant: LiftVariant, xf: &VectorField, ctx: &FrameContext) -> Mat4 {
    match variant {
        LiftVariant::Natural => natural_lift(xf, ctx),
        LiftVariant::Kosmann => kosmann_lift(xf, ctx),
    }
}

/// Covariant derivative of the field components:
/// `∇_j X^i = L_{Υ_j}(X^i) + Σ_m Γ^i_{jm} X^m`, returned as `nabla[i][j]`.
pub fn covariant_matrix(xf: &VectorField, ctx: &FrameContext) -> Mat4 {
    mat4(|i, j| {
        let mut acc = ctx.frame.dirderiv(j, &xf.comps[i]);
        for m in 0..4 {
            acc = Expr::add(
                acc,
                Expr::mul(ctx.gamma[i][j][m].clone(), xf.comps[m].clone()),
            );
        }
        acc
    })
}

/// Metric-symmetric part of the covariant derivative of the field:
/// `S^i_j = (∇_j X^i + g^{is} ∇_s X^r g_{rj}) / 2`. The two lift variants
/// differ by exactly this matrix.
pub fn s_tensor(xf: &VectorField, ctx: &FrameContext) -> Mat4 {
    let nabla = covariant_matrix(xf, ctx);
    let half = |e: Expr| Expr::div(e, Expr::real(2.0));
    mat4(|i, j| {
        let mut acc = half(nabla[i][j].clone());
        for s in 0..4 {
            for r in 0..4 {
                acc = Expr::add(
                    acc,
                    half(Expr::mul(
                        ctx.g_frame_inv[i][s].clone(),
                        Expr::mul(nabla[r][s].clone(), ctx.g_frame[r][j].clone()),
                    )),
                );
            }
        }
        acc
    })
}

/// Metric-skew projection of a coefficient matrix: lower the first index,
/// keep the antisymmetric part, raise it back.
pub fn metric_skew_part(v: &Mat4, ctx: &FrameContext) -> Mat4 {
    let lowered = mat4(|i, j| {
        let mut acc = Expr::zero();
        for r in 0..4 {
            acc = Expr::add(
                acc,
                Expr::mul(v[r][i].clone(), ctx.g_frame[r][j].clone()),
            );
        }
        acc
    });
    let skew = mat4(|i, j| {
        Expr::div(
            Expr::sub(lowered[i][j].clone(), lowered[j][i].clone()),
            Expr::real(2.0),
        )
    });
    // Raise the first index again: V^i_j = g^{ir} skew_rj ... with the
    // lowering convention above, lowered[i][j] = V^r_i g_rj, so invert it:
    mat4(|i, j| {
        let mut acc = Expr::zero();
        for r in 0..4 {
            acc = Expr::add(
                acc,
                Expr::mul(ctx.g_frame_inv[i][r].clone(), skew[j][r].clone()),
            );
        }
        acc
    })
}

/// Frame-referred Lie derivative: the generalized derivative with the
/// natural lift.
pub fn lie_derivative_frame(xf: &VectorField, y: &TensorField, ctx: &FrameContext) -> TensorField {
    let v = natural_lift(xf, ctx);
    generalized_lie_derivative(xf, &v, y, &ctx.frame)
}

/// Metric (Kosmann-style) Lie derivative of a frame-referred tensor field.
pub fn kosmann_derivative(xf: &VectorField, y: &TensorField, ctx: &FrameContext) -> TensorField {
    let v = kosmann_lift(xf, ctx);
    generalized_lie_derivative(xf, &v, y, &ctx.frame)
}

/// Convert a tensor field with holonomic components to frame components.
pub fn to_frame(y: &TensorField, frame: &Frame) -> TensorField {
    transform(y, |i, a| frame.dual[i][a].clone(), |a, m| frame.u[a][m].clone())
}

/// Convert a tensor field with frame components to holonomic components.
pub fn to_holonomic(y: &TensorField, frame: &Frame) -> TensorField {
    transform(y, |a, m| frame.u[a][m].clone(), |m, a| frame.dual[m][a].clone())
}

fn transform<U, D>(y: &TensorField, up: U, down: D) -> TensorField
where
    U: Fn(usize, usize) -> Expr,
    D: Fn(usize, usize) -> Expr,
{
    let mut out = y.clone();
    for s in 0..y.up {
        out = contract_slot(&out, s, &up);
    }
    for s in 0..y.down {
        out = contract_slot(&out, y.up + s, &|new, old| down(old, new));
    }
    out
}

fn contract_slot<F: Fn(usize, usize) -> Expr>(y: &TensorField, slot: usize, m: &F) -> TensorField {
    TensorField::from_fn(y.up, y.down, |idx| {
        let mut acc = Expr::zero();
        for a in 0..4 {
            let mut src = idx.to_vec();
            src[slot] = a;
            acc = Expr::add(acc, Expr::mul(m(idx[slot], a), y.get(&src).clone()));
        }
        acc
    })
}

/// Bracket of two frame-referred vector fields, computed through holonomic
/// components.
pub fn bracket(x: &VectorField, y: &VectorField, frame: &Frame) -> VectorField {
    let hol = |v: &VectorField| -> [Expr; 4] {
        std::array::from_fn(|a| {
            let mut acc = Expr::zero();
            for m in 0..4 {
                acc = Expr::add(acc, Expr::mul(frame.u[a][m].clone(), v.comps[m].clone()));
            }
            acc
        })
    };
    let xh = hol(x);
    let yh = hol(y);
    let zh: [Expr; 4] = std::array::from_fn(|a| {
        let mut acc = Expr::zero();
        for b in 0..4 {
            acc = Expr::add(
                acc,
                Expr::sub(
                    Expr::mul(xh[b].clone(), yh[a].differentiate(b)),
                    Expr::mul(yh[b].clone(), xh[a].differentiate(b)),
                ),
            );
        }
        acc
    });
    VectorField::new(std::array::from_fn(|m| {
        let mut acc = Expr::zero();
        for a in 0..4 {
            acc = Expr::add(acc, Expr::mul(frame.dual[m][a].clone(), zh[a].clone()));
        }
        acc
    }))
}

/// Matrix commutator of two coefficient matrices.
pub fn mat_commutator(a: &Mat4, b: &Mat4) -> Mat4 {
    mat4(|i, j| {
        let mut acc = Expr::zero();
        for k in 0..4 {
            acc = Expr::add(
                acc,
                Expr::sub(
                    Expr::mul(a[i][k].clone(), b[k][j].clone()),
                    Expr::mul(b[i][k].clone(), a[k][j].clone()),
                ),
            );
        }
        acc
    })
}

/// Covariant derivative of a frame-referred tensor field; the new
/// covariant (direction) slot is appended last.
pub fn covariant_derivative_tensor(y: &TensorField, ctx: &FrameContext) -> TensorField {
    TensorField::from_fn(y.up, y.down + 1, |idx| {
        let (inner, dir) = (&idx[..idx.len() - 1], idx[idx.len() - 1]);
        let mut acc = ctx.frame.dirderiv(dir, y.get(inner));
        for s in 0..y.up {
            for k in 0..4 {
                let mut swapped = inner.to_vec();
                swapped[s] = k;
                acc = Expr::add(
                    acc,
                    Expr::mul(ctx.gamma[inner[s]][dir][k].clone(), y.get(&swapped).clone()),
                );
            }
        }
        for s in 0..y.down {
            let slot = y.up + s;
            for k in 0..4 {
                let mut swapped = inner.to_vec();
                swapped[slot] = k;
                acc = Expr::sub(
                    acc,
                    Expr::mul(ctx.gamma[k][dir][inner[slot]].clone(), y.get(&swapped).clone()),
                );
            }
        }
        acc
    })
}

/// Residual of the closure of metric Lie derivatives under the bracket:
/// the commutator of the operators minus the operator of the bracket
/// differs from zero by the slot action of the commutator of the two
/// symmetric-part matrices.
pub fn commutator_defect(
    x: &VectorField,
    y: &VectorField,
    t: &TensorField,
    ctx: &FrameContext,
) -> TensorField {
    let lx_ly = kosmann_derivative(x, &kosmann_derivative(y, t, ctx), ctx);
    let ly_lx = kosmann_derivative(y, &kosmann_derivative(x, t, ctx), ctx);
    let z = bracket(x, y, &ctx.frame);
    let lz = kosmann_derivative(&z, t, ctx);
    let sx = s_tensor(x, ctx);
    let sy = s_tensor(y, ctx);
    let comm = mat_commutator(&sx, &sy);
    lx_ly.sub(&ly_lx).sub(&lz).sub(&slot_action(&comm, t))
}

/// Residual of the reduction of the paired-derivation field: the
/// combination `L_X(S_Y) - L_Y(S_X) - S_[X,Y] + [S_X, S_Y]` (regular
/// frame Lie derivatives, with the S-matrices treated as (1,1) tensor
/// fields) collapses to `-[S_X, S_Y]`, so adding one more commutator
/// must give zero.
pub fn s_bracket_defect(x: &VectorField, y: &VectorField, ctx: &FrameContext) -> TensorField {
    let as_tensor = |m: &Mat4| TensorField::from_fn(1, 1, |idx| m[idx[0]][idx[1]].clone());
    let sx = s_tensor(x, ctx);
    let sy = s_tensor(y, ctx);
    let lx_sy = lie_derivative_frame(x, &as_tensor(&sy), ctx);
    let ly_sx = lie_derivative_frame(y, &as_tensor(&sx), ctx);
    let z = bracket(x, y, &ctx.frame);
    let sz = as_tensor(&s_tensor(&z, ctx));
    let comm = as_tensor(&mat_commutator(&sx, &sy));
    lx_sy
        .sub(&ly_sx)
        .sub(&sz)
        .add(&comm.scale(&Expr::real(2.0)))
}

/// Convergence report of the flow-based oracle: per-step-size maximum
/// componentwise error against the symbolic derivative, plus the fitted
/// log-log slope.
#[derive(Debug, Clone)]
pub struct OracleReport {
    pub eps: Vec<f64>,
    pub max_err: Vec<f64>,
    pub slope: f64,
}

const FLOW_STEPS: usize = 64;
const JACOBIAN_STEP: f64 = 1e-5;

fn rk4_flow(x: &VectorField, start: [f64; 4], eps: f64, bbox: &[[f64; 2]; 4]) -> Result<[f64; 4]> {
    let f = |q: [f64; 4]| -> Result<[f64; 4]> {
        let p = Point::new(q);
        let mut out = [0.0; 4];
        for i in 0..4 {
            out[i] = x.comps[i].evaluate_real(&p)?;
        }
        Ok(out)
    };
    let mut q = start;
    let h = eps / FLOW_STEPS as f64;
    for _ in 0..FLOW_STEPS {
        let k1 = f(q)?;
        let k2 = f(std::array::from_fn(|i| q[i] + 0.5 * h * k1[i]))?;
        let k3 = f(std::array::from_fn(|i| q[i] + 0.5 * h * k2[i]))?;
        let k4 = f(std::array::from_fn(|i| q[i] + h * k3[i]))?;
        for i in 0..4 {
            q[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        for i in 0..4 {
            let margin = 0.5 * (bbox[i][1] - bbox[i][0]).abs() + 1.0;
            if q[i] < bbox[i][0] - margin || q[i] > bbox[i][1] + margin {
                return Err(Error::FlowLeftBox { point: q });
            }
        }
    }
    Ok(q)
}

fn flow_jacobian(
    x: &VectorField,
    at: [f64; 4],
    eps: f64,
    bbox: &[[f64; 2]; 4],
) -> Result<[[f64; 4]; 4]> {
    let mut jac = [[0.0; 4]; 4];
    for k in 0..4 {
        let mut plus = at;
        plus[k] += JACOBIAN_STEP;
        let mut minus = at;
        minus[k] -= JACOBIAN_STEP;
        let fp = rk4_flow(x, plus, eps, bbox)?;
        let fm = rk4_flow(x, minus, eps, bbox)?;
        for i in 0..4 {
            jac[i][k] = (fp[i] - fm[i]) / (2.0 * JACOBIAN_STEP);
        }
    }
    Ok(jac)
}

/// Pullback of the tensor field through the time-`eps` flow of `x`,
/// evaluated at `p`: forward-flow Jacobians on contravariant slots,
/// backward-flow Jacobians on covariant slots, components at the
/// backward-transported point.
fn flow_pullback(
    x: &VectorField,
    y: &TensorField,
    p: [f64; 4],
    eps: f64,
    bbox: &[[f64; 2]; 4],
) -> Result<Vec<C64>> {
    let back = rk4_flow(x, p, -eps, bbox)?;
    let fwd_jac = flow_jacobian(x, back, eps, bbox)?;
    let back_jac = flow_jacobian(x, p, -eps, bbox)?;
    let vals = y.evaluate(&Point::new(back))?;
    let rank = y.rank();
    let mut out = Vec::with_capacity(vals.len());
    for idx in multi_indices(rank) {
        let mut acc = C64::new(0.0, 0.0);
        for src in multi_indices(rank) {
            let mut w = 1.0;
            for s in 0..y.up {
                w *= fwd_jac[idx[s]][src[s]];
            }
            for s in 0..y.down {
                let slot = y.up + s;
                w *= back_jac[src[slot]][idx[slot]];
            }
            if w != 0.0 {
                acc += vals[flat_index(&src)] * C64::new(w, 0.0);
            }
        }
        out.push(acc);
    }
    Ok(out)
}

/// Flow-based oracle for the holonomic Lie derivative: central difference
/// of pullbacks over each step size, compared componentwise against the
/// symbolic result, with a fitted convergence slope (second order is
/// expected from the central difference).
pub fn flow_oracle_lie(
    x: &VectorField,
    y: &TensorField,
    p: &Point,
    eps_list: &[f64],
    bbox: &[[f64; 2]; 4],
) -> Result<OracleReport> {
    let symbolic = lie_derivative_holonomic(x, y).evaluate(p)?;
    let mut max_err = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let plus = flow_pullback(x, y, p.0, eps, bbox)?;
        let minus = flow_pullback(x, y, p.0, -eps, bbox)?;
        let mut worst: f64 = 0.0;
        for (k, s) in symbolic.iter().enumerate() {
            let est = -(plus[k] - minus[k]) / C64::new(2.0 * eps, 0.0);
            worst = worst.max((est - s).norm());
        }
        max_err.push(worst);
    }
    let slope = fit_slope(eps_list, &max_err);
    Ok(OracleReport {
        eps: eps_list.to_vec(),
        max_err,
        slope,
    })
}

/// Least-squares slope of log(err) against log(eps). Errors at the
/// floating-point floor are clamped away from zero.
pub fn fit_slope(eps: &[f64], err: &[f64]) -> f64 {
    let xs: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = err.iter().map(|e| e.max(1e-300).ln()).collect();
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|v| v * v).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(a, b)| a * b).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::geometry::{mat4_zero, FrameKind, Metric};

    fn names() -> [String; 4] {
        ["t", "x", "y", "z"].map(|s| s.to_string())
    }

    fn ex(s: &str) -> Expr {
        parse(s, &names()).unwrap()
    }

    fn vf(c: [&str; 4]) -> VectorField {
        VectorField::new(c.map(ex))
    }

    fn minkowski_ctx() -> FrameContext {
        FrameContext::new(
            names(),
            Metric::minkowski(),
            Frame::new(FrameKind::Orthonormal, crate::geometry::mat4_identity(), true),
        )
    }

    fn rotation() -> VectorField {
        vf(["0", "-y", "x", "0"])
    }

    fn boost() -> VectorField {
        vf(["x", "t", "0", "0"])
    }

    fn quadratic() -> VectorField {
        vf(["t^2", "x", "0", "0"])
    }

    fn metric_tensor() -> TensorField {
        TensorField::from_fn(0, 2, |idx| {
            if idx[0] != idx[1] {
                Expr::zero()
            } else if idx[0] == 0 {
                Expr::one()
            } else {
                Expr::real(-1.0)
            }
        })
    }

    fn pt() -> Point {
        Point::new([0.3, 0.7, -0.4, 0.2])
    }

    #[test]
    fn lie_of_scalar_is_directional_derivative() {
        let x = quadratic();
        let f = TensorField::scalar(ex("t*x + y^2"));
        let lie = lie_derivative_holonomic(&x, &f);
        // X(f) = t^2 * x + x * t
        let expect = ex("t^2*x + x*t");
        let p = pt();
        assert!(
            (lie.comps[0].evaluate(&p).unwrap() - expect.evaluate(&p).unwrap()).norm() < 1e-12
        );
    }

    #[test]
    fn lie_of_vector_is_bracket() {
        let x = quadratic();
        let y = rotation();
        let lie = lie_derivative_holonomic(&x, &y.as_tensor());
        let br = bracket(&x, &y, &Frame::holonomic());
        let p = pt();
        assert!(max_residual(&lie, &br.as_tensor(), &p).unwrap() < 1e-12);
    }

    #[test]
    fn killing_fields_annihilate_minkowski_metric() {
        let g = metric_tensor();
        let p = pt();
        for x in [vf(["1", "0", "0", "0"]), rotation(), boost()] {
            let lie = lie_derivative_holonomic(&x, &g);
            assert!(max_abs(&lie, &p).unwrap() < 1e-12);
        }
    }

    #[test]
    fn dilation_scales_minkowski_metric() {
        // L_X g = -2 g for the dilation field X = t∂t + x∂x + y∂y + z∂z
        // with the lower-slot sign convention... check numerically.
        let x = vf(["t", "x", "y", "z"]);
        let g = metric_tensor();
        let lie = lie_derivative_holonomic(&x, &g);
        let p = pt();
        let expect = g.scale(&Expr::real(2.0));
        assert!(max_residual(&lie, &expect, &p).unwrap() < 1e-12);
    }

    #[test]
    fn leibniz_rule_for_tensor_product() {
        let x = quadratic();
        let a = rotation().as_tensor();
        let b = TensorField::from_fn(0, 1, |idx| [ex("t"), ex("x*y"), ex("z"), ex("1")][idx[0]].clone());
        let prod = a.product(&b);
        let lhs = lie_derivative_holonomic(&x, &prod);
        let rhs = lie_derivative_holonomic(&x, &a)
            .product(&b)
            .add(&a.product(&lie_derivative_holonomic(&x, &b)));
        assert!(max_residual(&lhs, &rhs, &pt()).unwrap() < 1e-12);
    }

    #[test]
    fn lie_commutes_with_contraction() {
        let x = quadratic();
        let t = TensorField::from_fn(1, 1, |idx| match (idx[0], idx[1]) {
            (0, 0) => ex("t*x"),
            (1, 2) => ex("y^2"),
            (2, 1) => ex("z"),
            (3, 3) => ex("t + x"),
            _ => Expr::zero(),
        });
        let lhs = lie_derivative_holonomic(&x, &t).contract(0, 0);
        let rhs = lie_derivative_holonomic(&x, &t.contract(0, 0));
        assert!(max_residual(&lhs, &rhs, &pt()).unwrap() < 1e-12);
    }

    #[test]
    fn frame_path_agrees_with_holonomic_in_identity_frame() {
        let ctx = minkowski_ctx();
        let x = quadratic();
        let t = TensorField::from_fn(1, 1, |idx| match (idx[0], idx[1]) {
            (0, 1) => ex("t*y"),
            (2, 3) => ex("x^2 - z"),
            _ => Expr::zero(),
        });
        let lhs = lie_derivative_frame(&x, &t, &ctx);
        let rhs = lie_derivative_holonomic(&x, &t);
        assert!(max_residual(&lhs, &rhs, &pt()).unwrap() < 1e-12);
    }

    #[test]
    fn frame_path_agrees_with_holonomic_through_conversion() {
        // Nontrivial orthonormal frame on Minkowski in spherical-like
        // coordinates: reuse names t, x(=r), y(=theta), z(=phi).
        let nm = names();
        let exs = |s: &str| parse(s, &nm).unwrap();
        let mut g = mat4_zero();
        g[0][0] = Expr::one();
        g[1][1] = Expr::real(-1.0);
        g[2][2] = exs("-x^2");
        g[3][3] = exs("-x^2*sin(y)^2");
        let mut u = mat4_zero();
        u[0][0] = Expr::one();
        u[1][1] = Expr::one();
        u[2][2] = exs("1/x");
        u[3][3] = exs("1/(x*sin(y))");
        let frame = Frame::new(FrameKind::Orthonormal, u, true);
        let ctx = FrameContext::new(nm.clone(), Metric { g }, frame);
        let x_hol = VectorField::new([exs("t*x"), exs("x^2"), exs("0"), exs("0")]);
        let t_hol = TensorField::from_fn(1, 1, |idx| match (idx[0], idx[1]) {
            (0, 1) => exs("t"),
            (1, 2) => exs("x*y"),
            _ => Expr::zero(),
        });
        let lie_hol = lie_derivative_holonomic(&x_hol, &t_hol);
        let xf = VectorField::from_tensor(&to_frame(&x_hol.as_tensor(), &ctx.frame));
        let tf = to_frame(&t_hol, &ctx.frame);
        let lie_frame = lie_derivative_frame(&xf, &tf, &ctx);
        let back = to_holonomic(&lie_frame, &ctx.frame);
        let p = Point::new([0.3, 2.5, 0.9, 0.7]);
        assert!(max_residual(&lie_hol, &back, &p).unwrap() < 1e-9);
    }

    #[test]
    fn kosmann_equals_natural_minus_symmetric_part() {
        let ctx = minkowski_ctx();
        let x = quadratic();
        let vn = natural_lift(&x, &ctx);
        let vk = kosmann_lift(&x, &ctx);
        let s = s_tensor(&x, &ctx);
        let p = pt();
        for i in 0..4 {
            for j in 0..4 {
                let lhs = vk[i][j].evaluate(&p).unwrap();
                let rhs = vn[i][j].evaluate(&p).unwrap() - s[i][j].evaluate(&p).unwrap();
                assert!((lhs - rhs).norm() < 1e-12, "({i},{j}): {lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn kosmann_lift_is_metric_skew() {
        let ctx = minkowski_ctx();
        let x = quadratic();
        let vk = kosmann_lift(&x, &ctx);
        let skew = metric_skew_part(&vk, &ctx);
        let p = pt();
        for i in 0..4 {
            for j in 0..4 {
                let a = vk[i][j].evaluate(&p).unwrap();
                let b = skew[i][j].evaluate(&p).unwrap();
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn lifts_agree_for_killing_fields() {
        let ctx = minkowski_ctx();
        let p = pt();
        for x in [rotation(), boost()] {
            let vn = natural_lift(&x, &ctx);
            let vk = kosmann_lift(&x, &ctx);
            for i in 0..4 {
                for j in 0..4 {
                    let a = vn[i][j].evaluate(&p).unwrap();
                    let b = vk[i][j].evaluate(&p).unwrap();
                    assert!((a - b).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn kosmann_annihilates_frame_metric() {
        let ctx = minkowski_ctx();
        let g = ctx.g_frame_tensor();
        let p = pt();
        for x in [rotation(), quadratic(), vf(["t", "x", "y", "z"])] {
            let lie = kosmann_derivative(&x, &g, &ctx);
            assert!(max_abs(&lie, &p).unwrap() < 1e-12, "field failed");
        }
    }

    #[test]
    fn orthonormal_kosmann_lift_shortcut() {
        // In an orthonormal frame the lift reduces to
        // -(1/2) g^{is} ∇_s X^r g_{rj} + (1/2) ∇_j X^i - Σ_m X^m Γ^i_{mj}.
        let nm = names();
        let exs = |s: &str| parse(s, &nm).unwrap();
        let mut g = mat4_zero();
        g[0][0] = Expr::one();
        g[1][1] = Expr::real(-1.0);
        g[2][2] = exs("-x^2");
        g[3][3] = exs("-x^2*sin(y)^2");
        let mut u = mat4_zero();
        u[0][0] = Expr::one();
        u[1][1] = Expr::one();
        u[2][2] = exs("1/x");
        u[3][3] = exs("1/(x*sin(y))");
        let ctx = FrameContext::new(
            nm.clone(),
            Metric { g },
            Frame::new(FrameKind::Orthonormal, u, true),
        );
        let x = VectorField::new([exs("t"), exs("x*sin(y)"), exs("t*x"), exs("1")]);
        let full = kosmann_lift(&x, &ctx);
        let nabla = covariant_matrix(&x, &ctx);
        let p = Point::new([0.3, 2.5, 0.9, 0.7]);
        for i in 0..4 {
            for j in 0..4 {
                let mut short = C64::new(0.0, 0.0);
                for s in 0..4 {
                    for r in 0..4 {
                        short -= ctx.g_frame_inv[i][s].evaluate(&p).unwrap()
                            * nabla[r][s].evaluate(&p).unwrap()
                            * ctx.g_frame[r][j].evaluate(&p).unwrap()
                            / C64::new(2.0, 0.0);
                    }
                }
                short += nabla[i][j].evaluate(&p).unwrap() / C64::new(2.0, 0.0);
                for m in 0..4 {
                    short -= x.comps[m].evaluate(&p).unwrap()
                        * ctx.gamma[i][m][j].evaluate(&p).unwrap();
                }
                let v = full[i][j].evaluate(&p).unwrap();
                assert!((v - short).norm() < 1e-10, "({i},{j}): {v} vs {short}");
            }
        }
    }

    #[test]
    fn covariant_derivative_of_metric_vanishes() {
        let nm = names();
        let exs = |s: &str| parse(s, &nm).unwrap();
        let mut g = mat4_zero();
        g[0][0] = exs("1 - 2/x");
        g[1][1] = exs("-1/(1 - 2/x)");
        g[2][2] = exs("-x^2");
        g[3][3] = exs("-x^2*sin(y)^2");
        let metric = Metric { g };
        let ctx = FrameContext::holonomic(nm, metric);
        let gt = ctx.g_frame_tensor();
        let nabla = covariant_derivative_tensor(&gt, &ctx);
        let p = Point::new([0.3, 4.0, 0.9, 0.7]);
        assert!(max_abs(&nabla, &p).unwrap() < 1e-10);
    }

    #[test]
    fn commutator_defect_vanishes() {
        let ctx = minkowski_ctx();
        let x = quadratic();
        let y = vf(["x*y", "t", "z^2", "0"]);
        let t = TensorField::from_fn(1, 1, |idx| match (idx[0], idx[1]) {
            (0, 1) => ex("t*y"),
            (2, 3) => ex("x^2 - z"),
            (1, 0) => ex("z"),
            _ => Expr::zero(),
        });
        let defect = commutator_defect(&x, &y, &t, &ctx);
        assert!(max_abs(&defect, &pt()).unwrap() < 1e-9);
    }

    #[test]
    fn s_bracket_defect_vanishes() {
        let ctx = minkowski_ctx();
        let x = quadratic();
        let y = vf(["x*y", "t", "z^2", "0"]);
        let defect = s_bracket_defect(&x, &y, &ctx);
        assert!(max_abs(&defect, &pt()).unwrap() < 1e-9);
    }

    #[test]
    fn flow_oracle_converges_second_order() {
        let bbox = [[-2.0, 2.0]; 4];
        let x = vf(["0.3*x", "0.2*t", "0.1", "0"]);
        let y = TensorField::from_fn(1, 1, |idx| match (idx[0], idx[1]) {
            (0, 0) => ex("t*x"),
            (1, 2) => ex("y^2"),
            _ => Expr::zero(),
        });
        let eps = [1e-2, 5e-3, 2.5e-3];
        let rep = flow_oracle_lie(&x, &y, &pt(), &eps, &bbox).unwrap();
        assert!(
            rep.max_err[0] < 1e-4,
            "oracle error too large: {:?}",
            rep.max_err
        );
        assert!(
            rep.slope > 1.5 && rep.slope < 2.5,
            "slope {} errs {:?}",
            rep.slope,
            rep.max_err
        );
    }

    #[test]
    fn flow_leaving_box_is_reported() {
        let bbox = [[-0.1, 0.1]; 4];
        let x = vf(["10", "0", "0", "0"]);
        let y = vf(["1", "0", "0", "0"]).as_tensor();
        let err = flow_oracle_lie(&x, &y, &Point::new([0.0; 4]), &[1.0], &bbox).unwrap_err();
        assert!(matches!(err, Error::FlowLeftBox { .. }));
    }
}
