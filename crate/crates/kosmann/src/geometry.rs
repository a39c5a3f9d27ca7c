//! Metric, frames, commutation coefficients and connection coefficients.
//!
//! Everything here is symbolic: the commutation coefficients come from a
//! per-expression bracket followed by a symbolic linear solve against the
//! frame matrix (adjugate over determinant), so all derived quantities stay
//! differentiable.

use crate::error::{Error, Result};
use crate::expr::{C64, Expr, Point};
use crate::spin::{SpinConnection, SpinMetric, InfeldVanDerWaerden};

pub type Mat4 = [[Expr; 4]; 4];
/// Connection-style array indexed `[k][i][j]` for `Γ^k_ij` / `c^k_ij`.
pub type Con3 = [[[Expr; 4]; 4]; 4];

pub fn mat4<F: FnMut(usize, usize) -> Expr>(mut f: F) -> Mat4 {
    std::array::from_fn(|i| std::array::from_fn(|j| f(i, j)))
}

pub fn con3<F: FnMut(usize, usize, usize) -> Expr>(mut f: F) -> Con3 {
    std::array::from_fn(|k| std::array::from_fn(|i| std::array::from_fn(|j| f(k, i, j))))
}

pub fn mat4_zero() -> Mat4 {
    mat4(|_, _| Expr::zero())
}

pub fn mat4_identity() -> Mat4 {
    mat4(|i, j| if i == j { Expr::one() } else { Expr::zero() })
}

/// Constant Minkowski matrix diag(1, -1, -1, -1).
pub fn minkowski() -> Mat4 {
    mat4(|i, j| {
        if i != j {
            Expr::zero()
        } else if i == 0 {
            Expr::one()
        } else {
            Expr::real(-1.0)
        }
    })
}

fn det3(m: &Mat4, rows: [usize; 3], cols: [usize; 3]) -> Expr {
    let e = |r: usize, c: usize| m[rows[r]][cols[c]].clone();
    let term = |a: usize, b: usize, c: usize| {
        Expr::mul(e(0, a), Expr::mul(e(1, b), e(2, c)))
    };
    Expr::sub(
        Expr::add(
            Expr::add(term(0, 1, 2), term(1, 2, 0)),
            term(2, 0, 1),
        ),
        Expr::add(
            Expr::add(term(2, 1, 0), term(1, 0, 2)),
            term(0, 2, 1),
        ),
    )
}

fn drop_index(skip: usize) -> [usize; 3] {
    let mut out = [0usize; 3];
    let mut w = 0;
    for v in 0..4 {
        if v != skip {
            out[w] = v;
            w += 1;
        }
    }
    out
}

/// Symbolic determinant of a 4x4 expression matrix (cofactor expansion).
pub fn det4(m: &Mat4) -> Expr {
    let mut acc = Expr::zero();
    for j in 0..4 {
        let minor = det3(m, drop_index(0), drop_index(j));
        let term = Expr::mul(m[0][j].clone(), minor);
        acc = if j % 2 == 0 {
            Expr::add(acc, term)
        } else {
            Expr::sub(acc, term)
        };
    }
    acc
}

/// Symbolic inverse via adjugate over determinant.
pub fn mat4_inverse(m: &Mat4) -> Mat4 {
    let det = det4(m);
    mat4(|i, j| {
        // inv[i][j] = (-1)^(i+j) * minor(j, i) / det
        let minor = det3(m, drop_index(j), drop_index(i));
        let signed = if (i + j) % 2 == 0 {
            minor
        } else {
            Expr::neg(minor)
        };
        Expr::div(signed, det.clone())
    })
}

pub fn mat4_eval(m: &Mat4, p: &Point) -> Result<[[C64; 4]; 4]> {
    let mut out = [[C64::new(0.0, 0.0); 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = m[i][j].evaluate(p)?;
        }
    }
    Ok(out)
}

/// Space-time metric given by its holonomic components `g_ij`,
/// signature (+,-,-,-).
#[derive(Debug, Clone)]
pub struct Metric {
    pub g: Mat4,
}

impl Metric {
    pub fn new(g: Mat4, names: &[String; 4]) -> Result<Metric> {
        for i in 0..4 {
            for j in (i + 1)..4 {
                if g[i][j].print(names) != g[j][i].print(names) {
                    return Err(Error::Validation(format!(
                        "metric not symmetric: g[{i}][{j}] = `{}` but g[{j}][{i}] = `{}`",
                        g[i][j].print(names),
                        g[j][i].print(names)
                    )));
                }
            }
        }
        Ok(Metric { g })
    }

    pub fn minkowski() -> Metric {
        Metric { g: minkowski() }
    }

    /// Symbolic inverse metric `g^ij`.
    pub fn inverse(&self) -> Mat4 {
        mat4_inverse(&self.g)
    }

    /// Gate: |det g| must exceed 1e-12 at the point.
    pub fn check_nondegenerate(&self, p: &Point) -> Result<()> {
        let d = det4(&self.g).evaluate(p)?;
        if d.norm() <= 1e-12 {
            return Err(Error::SingularMatrix { point: p.0 });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameKind {
    Holonomic,
    General,
    Orthonormal,
}

/// A frame of four vector fields `Υ_m` with coordinate components
/// `Υ^i_m = u[i][m]`, its dual covector frame `η^k` (`dual[k][a]`) and the
/// commutation coefficients `c^k_ij` from `[Υ_i, Υ_j] = Σ_k c^k_ij Υ_k`.
#[derive(Debug, Clone)]
pub struct Frame {
    pub kind: FrameKind,
    pub u: Mat4,
    pub time_oriented: bool,
    pub dual: Mat4,
    pub c: Con3,
}

impl Frame {
    pub fn new(kind: FrameKind, u: Mat4, time_oriented: bool) -> Frame {
        let dual = mat4_inverse(&u);
        let c = commutation_coefficients(&u, &dual);
        Frame {
            kind,
            u,
            time_oriented,
            dual,
            c,
        }
    }

    pub fn holonomic() -> Frame {
        Frame {
            kind: FrameKind::Holonomic,
            u: mat4_identity(),
            time_oriented: true,
            dual: mat4_identity(),
            c: con3(|_, _, _| Expr::zero()),
        }
    }

    pub fn is_holonomic_identity(&self) -> bool {
        self.u == mat4_identity()
    }

    /// Directional derivative `L_{Υ_m}(f) = Σ_a Υ^a_m ∂_a f` of a scalar.
    pub fn dirderiv(&self, m: usize, f: &Expr) -> Expr {
        let mut acc = Expr::zero();
        for a in 0..4 {
            acc = Expr::add(
                acc,
                Expr::mul(self.u[a][m].clone(), f.differentiate(a)),
            );
        }
        acc
    }
}

/// Commutation coefficients of a frame: the coordinate components of each
/// bracket `[Υ_i, Υ_j]` expanded by the product rule, then resolved in the
/// frame basis through the dual frame. Antisymmetry in (i, j) holds by
/// construction.
pub fn commutation_coefficients(u: &Mat4, dual: &Mat4) -> Con3 {
    let mut bracket = vec![vec![vec![Expr::zero(); 4]; 4]; 4]; // [a][i][j], i < j
    for i in 0..4 {
        for j in (i + 1)..4 {
            for a in 0..4 {
                let mut acc = Expr::zero();
                for m in 0..4 {
                    acc = Expr::add(
                        acc,
                        Expr::sub(
                            Expr::mul(u[m][i].clone(), u[a][j].differentiate(m)),
                            Expr::mul(u[m][j].clone(), u[a][i].differentiate(m)),
                        ),
                    );
                }
                bracket[a][i][j] = acc;
            }
        }
    }
    let mut lower = con3(|_, _, _| Expr::zero());
    for k in 0..4 {
        for i in 0..4 {
            for j in (i + 1)..4 {
                let mut acc = Expr::zero();
                for a in 0..4 {
                    acc = Expr::add(
                        acc,
                        Expr::mul(dual[k][a].clone(), bracket[a][i][j].clone()),
                    );
                }
                lower[k][i][j] = acc.clone();
                lower[k][j][i] = Expr::neg(acc);
            }
        }
    }
    lower
}

/// Levi-Civita connection components in the holonomic frame.
pub fn christoffel_holonomic(metric: &Metric) -> Con3 {
    let ginv = metric.inverse();
    con3(|k, i, j| {
        let mut acc = Expr::zero();
        for r in 0..4 {
            let sum = Expr::sub(
                Expr::add(
                    metric.g[r][j].differentiate(i),
                    metric.g[i][r].differentiate(j),
                ),
                metric.g[i][j].differentiate(r),
            );
            acc = Expr::add(
                acc,
                Expr::mul(Expr::div(ginv[k][r].clone(), Expr::real(2.0)), sum),
            );
        }
        acc
    })
}

/// Levi-Civita connection components in a general frame: frame derivatives
/// of the frame-metric components plus the commutation-coefficient terms.
/// With constant frame-metric components the derivative terms vanish,
/// leaving the orthonormal-frame special case; in a holonomic frame the
/// c-terms vanish and the formula reduces to the holonomic one.
pub fn christoffel_frame(g_frame: &Mat4, g_frame_inv: &Mat4, frame: &Frame) -> Con3 {
    con3(|k, i, j| {
        let mut acc = Expr::zero();
        for r in 0..4 {
            let sum = Expr::sub(
                Expr::add(
                    frame.dirderiv(i, &g_frame[r][j]),
                    frame.dirderiv(j, &g_frame[i][r]),
                ),
                frame.dirderiv(r, &g_frame[i][j]),
            );
            acc = Expr::add(
                acc,
                Expr::mul(Expr::div(g_frame_inv[k][r].clone(), Expr::real(2.0)), sum),
            );
        }
        acc = Expr::add(acc, Expr::div(frame.c[k][i][j].clone(), Expr::real(2.0)));
        for r in 0..4 {
            for s in 0..4 {
                acc = Expr::sub(
                    acc,
                    Expr::mul(
                        Expr::div(frame.c[s][i][r].clone(), Expr::real(2.0)),
                        Expr::mul(
                            g_frame_inv[k][r].clone(),
                            g_frame[s][j].clone(),
                        ),
                    ),
                );
                acc = Expr::sub(
                    acc,
                    Expr::mul(
                        Expr::div(frame.c[s][j][r].clone(), Expr::real(2.0)),
                        Expr::mul(
                            g_frame_inv[k][r].clone(),
                            g_frame[s][i].clone(),
                        ),
                    ),
                );
            }
        }
        acc
    })
}

/// A metric plus a frame with everything derived from them: the
/// frame-metric components and their inverse, and the Levi-Civita
/// connection components referred to that frame.
#[derive(Debug, Clone)]
pub struct FrameContext {
    pub names: [String; 4],
    pub metric: Metric,
    pub frame: Frame,
    pub g_frame: Mat4,
    pub g_frame_inv: Mat4,
    pub gamma: Con3,
}

impl FrameContext {
    pub fn new(names: [String; 4], metric: Metric, frame: Frame) -> FrameContext {
        let (g_frame, g_frame_inv) = match frame.kind {
            FrameKind::Orthonormal => (minkowski(), minkowski()),
            FrameKind::Holonomic => (metric.g.clone(), metric.inverse()),
            FrameKind::General => {
                let gf = mat4(|i, j| {
                    let mut acc = Expr::zero();
                    for a in 0..4 {
                        for b in 0..4 {
                            acc = Expr::add(
                                acc,
                                Expr::mul(
                                    frame.u[a][i].clone(),
                                    Expr::mul(frame.u[b][j].clone(), metric.g[a][b].clone()),
                                ),
                            );
                        }
                    }
                    acc
                });
                let gfi = mat4_inverse(&gf);
                (gf, gfi)
            }
        };
        let gamma = match frame.kind {
            FrameKind::Holonomic => christoffel_holonomic(&metric),
            _ => christoffel_frame(&g_frame, &g_frame_inv, &frame),
        };
        FrameContext {
            names,
            metric,
            frame,
            g_frame,
            g_frame_inv,
            gamma,
        }
    }

    pub fn holonomic(names: [String; 4], metric: Metric) -> FrameContext {
        FrameContext::new(names, metric, Frame::holonomic())
    }

    /// Frame-metric as a (0,2) tensor field in the frame.
    pub fn g_frame_tensor(&self) -> crate::lie::TensorField {
        crate::lie::TensorField::from_fn(0, 2, |idx| self.g_frame[idx[0]][idx[1]].clone())
    }
}

/// Validation gates evaluated at a sample point.
pub mod checks {
    use super::*;

    /// Duality residual `max |η^i(Υ_j) - δ^i_j|`.
    pub fn duality_residual(frame: &Frame, p: &Point) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                let mut acc = C64::new(0.0, 0.0);
                for a in 0..4 {
                    acc += frame.dual[i][a].evaluate(p)? * frame.u[a][j].evaluate(p)?;
                }
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((acc - C64::new(target, 0.0)).norm());
            }
        }
        Ok(worst)
    }

    /// Residual of the evaluated frame-metric against the Minkowski matrix.
    pub fn orthonormality_residual(metric: &Metric, frame: &Frame, p: &Point) -> Result<f64> {
        let g = mat4_eval(&metric.g, p)?;
        let u = mat4_eval(&frame.u, p)?;
        let mut worst: f64 = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                let mut acc = C64::new(0.0, 0.0);
                for a in 0..4 {
                    for b in 0..4 {
                        acc += u[a][i] * u[b][j] * g[a][b];
                    }
                }
                let target = if i != j {
                    0.0
                } else if i == 0 {
                    1.0
                } else {
                    -1.0
                };
                worst = worst.max((acc - C64::new(target, 0.0)).norm());
            }
        }
        Ok(worst)
    }

    /// `g · g⁻¹ = 1` residual for the symbolic inverse metric.
    pub fn metric_inverse_residual(metric: &Metric, inv: &Mat4, p: &Point) -> Result<f64> {
        let g = mat4_eval(&metric.g, p)?;
        let gi = mat4_eval(inv, p)?;
        let mut worst: f64 = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                let mut acc = C64::new(0.0, 0.0);
                for k in 0..4 {
                    acc += g[i][k] * gi[k][j];
                }
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((acc - C64::new(target, 0.0)).norm());
            }
        }
        Ok(worst)
    }

    /// Positive frame-matrix determinant (handedness gate).
    pub fn handedness(frame: &Frame, p: &Point) -> Result<bool> {
        let d = det4(&frame.u).evaluate(p)?;
        Ok(d.re > 0.0 && d.im.abs() < 1e-9)
    }

    /// Torsion relation `Γ^k_ij - Γ^k_ji = c^k_ij` residual.
    pub fn torsion_residual(ctx: &FrameContext, p: &Point) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for k in 0..4 {
            for i in 0..4 {
                for j in 0..4 {
                    let lhs = ctx.gamma[k][i][j].evaluate(p)? - ctx.gamma[k][j][i].evaluate(p)?;
                    let rhs = ctx.frame.c[k][i][j].evaluate(p)?;
                    worst = worst.max((lhs - rhs).norm());
                }
            }
        }
        Ok(worst)
    }

    /// Index identity `Σ g^{is} Γ^r_{ms} g_{rj} = -Γ^i_{mj}` residual
    /// (orthonormal frames).
    pub fn metricity_index_residual(ctx: &FrameContext, p: &Point) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for i in 0..4 {
            for m in 0..4 {
                for j in 0..4 {
                    let mut acc = C64::new(0.0, 0.0);
                    for r in 0..4 {
                        for s in 0..4 {
                            acc += ctx.g_frame_inv[i][s].evaluate(p)?
                                * ctx.gamma[r][m][s].evaluate(p)?
                                * ctx.g_frame[r][j].evaluate(p)?;
                        }
                    }
                    let rhs = -ctx.gamma[i][m][j].evaluate(p)?;
                    worst = worst.max((acc - rhs).norm());
                }
            }
        }
        Ok(worst)
    }
}

/// Spinor components of the metric connection, general-frame form: the
/// Γ-contraction with the Infeld-van der Waerden field plus the frame
/// derivatives of the field and of the conjugate spinor metric. In a
/// canonical pair (constant G and d) the last two terms vanish.
pub fn spin_connection(
    gamma: &Con3,
    frame: &Frame,
    g: &InfeldVanDerWaerden,
    ginv: &crate::spin::InverseIvw,
    d: &SpinMetric,
) -> SpinConnection {
    let quarter = |e: Expr| Expr::div(e, Expr::real(4.0));
    let dbar = |i: usize, j: usize| Expr::conj(d.lower[i][j].clone());
    let dbar_inv = |i: usize, j: usize| Expr::conj(d.upper[i][j].clone());
    let a = std::array::from_fn(|r| {
        // trace term over the conjugate spinor metric
        let mut tr = Expr::zero();
        for ib in 0..2 {
            for jb in 0..2 {
                tr = Expr::add(
                    tr,
                    Expr::mul(frame.dirderiv(r, &dbar(jb, ib)), dbar_inv(ib, jb)),
                );
            }
        }
        std::array::from_fn(|i| {
            std::array::from_fn(|j| {
                let mut acc = Expr::zero();
                for k in 0..4 {
                    for m in 0..4 {
                        for sb in 0..2 {
                            acc = Expr::add(
                                acc,
                                quarter(Expr::mul(
                                    g.comp(i, sb, k),
                                    Expr::mul(gamma[k][r][m].clone(), ginv.comp(m, j, sb)),
                                )),
                            );
                        }
                    }
                }
                for q in 0..4 {
                    for sb in 0..2 {
                        acc = Expr::sub(
                            acc,
                            quarter(Expr::mul(
                                frame.dirderiv(r, &g.comp(i, sb, q)),
                                ginv.comp(q, j, sb),
                            )),
                        );
                    }
                }
                if i == j {
                    acc = Expr::sub(acc, quarter(tr.clone()));
                }
                acc
            })
        })
    });
    SpinConnection { a }
}
