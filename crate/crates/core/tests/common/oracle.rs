//! Brute-force Cartesian geometry on C² for U(2)-invariant metrics.
//!
//! Tensors are evaluated at an arbitrary point z (not only on the first
//! coordinate axis). The metric comes from the chain rule applied to the
//! analytic potential; everything else (Christoffel symbols, curvature, Ricci,
//! covariant derivatives) is produced by finite differences in the four real
//! coordinates and contracted in a unitary frame built by Cholesky.

#![allow(dead_code)]

use num_complex::Complex64 as C;

pub type Z = [C; 2];

/// Radial data: derivatives P'(u), P''(u) of a potential, and of a test
/// function h (h', h'').
pub struct Radial<'a> {
    pub p1: &'a dyn Fn(f64) -> f64,
    pub p2: &'a dyn Fn(f64) -> f64,
}

fn norm_sq(z: &Z) -> f64 {
    z[0].norm_sqr() + z[1].norm_sqr()
}

/// g_{i j̄} = P' δ_ij + P'' z̄_i z_j.
pub fn metric(r: &Radial, z: &Z) -> [[C; 2]; 2] {
    let u = norm_sq(z);
    let (a, b) = ((r.p1)(u), (r.p2)(u));
    let mut g = [[C::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            g[i][j] = z[i].conj() * z[j] * b;
            if i == j {
                g[i][j] += a;
            }
        }
    }
    g
}

/// i∂∂̄h in coordinates, from h' and h''.
pub fn ddbar(h1: &dyn Fn(f64) -> f64, h2: &dyn Fn(f64) -> f64, z: &Z) -> [[C; 2]; 2] {
    metric(&Radial { p1: h1, p2: h2 }, z)
}

fn shift(z: &Z, dir: usize, t: f64) -> Z {
    let mut w = *z;
    let k = dir / 2;
    if dir % 2 == 0 {
        w[k] += C::new(t, 0.0);
    } else {
        w[k] += C::new(0.0, t);
    }
    w
}

/// Fourth-order central difference along real direction `dir`
/// (0 = x1, 1 = y1, 2 = x2, 3 = y2) of a vector-valued function.
pub fn dreal(f: &dyn Fn(&Z) -> Vec<C>, z: &Z, dir: usize, h: f64) -> Vec<C> {
    let a = f(&shift(z, dir, 2.0 * h));
    let b = f(&shift(z, dir, h));
    let c = f(&shift(z, dir, -h));
    let d = f(&shift(z, dir, -2.0 * h));
    (0..a.len())
        .map(|i| (-a[i] + b[i] * 8.0 - c[i] * 8.0 + d[i]) / (12.0 * h))
        .collect()
}

/// ∂/∂z_k (holomorphic = false gives ∂/∂z̄_k).
pub fn dz(f: &dyn Fn(&Z) -> Vec<C>, z: &Z, k: usize, holo: bool, h: f64) -> Vec<C> {
    let dx = dreal(f, z, 2 * k, h);
    let dy = dreal(f, z, 2 * k + 1, h);
    let s = if holo { -1.0 } else { 1.0 };
    dx.iter()
        .zip(&dy)
        .map(|(a, b)| (a + C::new(0.0, s) * b) * 0.5)
        .collect()
}

fn flat(m: &[[C; 2]; 2]) -> Vec<C> {
    vec![m[0][0], m[0][1], m[1][0], m[1][1]]
}

fn inv2(g: &[[C; 2]; 2]) -> [[C; 2]; 2] {
    let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
    [[g[1][1] / det, -g[0][1] / det], [-g[1][0] / det, g[0][0] / det]]
}

/// Inverse metric as g^{p q̄}: satisfies Σ_q g^{p q̄} g_{i q̄} = δ^p_i.
pub fn inverse(g: &[[C; 2]; 2]) -> [[C; 2]; 2] {
    // With G[i][q] = g_{i q̄}, Σ_q G[i][q] X[q][p] = δ_ip means X = G^{-1},
    // and g^{p q̄} = X[q][p].
    let x = inv2(g);
    [[x[0][0], x[1][0]], [x[0][1], x[1][1]]]
}

/// Unitary frame: columns e_a with g(e_a, ē_b) = δ_ab, returned as E[i][a].
pub fn unitary_frame(g: &[[C; 2]; 2]) -> [[C; 2]; 2] {
    // Write M[i][j] = g_{i j̄} = (A^† A)[i][j] with A upper triangular.
    // Then E = conj(A^{-1}) satisfies E^T M Ē = I.
    let m00 = g[0][0].re;
    let l00 = m00.sqrt();
    let l10 = g[0][1] / l00;
    let l11 = (g[1][1].re - l10.norm_sqr()).sqrt();
    let ainv = [
        [C::new(1.0 / l00, 0.0), -l10 / (l00 * l11)],
        [C::new(0.0, 0.0), C::new(1.0 / l11, 0.0)],
    ];
    [
        [ainv[0][0].conj(), ainv[0][1].conj()],
        [ainv[1][0].conj(), ainv[1][1].conj()],
    ]
}

/// Christoffel symbols Γ^p_{k i} = g^{p q̄} ∂_k g_{i q̄}, as G[p][k][i].
pub fn christoffel(r: &Radial, z: &Z, h: f64) -> [[[C; 2]; 2]; 2] {
    let g = metric(r, z);
    let gi = inverse(&g);
    let f = |w: &Z| flat(&metric(r, w));
    let mut dg = [[[C::new(0.0, 0.0); 2]; 2]; 2];
    for k in 0..2 {
        let d = dz(&f, z, k, true, h);
        for i in 0..2 {
            for q in 0..2 {
                dg[k][i][q] = d[2 * i + q];
            }
        }
    }
    let mut gam = [[[C::new(0.0, 0.0); 2]; 2]; 2];
    for p in 0..2 {
        for k in 0..2 {
            for i in 0..2 {
                let mut s = C::new(0.0, 0.0);
                for q in 0..2 {
                    s += gi[p][q] * dg[k][i][q];
                }
                gam[p][k][i] = s;
            }
        }
    }
    gam
}

/// Ricci eigenvalues via −∂∂̄ log det g, evaluated as the coordinate tensor
/// and then diagonalised against g. Returns the tensor in the unitary frame.
pub fn ricci_frame(r: &Radial, z: &Z, h: f64) -> [[C; 2]; 2] {
    let logdet = |w: &Z| {
        let g = metric(r, w);
        let d = g[0][0] * g[1][1] - g[0][1] * g[1][0];
        vec![C::new(d.re.ln(), 0.0)]
    };
    let mut ric = [[C::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let inner = |w: &Z| dz(&logdet, w, j, false, h);
            ric[i][j] = -dz(&inner, z, i, true, h)[0];
        }
    }
    to_frame2(&ric, &unitary_frame(&metric(r, z)))
}

/// Components T_{a b̄} = Σ T_{i j̄} E_ia conj(E_jb).
pub fn to_frame2(t: &[[C; 2]; 2], e: &[[C; 2]; 2]) -> [[C; 2]; 2] {
    let mut out = [[C::new(0.0, 0.0); 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            let mut s = C::new(0.0, 0.0);
            for i in 0..2 {
                for j in 0..2 {
                    s += t[i][j] * e[i][a] * e[j][b].conj();
                }
            }
            out[a][b] = s;
        }
    }
    out
}

/// Kähler Laplacian g^{i j̄} ∂_i ∂_j̄ h plus the drift (a/2)·r∂_r h.
pub fn drift_laplacian(r: &Radial, hfun: &dyn Fn(f64) -> f64, a: f64, z: &Z, h: f64) -> f64 {
    let g = metric(r, z);
    let gi = inverse(&g);
    let hz = |w: &Z| vec![C::new(hfun(norm_sq(w)), 0.0)];
    let mut lap = C::new(0.0, 0.0);
    for i in 0..2 {
        for j in 0..2 {
            let inner = |w: &Z| dz(&hz, w, j, false, h);
            let dd = dz(&inner, z, i, true, h)[0];
            lap += gi[i][j] * dd;
        }
    }
    let mut radial = 0.0;
    for dir in 0..4 {
        let k = dir / 2;
        let coord = if dir % 2 == 0 { z[k].re } else { z[k].im };
        radial += coord * dreal(&hz, z, dir, h)[0].re;
    }
    lap.re + 0.5 * a * radial
}

/// Full curvature tensor R_{i j̄ k l̄} = −∂_k∂_l̄ g_{i j̄} + g^{p q̄} ∂_k g_{i q̄} ∂_l̄ g_{p j̄},
/// returned as its unitary-frame norm.
pub fn curvature_norm(r: &Radial, z: &Z, h: f64) -> f64 {
    let g = metric(r, z);
    let gi = inverse(&g);
    let f = |w: &Z| flat(&metric(r, w));
    let mut dg = [[[C::new(0.0, 0.0); 2]; 2]; 2];
    let mut dbg = [[[C::new(0.0, 0.0); 2]; 2]; 2];
    for k in 0..2 {
        let d = dz(&f, z, k, true, h);
        let db = dz(&f, z, k, false, h);
        for i in 0..2 {
            for j in 0..2 {
                dg[k][i][j] = d[2 * i + j];
                dbg[k][i][j] = db[2 * i + j];
            }
        }
    }
    let mut rm = [[[[C::new(0.0, 0.0); 2]; 2]; 2]; 2];
    for k in 0..2 {
        for l in 0..2 {
            let inner = |w: &Z| dz(&f, w, l, false, h);
            let ddg = dz(&inner, z, k, true, h);
            for i in 0..2 {
                for j in 0..2 {
                    let mut s = -ddg[2 * i + j];
                    for p in 0..2 {
                        for q in 0..2 {
                            s += gi[p][q] * dg[k][i][q] * dbg[l][p][j];
                        }
                    }
                    rm[i][j][k][l] = s;
                }
            }
        }
    }
    let e = unitary_frame(&g);
    let mut total = 0.0;
    for a in 0..2 {
        for b in 0..2 {
            for c in 0..2 {
                for d in 0..2 {
                    let mut s = C::new(0.0, 0.0);
                    for i in 0..2 {
                        for j in 0..2 {
                            for k in 0..2 {
                                for l in 0..2 {
                                    s += rm[i][j][k][l]
                                        * e[i][a]
                                        * e[j][b].conj()
                                        * e[k][c]
                                        * e[l][d].conj();
                                }
                            }
                        }
                    }
                    total += s.norm_sqr();
                }
            }
        }
    }
    total.sqrt()
}

/// |Γ(g1) − Γ(g0)|² measured with g1.
pub fn christoffel_energy(r0: &Radial, r1: &Radial, z: &Z, h: f64) -> f64 {
    let g0 = christoffel(r0, z, h);
    let g1 = christoffel(r1, z, h);
    let e = unitary_frame(&metric(r1, z));
    let einv = inv2(&e);
    let mut total = 0.0;
    for c in 0..2 {
        for a in 0..2 {
            for b in 0..2 {
                let mut s = C::new(0.0, 0.0);
                for p in 0..2 {
                    for k in 0..2 {
                        for i in 0..2 {
                            s += einv[c][p] * (g1[p][k][i] - g0[p][k][i]) * e[k][a] * e[i][b];
                        }
                    }
                }
                total += s.norm_sqr();
            }
        }
    }
    total
}

/// (∇T)_{k i j̄} = ∂_k T_{i j̄} − Γ^p_{k i} T_{p j̄}, flattened as 8 entries.
fn nabla_t(r: &Radial, t: &dyn Fn(&Z) -> [[C; 2]; 2], z: &Z, h: f64) -> Vec<C> {
    let tf = |w: &Z| flat(&t(w));
    let gam = christoffel(r, z, h);
    let tz = t(z);
    let mut out = vec![C::new(0.0, 0.0); 8];
    for k in 0..2 {
        let d = dz(&tf, z, k, true, h);
        for i in 0..2 {
            for j in 0..2 {
                let mut s = d[2 * i + j];
                for p in 0..2 {
                    s -= gam[p][k][i] * tz[p][j];
                }
                out[4 * k + 2 * i + j] = s;
            }
        }
    }
    out
}

/// |T|, |∇T|, |∇²T| for T = i∂∂̄h, with connection and norms from metric r.
pub fn ddbar_norms(
    r: &Radial,
    h1: &dyn Fn(f64) -> f64,
    h2: &dyn Fn(f64) -> f64,
    z: &Z,
    h: f64,
) -> [f64; 3] {
    let t = |w: &Z| ddbar(h1, h2, w);
    let e = unitary_frame(&metric(r, z));
    let t0 = to_frame2(&t(z), &e);
    let n0: f64 = t0.iter().flatten().map(|c| c.norm_sqr()).sum::<f64>().sqrt();

    let nt = nabla_t(r, &t, z, h);
    let mut s1 = 0.0;
    for a in 0..2 {
        for b in 0..2 {
            for c in 0..2 {
                let mut s = C::new(0.0, 0.0);
                for k in 0..2 {
                    for i in 0..2 {
                        for j in 0..2 {
                            s += nt[4 * k + 2 * i + j] * e[k][a] * e[i][b] * e[j][c].conj();
                        }
                    }
                }
                s1 += s.norm_sqr();
            }
        }
    }
    let n1 = (2.0 * s1).sqrt();

    // Second derivatives: holomorphic and antiholomorphic outer slot.
    let gam = christoffel(r, z, h);
    let ntf = |w: &Z| nabla_t(r, &t, w, h);
    let mut comp = vec![C::new(0.0, 0.0); 32];
    for l in 0..2 {
        let dh = dz(&ntf, z, l, true, h);
        let da = dz(&ntf, z, l, false, h);
        for k in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    let idx = 4 * k + 2 * i + j;
                    let mut s = dh[idx];
                    for p in 0..2 {
                        s -= gam[p][l][k] * nt[4 * p + 2 * i + j];
                        s -= gam[p][l][i] * nt[4 * k + 2 * p + j];
                    }
                    comp[8 * l + idx] = s;
                    let mut sb = da[idx];
                    for q in 0..2 {
                        sb -= gam[q][l][j].conj() * nt[4 * k + 2 * i + q];
                    }
                    comp[16 + 8 * l + idx] = sb;
                }
            }
        }
    }
    let mut s2 = 0.0;
    for bar in 0..2 {
        for a0 in 0..2 {
            for a1 in 0..2 {
                for a2 in 0..2 {
                    for a3 in 0..2 {
                        let mut s = C::new(0.0, 0.0);
                        for l in 0..2 {
                            let el = if bar == 0 { e[l][a0] } else { e[l][a0].conj() };
                            for k in 0..2 {
                                for i in 0..2 {
                                    for j in 0..2 {
                                        s += comp[16 * bar + 8 * l + 4 * k + 2 * i + j]
                                            * el
                                            * e[k][a1]
                                            * e[i][a2]
                                            * e[j][a3].conj();
                                    }
                                }
                            }
                        }
                        s2 += s.norm_sqr();
                    }
                }
            }
        }
    }
    let n2 = (2.0 * s2).sqrt();
    [n0, n1, n2]
}

/// A point with |z|² = u away from the coordinate axes.
pub fn sample_point(u: f64, theta: f64, phase1: f64, phase2: f64) -> Z {
    let r = u.sqrt();
    [
        C::from_polar(r * theta.cos(), phase1),
        C::from_polar(r * theta.sin(), phase2),
    ]
}
