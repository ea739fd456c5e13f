//! Physical fluxes, one-sided speeds, the central-upwind edge flux, the
//! well-balanced source quadrature and Manning friction.

/// Conserved triple `(w, hu, hv)`.
pub type Conserved = [f64; 3];

/// Point state on one side of an edge. Momenta are always rebuilt as
/// `h·u`, `h·v` from the desingularized velocities.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SideState {
    pub w: f64,
    pub h: f64,
    pub u: f64,
    pub v: f64,
}

impl SideState {
    #[inline]
    pub fn hu(&self) -> f64 {
        self.h * self.u
    }
    #[inline]
    pub fn hv(&self) -> f64 {
        self.h * self.v
    }
    #[inline]
    pub fn conserved(&self) -> Conserved {
        [self.w, self.hu(), self.hv()]
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EdgeSpeeds {
    pub a_in: f64,
    pub a_out: f64,
}

impl EdgeSpeeds {
    #[inline]
    pub fn max(&self) -> f64 {
        self.a_in.max(self.a_out)
    }
}

#[inline]
pub fn physical_flux_f(s: &SideState, g: f64) -> [f64; 3] {
    let hu = s.hu();
    [hu, hu * s.u + 0.5 * g * s.h * s.h, hu * s.v]
}

#[inline]
pub fn physical_flux_g(s: &SideState, g: f64) -> [f64; 3] {
    let hv = s.hv();
    [hv, hv * s.u, hv * s.v + 0.5 * g * s.h * s.h]
}

/// `a_in = −min(λ⁻, 0)`, `a_out = max(λ⁺, 0)` over both sides.
#[inline]
pub fn local_speeds(own: &SideState, nb: &SideState, n: [f64; 2], g: f64) -> EdgeSpeeds {
    let un_own = n[0] * own.u + n[1] * own.v;
    let un_nb = n[0] * nb.u + n[1] * nb.v;
    let c_own = (g * own.h).sqrt();
    let c_nb = (g * nb.h).sqrt();
    let lp = (un_own + c_own).max(un_nb + c_nb);
    let lm = (un_own - c_own).min(un_nb - c_nb);
    EdgeSpeeds {
        a_in: -(lm.min(0.0)),
        a_out: lp.max(0.0),
    }
}

/// Edge-integrated central-upwind flux through an edge of length `len` with
/// outward normal `n`, seen from the `own` side.
#[inline]
pub fn edge_flux(
    own: &SideState,
    nb: &SideState,
    sp: EdgeSpeeds,
    len: f64,
    n: [f64; 2],
    g: f64,
    sigma: f64,
) -> [f64; 3] {
    let f_own = physical_flux_f(own, g);
    let f_nb = physical_flux_f(nb, g);
    let g_own = physical_flux_g(own, g);
    let g_nb = physical_flux_g(nb, g);
    let (c, s) = (n[0], n[1]);
    let denom = sp.a_in + sp.a_out;
    let mut h = [0.0; 3];
    if denom < sigma {
        for i in 0..3 {
            h[i] = 0.5 * len * (c * (f_nb[i] + f_own[i]) + s * (g_nb[i] + g_own[i]));
        }
        return h;
    }
    let u_own = own.conserved();
    let u_nb = nb.conserved();
    let inv = len / denom;
    let diff = sp.a_in * sp.a_out;
    for i in 0..3 {
        let conv = c * (sp.a_in * f_nb[i] + sp.a_out * f_own[i])
            + s * (sp.a_in * g_nb[i] + sp.a_out * g_own[i]);
        h[i] = inv * (conv - diff * (u_nb[i] - u_own[i]));
    }
    h
}

/// Per-cell inputs of the source quadrature.
#[derive(Clone, Copy, Debug)]
pub struct SourceInput {
    pub area: f64,
    pub lengths: [f64; 3],
    pub normals: [[f64; 2]; 3],
    /// Own-side depth at each edge midpoint.
    pub h_mid: [f64; 3],
    /// `Δt_jk / Δt_l` per edge.
    pub ratios: [f64; 3],
    /// `w(V) − B̂(V)` at the three vertices.
    pub depth_vertex: [f64; 3],
    /// Slopes `(w_x, w_y)` of the cell's water surface.
    pub grad_w: [f64; 2],
}

/// `(S̄², S̄³)`.
#[inline]
pub fn source_quadrature(inp: &SourceInput, g: f64) -> [f64; 2] {
    let mut ex = 0.0;
    let mut ey = 0.0;
    for k in 0..3 {
        let t = inp.lengths[k] * inp.ratios[k] * inp.h_mid[k] * inp.h_mid[k];
        ex += t * inp.normals[k][0];
        ey += t * inp.normals[k][1];
    }
    let dv = inp.depth_vertex[0] + inp.depth_vertex[1] + inp.depth_vertex[2];
    let e = g / (2.0 * inp.area);
    [
        e * ex - g / 3.0 * dv * inp.grad_w[0],
        e * ey - g / 3.0 * dv * inp.grad_w[1],
    ]
}

/// Instantaneous Manning source on `(hu, hv)`.
pub fn manning_source(h: f64, hu: f64, hv: f64, n_b: f64, g: f64) -> [f64; 2] {
    if h <= 0.0 || n_b == 0.0 {
        return [0.0, 0.0];
    }
    let (u, v) = (hu / h, hv / h);
    let k = -g * n_b * n_b * u.hypot(v) / h.cbrt();
    [k * u, k * v]
}

/// Semi-implicit Manning update of the momenta over `dt`. Depths at or below
/// `eps` lose their momentum.
pub fn manning_friction(
    h: f64,
    hu: f64,
    hv: f64,
    n_b: f64,
    g: f64,
    dt: f64,
    eps: f64,
) -> (f64, f64) {
    if n_b == 0.0 {
        return (hu, hv);
    }
    if h <= eps {
        return (0.0, 0.0);
    }
    let speed = (hu / h).hypot(hv / h);
    let f = 1.0 / (1.0 + dt * g * n_b * n_b * speed / h.powf(4.0 / 3.0));
    (hu * f, hv * f)
}
