//! Gain-control normalization (GDN) and its one-shot inverse (IGDN).
//!
//! Per spatial position and batch element, with `u_i = Σ_j w_ji · s_j² + b_i`:
//!
//! ```text
//! gdn:   d_i = s_i / sqrt(u_i)
//! igdn:  y_i = s_i * sqrt(u_i)
//! ```
//!
//! `w` is a nonnegative channel-coupling matrix (`w[j][i]` couples channel
//! `j` into channel `i`'s pool) and `b` a per-channel offset floored at
//! [`EPS_B`], which keeps the radicand strictly positive for any finite
//! input. IGDN is the one-shot inverse form: it inverts GDN exactly only
//! in the decoupled regime `w = 0`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::par;
use crate::tensor::{Backward, Graph, Shape, Tensor};

/// Lower bound on the offset `b`; keeps `sqrt(u) >= 1e-3` for zero input,
/// bounding gradient magnitudes.
pub const EPS_B: f64 = 1e-6;

/// Learnable parameters of one GDN or IGDN layer.
///
/// `w` is stored as a `[1, 1, C, C]` tensor in row-major `(j, i)` order;
/// `b` as `[1, C, 1, 1]`.
#[derive(Clone, Debug)]
pub struct GainControlParams {
    pub w: Tensor,
    pub b: Tensor,
    channels: usize,
}

impl GainControlParams {
    /// Default initialization: small self-coupling plus weak cross-coupling
    /// (`w = 0.1·I + 0.01`) and unit offsets, a well-conditioned invertible
    /// starting point.
    pub fn new(channels: usize) -> Self {
        let mut w = vec![0.01; channels * channels];
        for i in 0..channels {
            w[i * channels + i] += 0.1;
        }
        Self::from_parts(channels, w, vec![1.0; channels])
            .expect("default initialization is feasible")
    }

    /// Build from raw coefficients, validating the constraints.
    pub fn from_parts(channels: usize, w: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        let params = GainControlParams {
            w: Tensor::param_from_vec(Shape::new(1, 1, channels, channels), w)?,
            b: Tensor::param_from_vec(Shape::new(1, channels, 1, 1), b)?,
            channels,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Check the feasibility constraints: `w >= 0` elementwise and
    /// `b >= EPS_B`.
    pub fn validate(&self) -> Result<()> {
        if self.w.data().iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::Constraint(
                "gain-control coupling matrix has a negative or non-finite entry".into(),
            ));
        }
        if self.b.data().iter().any(|&v| v < EPS_B || !v.is_finite()) {
            return Err(Error::Constraint(format!(
                "gain-control offset below the {EPS_B} floor"
            )));
        }
        Ok(())
    }

    /// Project onto the feasible set: clamp `w` at zero and `b` at
    /// [`EPS_B`]. Applied after every optimizer step; a no-op (bitwise) on
    /// already-feasible parameters.
    pub fn project(&mut self) -> Result<()> {
        for v in self.w.data_mut()? {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        for v in self.b.data_mut()? {
            if *v < EPS_B {
                *v = EPS_B;
            }
        }
        Ok(())
    }
}

/// Normalization pools `u_i = Σ_j w_ji s_j² + b_i` for every position, as
/// planes in the input's layout. Shared by both layers.
fn pools(s: &Tensor, w: &[f64], b: &[f64], channels: usize) -> Vec<f64> {
    let shape = s.shape();
    let hw = shape.hw();
    let sd = s.data();
    let mut u = vec![0.0; shape.count()];
    par::for_each_chunk_mut(&mut u, channels * hw, |ni, u_batch| {
        let s_batch = &sd[ni * channels * hw..][..channels * hw];
        let sq: Vec<f64> = s_batch.iter().map(|v| v * v).collect();
        for i in 0..channels {
            let u_plane = &mut u_batch[i * hw..(i + 1) * hw];
            u_plane.fill(b[i]);
            for j in 0..channels {
                let wji = w[j * channels + i];
                if wji == 0.0 {
                    continue;
                }
                let sq_plane = &sq[j * hw..(j + 1) * hw];
                for (uv, sv) in u_plane.iter_mut().zip(sq_plane) {
                    *uv += wji * sv;
                }
            }
        }
    });
    u
}

struct GainRule {
    channels: usize,
    inverse: bool,
    /// `u^{-1/2}` per element, saved from the forward pass.
    inv_sqrt_u: Vec<f64>,
}

impl Backward for GainRule {
    fn input_grads(
        &self,
        inputs: &[Tensor],
        grad_out: &[f64],
        needed: &[bool],
    ) -> Result<Vec<Option<Vec<f64>>>> {
        let (s, w) = (&inputs[0], &inputs[1]);
        let shape = s.shape();
        let c = self.channels;
        let (n, hw) = (shape.n(), shape.hw());
        let (sd, wd) = (s.data(), w.data());
        let r = &self.inv_sqrt_u;

        // Per batch element, compute the shared factor
        //   gdn:  t_i = g_i · s_i · u_i^{-3/2}
        //   igdn: t_i = g_i · s_i · u_i^{-1/2}
        // then
        //   gdn:  ds_k = g_k·u_k^{-1/2} − s_k·Σ_i w_ki t_i
        //   igdn: ds_k = g_k·u_k^{+1/2} + s_k·Σ_i w_ki t_i
        //   dw_ki = ∓ ½ Σ_pos s_k² t_i ,  db_i = ∓ ½ Σ_pos t_i
        // (upper sign gdn, lower igdn).
        let per_batch = par::map_indexed(n, |ni| {
            let base = ni * c * hw;
            let s_b = &sd[base..base + c * hw];
            let g_b = &grad_out[base..base + c * hw];
            let r_b = &r[base..base + c * hw];

            let mut t = vec![0.0; c * hw];
            for i in 0..c {
                for p in 0..hw {
                    let idx = i * hw + p;
                    let ri = r_b[idx];
                    let factor = if self.inverse { ri } else { ri * ri * ri };
                    t[idx] = g_b[idx] * s_b[idx] * factor;
                }
            }

            let mut ds = needed[0].then(|| vec![0.0; c * hw]);
            if let Some(ds) = ds.as_mut() {
                // m_k = Σ_i w_ki t_i, accumulated plane-wise.
                let mut m = vec![0.0; c * hw];
                for kc in 0..c {
                    let m_plane = &mut m[kc * hw..(kc + 1) * hw];
                    for i in 0..c {
                        let wki = wd[kc * c + i];
                        if wki == 0.0 {
                            continue;
                        }
                        let t_plane = &t[i * hw..(i + 1) * hw];
                        for (mv, tv) in m_plane.iter_mut().zip(t_plane) {
                            *mv += wki * tv;
                        }
                    }
                }
                for kc in 0..c {
                    for p in 0..hw {
                        let idx = kc * hw + p;
                        let direct = if self.inverse {
                            g_b[idx] / r_b[idx]
                        } else {
                            g_b[idx] * r_b[idx]
                        };
                        let coupled = s_b[idx] * m[idx];
                        ds[idx] = if self.inverse { direct + coupled } else { direct - coupled };
                    }
                }
            }

            let sign = if self.inverse { 0.5 } else { -0.5 };
            let mut dw = needed[1].then(|| vec![0.0; c * c]);
            if let Some(dw) = dw.as_mut() {
                for kc in 0..c {
                    let s_plane = &s_b[kc * hw..(kc + 1) * hw];
                    for i in 0..c {
                        let t_plane = &t[i * hw..(i + 1) * hw];
                        let mut acc = 0.0;
                        for (sv, tv) in s_plane.iter().zip(t_plane) {
                            acc += sv * sv * tv;
                        }
                        dw[kc * c + i] += sign * acc;
                    }
                }
            }

            let mut db = needed[2].then(|| vec![0.0; c]);
            if let Some(db) = db.as_mut() {
                for (i, db_slot) in db.iter_mut().enumerate() {
                    *db_slot += sign * t[i * hw..(i + 1) * hw].iter().sum::<f64>();
                }
            }

            (ds, dw, db)
        });

        // Stitch per-batch pieces together in index order.
        let mut gs = needed[0].then(|| vec![0.0; shape.count()]);
        let mut gw = needed[1].then(|| vec![0.0; c * c]);
        let mut gb = needed[2].then(|| vec![0.0; c]);
        for (ni, (ds, dw, db)) in per_batch.into_iter().enumerate() {
            if let (Some(gs), Some(ds)) = (gs.as_mut(), ds) {
                gs[ni * c * hw..(ni + 1) * c * hw].copy_from_slice(&ds);
            }
            if let (Some(gw), Some(dw)) = (gw.as_mut(), dw) {
                for (a, d) in gw.iter_mut().zip(&dw) {
                    *a += d;
                }
            }
            if let (Some(gb), Some(db)) = (gb.as_mut(), db) {
                for (a, d) in gb.iter_mut().zip(&db) {
                    *a += d;
                }
            }
        }
        Ok(vec![gs, gw, gb])
    }
}

fn gain_forward(
    graph: &mut Graph,
    s: &Tensor,
    params: &GainControlParams,
    inverse: bool,
) -> Result<Tensor> {
    params.validate()?;
    let c = params.channels;
    if s.shape().c() != c {
        return Err(Error::Shape(format!(
            "gain-control layer built for {c} channels applied to {}",
            s.shape()
        )));
    }
    let u = pools(s, params.w.data(), params.b.data(), c);
    let mut inv_sqrt_u = u;
    for v in inv_sqrt_u.iter_mut() {
        *v = v.sqrt().recip();
    }
    let sd = s.data();
    let data: Vec<f64> = if inverse {
        sd.iter().zip(&inv_sqrt_u).map(|(s, r)| s / r).collect()
    } else {
        sd.iter().zip(&inv_sqrt_u).map(|(s, r)| s * r).collect()
    };
    let rec = graph.wants_grad(&[s, &params.w, &params.b]);
    let out = Tensor::from_op(s.shape(), data, rec);
    if rec {
        graph.push_node(
            vec![s.clone(), params.w.clone(), params.b.clone()],
            &out,
            Box::new(GainRule {
                channels: c,
                inverse,
                inv_sqrt_u,
            }),
        );
    }
    Ok(out)
}

/// GDN: `d_i = s_i / sqrt(Σ_j w_ji s_j² + b_i)` per position.
///
/// Validates the parameter constraints up front; infeasible parameters are
/// an error, never silently clamped.
pub fn gdn_forward(graph: &mut Graph, s: &Tensor, params: &GainControlParams) -> Result<Tensor> {
    gain_forward(graph, s, params, false)
}

/// IGDN: `y_i = s_i · sqrt(Σ_j w_ji s_j² + b_i)` per position — the
/// one-shot inverse form, exact against [`gdn_forward`] when `w = 0`.
pub fn igdn_forward(graph: &mut Graph, s: &Tensor, params: &GainControlParams) -> Result<Tensor> {
    gain_forward(graph, s, params, true)
}

/// Fan-in style random initialization used when a layer should start away
/// from the identity regime (tests and experiments).
pub fn random_params<R: Rng>(channels: usize, rng: &mut R) -> GainControlParams {
    let w: Vec<f64> = (0..channels * channels)
        .map(|_| rng.gen_range(0.01..0.2))
        .collect();
    let b: Vec<f64> = (0..channels).map(|_| rng.gen_range(0.5..1.5)).collect();
    GainControlParams::from_parts(channels, w, b).expect("sampled parameters are feasible")
}
