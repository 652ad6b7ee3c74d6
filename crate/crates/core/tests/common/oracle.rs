// Independent reference for network derivatives and loss gradients.
//
// Re-implements the sigmoid MLP with plain scalar loops and exact forward
// propagation of input derivatives, re-implements the loss terms, and
// differentiates the result by central differences.

#![allow(dead_code)]

use msnn_core::geometry::{BoxDomain, Point};
use msnn_core::losses::{approx_l2_loss, collocation_loss, energy_loss, LossSpec, LossVariant, Penalties};
use msnn_core::mesh::{interpolate_coefficients, Mesh};
use msnn_core::objective::{LossAccumulator, Term};
use msnn_core::quadrature::QuadratureRule;
use msnn_core::MlpNet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct RefEval {
    pub value: f64,
    pub grad: [f64; 2],
    pub hess: [[f64; 2]; 2],
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-z))
}

/// Value, gradient and Hessian of the network at `x`, from the flat
/// parameter layout (row-major `W_i` of shape `n_in x n_out`, then `b_i`).
pub fn ref_eval(sizes: &[usize], params: &[f64], x: &Point) -> RefEval {
    let d = sizes[0];
    let mut v: Vec<f64> = (0..d).map(|k| x.coords[k]).collect();
    let mut g: Vec<[f64; 2]> = (0..d).map(|k| if k == 0 { [1.0, 0.0] } else { [0.0, 1.0] }).collect();
    let mut h: Vec<[[f64; 2]; 2]> = vec![[[0.0; 2]; 2]; d];
    let mut off = 0;
    let layers = sizes.len() - 1;
    for l in 0..layers {
        let (n_in, n_out) = (sizes[l], sizes[l + 1]);
        let w = &params[off..off + n_in * n_out];
        let b = &params[off + n_in * n_out..off + n_in * n_out + n_out];
        off += (n_in + 1) * n_out;
        let mut zv = vec![0.0; n_out];
        let mut zg = vec![[0.0; 2]; n_out];
        let mut zh = vec![[[0.0; 2]; 2]; n_out];
        for j in 0..n_out {
            zv[j] = b[j];
            for i in 0..n_in {
                let wij = w[i * n_out + j];
                zv[j] += wij * v[i];
                for a in 0..2 {
                    zg[j][a] += wij * g[i][a];
                    for c in 0..2 {
                        zh[j][a][c] += wij * h[i][a][c];
                    }
                }
            }
        }
        if l + 1 == layers {
            return RefEval { value: zv[0], grad: zg[0], hess: zh[0] };
        }
        v = vec![0.0; n_out];
        g = vec![[0.0; 2]; n_out];
        h = vec![[[0.0; 2]; 2]; n_out];
        for j in 0..n_out {
            let s = sigmoid(zv[j]);
            let s1 = s * (1.0 - s);
            let s2 = s1 * (1.0 - 2.0 * s);
            v[j] = s;
            for a in 0..2 {
                g[j][a] = s1 * zg[j][a];
                for c in 0..2 {
                    h[j][a][c] = s2 * zg[j][a] * zg[j][c] + s1 * zh[j][a][c];
                }
            }
        }
    }
    unreachable!("network has an output layer")
}

/// Loss of `acc` recomputed from the reference network and term formulas.
pub fn ref_loss(sizes: &[usize], params: &[f64], acc: &LossAccumulator) -> f64 {
    let dim = acc.dim;
    let mut total = 0.0;
    for s in &acc.samples {
        let e = ref_eval(sizes, params, &s.point);
        let t = match s.term {
            Term::Fit { target } => (e.value - target).powi(2),
            Term::Energy { coarse_gradient, source } => {
                let mut t = -source * e.value;
                for k in 0..dim {
                    t += 0.5 * e.grad[k] * e.grad[k] + coarse_gradient[k] * e.grad[k];
                }
                t
            }
            Term::StrongResidual { rhs } => {
                let lap: f64 = (0..dim).map(|k| e.hess[k][k]).sum();
                (-lap - rhs).powi(2)
            }
        };
        total += s.weight * t;
    }
    total
}

/// Central-difference gradient of [`ref_loss`] with respect to every parameter.
pub fn fd_gradient(net: &MlpNet, acc: &LossAccumulator, step: f64) -> Vec<f64> {
    let sizes = net.layer_sizes();
    let mut p = net.params().to_vec();
    (0..p.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + step;
            let up = ref_loss(sizes, &p, acc);
            p[i] = orig - step;
            let down = ref_loss(sizes, &p, acc);
            p[i] = orig;
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// Small random network with at most `max_params` parameters and random biases.
pub fn random_net(rng: &mut ChaCha8Rng, dim: usize, max_params: usize) -> MlpNet {
    loop {
        let depth = rng.gen_range(1..=3);
        let hidden: Vec<usize> = (0..depth).map(|_| rng.gen_range(1..=6)).collect();
        if msnn_core::nnet::count_params(dim, &hidden) > max_params {
            continue;
        }
        let mut net = MlpNet::new(dim, &hidden, rng.gen()).unwrap();
        for p in net.params_mut() {
            *p += rng.gen_range(-0.5..0.5);
        }
        return net;
    }
}

/// Loss accumulator of `variant` on a small random problem.
pub fn random_loss(rng: &mut ChaCha8Rng, dim: usize, variant: LossVariant) -> LossAccumulator {
    let (domain, mesh, counts) = if dim == 1 {
        let d = BoxDomain::interval(-1.0, 1.0);
        (d, Mesh::uniform_1d(-1.0, 1.0, 3).unwrap(), [9, 1])
    } else {
        let d = BoxDomain::rectangle((-1.0, 1.0), (-1.0, 1.0));
        (d, Mesh::uniform_2d((-1.0, 1.0), (-1.0, 1.0), 2, 2, None).unwrap(), [4, 4])
    };
    let (a, b, c): (f64, f64, f64) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.5..2.0));
    let target = move |p: &Point| libm::sin(c * p.x() + a) + b * p.y() * p.x();
    let coarse = interpolate_coefficients(&mesh, target);
    let spec = LossSpec {
        variant,
        penalties: Penalties { alpha_p: rng.gen_range(1.0..100.0), beta_d: rng.gen_range(0.1..2.0), beta_c: rng.gen_range(0.1..2.0) },
        interior: QuadratureRule::nodal_grid(&domain, counts).unwrap(),
        boundary: Some(QuadratureRule::boundary(&domain, counts).unwrap()),
        nodes: mesh.node_points(),
    };
    let source = move |p: &Point| 1.0 + a * p.x() - b * p.y();
    match variant {
        LossVariant::ApproxL2 | LossVariant::ApproxL2ResidualFree => {
            approx_l2_loss(|p| target(p) - coarse.interpolate(p).unwrap(), &spec).unwrap()
        }
        LossVariant::Energy | LossVariant::EnergyResidualFree => energy_loss(&coarse, source, &spec).unwrap(),
        LossVariant::Collocation | LossVariant::CollocationResidualFree => collocation_loss(&coarse, source, &spec).unwrap(),
    }
}

/// `max_i |a_i - b_i| / max(max_i |b_i|, floor)`
pub fn rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let scale = b.iter().fold(floor, |m, v| m.max(v.abs()));
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

pub struct GradientCheck {
    pub worst_param: f64,
    pub worst_grad_x: f64,
    pub worst_hess_x: f64,
    pub cases: usize,
}

/// Criterion-style sweep: `nets` random nets, every loss variant, parameter
/// gradients against [`fd_gradient`] (step 1e-6), input derivatives against
/// central differences of the library's own evaluation (step 1e-5).
pub fn gradient_sweep(nets: usize, seed: u64) -> GradientCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = GradientCheck { worst_param: 0.0, worst_grad_x: 0.0, worst_hess_x: 0.0, cases: 0 };
    for k in 0..nets {
        let dim = 1 + k % 2;
        let net = random_net(&mut rng, dim, 100);
        for variant in LossVariant::ALL {
            let acc = random_loss(&mut rng, dim, variant);
            let (_, g) = net.loss_gradient(&acc);
            let fd = fd_gradient(&net, &acc, 1e-6);
            out.worst_param = out.worst_param.max(rel_err(&g, &fd, 1e-8));
            out.cases += 1;
        }
        for _ in 0..5 {
            let x = if dim == 1 {
                Point::new1(rng.gen_range(-1.0..1.0))
            } else {
                Point::new2(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            };
            let (gx, hx) = input_derivative_errors(&net, &x, 1e-5);
            out.worst_grad_x = out.worst_grad_x.max(gx);
            out.worst_hess_x = out.worst_hess_x.max(hx);
        }
    }
    out
}

/// Relative errors of `eval(x, 2)` gradient and Hessian against central
/// differences of `eval(x, 0)` and `eval(x, 1)`.
pub fn input_derivative_errors(net: &MlpNet, x: &Point, step: f64) -> (f64, f64) {
    let dim = net.input_dim();
    let e = net.eval(x, 2);
    let shift = |k: usize, s: f64| {
        let mut p = *x;
        p.coords[k] += s;
        p
    };
    let mut fd_g = [0.0; 2];
    let mut fd_h = [[0.0; 2]; 2];
    for k in 0..dim {
        fd_g[k] = (net.eval(&shift(k, step), 0).value - net.eval(&shift(k, -step), 0).value) / (2.0 * step);
        let (gu, gd) = (net.eval(&shift(k, step), 1).grad, net.eval(&shift(k, -step), 1).grad);
        for m in 0..dim {
            fd_h[k][m] = (gu[m] - gd[m]) / (2.0 * step);
        }
    }
    let ge = rel_err(&e.grad[..dim], &fd_g[..dim], 1e-3);
    let he_a: Vec<f64> = (0..dim).flat_map(|k| (0..dim).map(move |m| (k, m))).map(|(k, m)| e.hess[k][m]).collect();
    let he_b: Vec<f64> = (0..dim).flat_map(|k| (0..dim).map(move |m| (k, m))).map(|(k, m)| fd_h[k][m]).collect();
    (ge, rel_err(&he_a, &he_b, 1e-3))
}
