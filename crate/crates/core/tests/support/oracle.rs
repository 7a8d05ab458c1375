//! Derivative-free reference solver: cyclic coordinate search with
//! golden-section line minimization on every frozen energy, iterated as a
//! plain fixed point.

use wplap::system::ProblemInstance;

const GOLD: f64 = 0.618_033_988_749_894_8;

fn line_min(f: &mut dyn FnMut(f64) -> f64, x0: f64, scale: f64) -> f64 {
    let f0 = f(x0);
    let mut h = scale;
    // expand until the minimum is bracketed in [x0 - h, x0 + h]
    let (mut a, mut b);
    loop {
        let (fl, fr) = (f(x0 - h), f(x0 + h));
        if fl >= f0 && fr >= f0 {
            a = x0 - h;
            b = x0 + h;
            break;
        }
        if h > 1e6 {
            a = x0 - h;
            b = x0 + h;
            break;
        }
        h *= 2.0;
    }
    let mut c = b - GOLD * (b - a);
    let mut d = a + GOLD * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-12 * (1.0 + x0.abs()) {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLD * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLD * (b - a);
            fd = f(d);
        }
    }
    let m = 0.5 * (a + b);
    if f(m) <= f0 {
        m
    } else {
        x0
    }
}

/// Minimizes `f` over the coordinates listed in `free` by coordinate search.
pub fn coordinate_search(f: &dyn Fn(&[f64]) -> f64, x: &mut [f64], free: &[usize]) {
    let mut scale = 0.1;
    for _ in 0..5000 {
        let mut moved: f64 = 0.0;
        for &i in free {
            let old = x[i];
            let mut g = |s: f64| {
                let keep = x[i];
                x[i] = s;
                let v = f(x);
                x[i] = keep;
                v
            };
            let new = line_min(&mut g, old, scale);
            x[i] = new;
            moved = moved.max((new - old).abs());
        }
        if moved < 1e-11 {
            break;
        }
        scale = (4.0 * moved).max(1e-6);
    }
}

/// Fixed point of `v -> argmin I_v` with every minimization done by
/// coordinate search. Returns nodal transformed values.
pub fn frozen_chain(inst: &ProblemInstance, damping: f64) -> Vec<f64> {
    let mesh = inst.mesh();
    let free: Vec<usize> = mesh.interior_nodes().to_vec();
    let mut v = vec![0.0; mesh.n_nodes()];
    for _ in 0..2000 {
        let frozen = inst.freeze(&v).unwrap();
        let mut w = v.clone();
        coordinate_search(&|x: &[f64]| inst.energy(&frozen, x), &mut w, &free);
        let mut step: f64 = 0.0;
        for i in 0..v.len() {
            let next = (1.0 - damping) * v[i] + damping * w[i];
            step = step.max((next - v[i]).abs());
            v[i] = next;
        }
        if step < 1e-11 {
            break;
        }
    }
    v
}
