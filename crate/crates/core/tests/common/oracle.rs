use ctrlsynth::plant::{step, PlantParams, PlantState};

/// Reference integrator: forward Euler at step `h`, Richardson-extrapolated
/// against a run at `h / 2`, with the inductor current floored at zero.
pub fn euler_oracle(
    i0: f64,
    v0: f64,
    d: f64,
    r: f64,
    p: &PlantParams,
    t: f64,
    h: f64,
) -> (f64, f64) {
    let run = |h: f64| {
        let n = (t / h).round() as usize;
        let h = t / n as f64;
        let (mut i, mut v) = (i0, v0);
        for _ in 0..n {
            let di = (p.v_in - (1.0 - d) * v) / p.l;
            let dv = ((1.0 - d) * i - v / r) / p.c;
            i = (i + h * di).max(0.0);
            v += h * dv;
        }
        (i, v)
    };
    let (i1, v1) = run(h);
    let (i2, v2) = run(h / 2.0);
    (2.0 * i2 - i1, 2.0 * v2 - v1)
}

pub fn rk4_over(i0: f64, v0: f64, d: f64, r: f64, p: &PlantParams, t: f64, n: usize) -> (f64, f64) {
    let mut s = PlantState {
        i_l: i0,
        v_c: v0,
        t: 0.0,
    };
    for _ in 0..n {
        s = step(&s, d, r, t / n as f64, p).unwrap();
    }
    (s.i_l, s.v_c)
}

pub fn err(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}
