//! Adaptive Gauss-Kronrod (7/15) integration with global subdivision, and
//! expectations against a Gamma(a, 1) law on the half line.

use crate::distributions::special::{ln_gamma, ln_standard_gamma_pdf};
use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

const MAX_INTERVALS: usize = 4000;

#[derive(Debug, Clone, Copy)]
pub struct Estimate {
    pub value: f64,
    pub abs_error: f64,
    pub evaluations: usize,
}

/// One 15-point Kronrod rule on `[a, b]`, returning (value, error estimate).
fn gk15<F: Fn(f64) -> f64 + ?Sized>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut fv = [0.0; 15];
    fv[0] = f(center);
    for j in 0..7 {
        let dx = half * XGK[j];
        fv[1 + 2 * j] = f(center - dx);
        fv[2 + 2 * j] = f(center + dx);
    }
    gk15_combine(&fv, half)
}

/// Abscissae of the 15-point rule on `[a, b]` in the order used by
/// [`gk15_combine`]: centre, then `center ∓ dx_j` pairs.
fn gk15_nodes(a: f64, b: f64) -> [f64; 15] {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut x = [center; 15];
    for j in 0..7 {
        x[1 + 2 * j] = center - half * XGK[j];
        x[2 + 2 * j] = center + half * XGK[j];
    }
    x
}

/// QUADPACK value and error estimate from the 15 integrand values.
fn gk15_combine(fv: &[f64; 15], half: f64) -> (f64, f64) {
    let fc = fv[0];
    let mut resk = fc * WGK[7];
    let mut resg = fc * WG[3];
    let mut resabs = resk.abs();
    for j in 0..7 {
        let (f1, f2) = (fv[1 + 2 * j], fv[2 + 2 * j]);
        resk += WGK[j] * (f1 + f2);
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            resg += WG[j / 2] * (f1 + f2);
        }
    }
    let reskh = 0.5 * resk;
    let mut resasc = WGK[7] * (fc - reskh).abs();
    for j in 0..7 {
        resasc += WGK[j] * ((fv[1 + 2 * j] - reskh).abs() + (fv[2 + 2 * j] - reskh).abs());
    }
    let value = resk * half;
    resabs *= half.abs();
    resasc *= half.abs();
    let mut err = ((resk - resg) * half).abs();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * resabs);
    }
    (value, err)
}

struct Piece {
    segment: usize,
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

/// Integrates a sum of finite-interval integrals `Σ_k ∫_{a_k}^{b_k} f_k`,
/// bisecting the piece with the largest error until the total error is
/// below `max(abs_tol, rel_tol·|total|)`.
pub fn integrate_segments(
    segments: &[(f64, f64, &dyn Fn(f64) -> f64)],
    abs_tol: f64,
    rel_tol: f64,
) -> Result<Estimate> {
    let initial: Vec<(usize, f64, f64)> = segments.iter().enumerate().map(|(k, s)| (k, s.0, s.1)).collect();
    Ok(adapt_segments(segments, &initial, abs_tol, rel_tol)?.0)
}

/// As [`integrate_segments`], also returning the final partition as
/// `(segment, a, b)` triples.
/// Refinement starts from `initial`, a partition of the segments.
fn adapt_segments(
    segments: &[(f64, f64, &dyn Fn(f64) -> f64)],
    initial: &[(usize, f64, f64)],
    abs_tol: f64,
    rel_tol: f64,
) -> Result<(Estimate, Vec<(usize, f64, f64)>)> {
    let mut pieces: Vec<Piece> = Vec::with_capacity(64);
    let mut evaluations = 0;
    for &(k, a, b) in initial {
        if b <= a {
            continue;
        }
        let (value, err) = gk15(segments[k].2, a, b);
        evaluations += 15;
        pieces.push(Piece { segment: k, a, b, value, err });
    }
    loop {
        let total: f64 = pieces.iter().map(|p| p.value).sum();
        let err: f64 = pieces.iter().map(|p| p.err).sum();
        if !total.is_finite() {
            return Err(Error::Quadrature(format!("non-finite integrand sum {total}")));
        }
        if err <= abs_tol.max(rel_tol * total.abs()) {
            let mut partition: Vec<(usize, f64, f64)> = pieces.iter().map(|p| (p.segment, p.a, p.b)).collect();
            partition.sort_by(|x, y| x.0.cmp(&y.0).then(x.1.total_cmp(&y.1)));
            return Ok((Estimate { value: total, abs_error: err, evaluations }, partition));
        }
        if pieces.len() >= MAX_INTERVALS {
            return Err(Error::Quadrature(format!(
                "error {err:e} above tolerance after {MAX_INTERVALS} subintervals"
            )));
        }
        let (worst, _) = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.err.total_cmp(&y.1.err))
            .expect("at least one piece");
        let p = pieces.swap_remove(worst);
        let mid = 0.5 * (p.a + p.b);
        if mid <= p.a || mid >= p.b {
            return Err(Error::Quadrature("subinterval below machine resolution".into()));
        }
        let f = segments[p.segment].2;
        let (v1, e1) = gk15(f, p.a, mid);
        let (v2, e2) = gk15(f, mid, p.b);
        evaluations += 30;
        pieces.push(Piece { segment: p.segment, a: p.a, b: mid, value: v1, err: e1 });
        pieces.push(Piece { segment: p.segment, a: mid, b: p.b, value: v2, err: e2 });
    }
}

pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<Estimate> {
    integrate_segments(&[(a, b, &f)], abs_tol, rel_tol)
}

/// `∫_a^∞ f`, through `x = a + scale·t/(1-t)` on `t ∈ [0, 1)`.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    scale: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<Estimate> {
    let g = |t: f64| {
        let s = 1.0 - t;
        f(a + scale * t / s) * scale / (s * s)
    };
    integrate_segments(&[(0.0, 1.0, &g)], abs_tol, rel_tol)
}

/// Change of variables used by the Gamma expectations: the half line is
/// split at `a + k√a` for `k ∈ {-8,-3,0,3,8}` so that very concentrated laws
/// are resolved; the segment touching the origin is rewritten through
/// `y = z^{1/a}` when `a < 1` to remove the density's singularity, and the
/// tail is mapped onto `[0, 1)`.
struct GammaMap {
    a: f64,
    lg1: f64,
    breaks: Vec<f64>,
    tail_scale: f64,
}

impl GammaMap {
    fn new(a: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::InvalidInput(format!("gamma shape must be positive, got {a}")));
        }
        let sd = a.sqrt();
        let mut breaks: Vec<f64> = [-8.0, -3.0, 0.0, 3.0, 8.0]
            .iter()
            .map(|k| a + k * sd)
            .filter(|&b| b > 0.0)
            .collect();
        breaks.dedup();
        Ok(Self { a, lg1: ln_gamma(a + 1.0), breaks, tail_scale: sd.max(1.0) })
    }

    fn n_segments(&self) -> usize {
        self.breaks.len() + 1
    }

    fn bounds(&self, seg: usize) -> (f64, f64) {
        if seg == 0 {
            let first = self.breaks[0];
            (0.0, if self.a < 1.0 { first.powf(self.a) } else { first })
        } else if seg == self.n_segments() - 1 {
            (0.0, 1.0)
        } else {
            (self.breaks[seg - 1], self.breaks[seg])
        }
    }

    /// Point `y` and weight (density times Jacobian) for coordinate `x` of
    /// segment `seg`.
    fn map(&self, seg: usize, x: f64) -> (f64, f64) {
        let density = |y: f64| if y > 0.0 { ln_standard_gamma_pdf(self.a, y).exp() } else { 0.0 };
        if seg == 0 && self.a < 1.0 {
            let y = if x > 0.0 { x.powf(1.0 / self.a) } else { 0.0 };
            (y, (-y - self.lg1).exp())
        } else if seg == self.n_segments() - 1 {
            let s = 1.0 - x;
            let last = *self.breaks.last().expect("mean is always a break");
            let y = last + self.tail_scale * x / s;
            (y, density(y) * self.tail_scale / (s * s))
        } else {
            (x, density(x))
        }
    }
}

fn as_segments<'f>(map: &GammaMap, fns: &'f [Box<dyn Fn(f64) -> f64 + 'f>]) -> Vec<(f64, f64, &'f dyn Fn(f64) -> f64)> {
    fns.iter()
        .enumerate()
        .map(|(seg, f)| {
            let (lo, hi) = map.bounds(seg);
            (lo, hi, f.as_ref())
        })
        .collect()
}

/// `E g(Y)` for `Y ~ Gamma(shape a, rate 1)`, to relative accuracy `rel_tol`.
pub fn gamma_expectation<G: Fn(f64) -> f64>(a: f64, g: G, rel_tol: f64) -> Result<f64> {
    Ok(GammaRule::adapt(a, g, rel_tol)?.0)
}

/// A fixed Gauss–Kronrod rule for `E g(Y)`, `Y ~ Gamma(a, 1)`, whose
/// partition was adapted to one integrand. Applying it to a similar
/// integrand costs one pass over the stored nodes and carries its own error
/// estimate.
#[derive(Debug, Clone)]
pub struct GammaRule {
    nodes: Vec<[f64; 15]>,
    weights: Vec<[f64; 15]>,
    halves: Vec<f64>,
}

impl GammaRule {
    /// Adapts to `g` and returns the expectation with the resulting rule.
    ///
    /// The partition first resolves the density alone to `DENSITY_REL_TOL`
    /// and is then refined for `g`, so integrands flatter than `g` are
    /// covered too.
    pub fn adapt<G: Fn(f64) -> f64>(a: f64, g: G, rel_tol: f64) -> Result<(f64, Self)> {
        const DENSITY_REL_TOL: f64 = 1e-13;
        let map = GammaMap::new(a)?;
        let one = |_: f64| 1.0;
        let density_fns = Self::segment_fns(&map, &one);
        let fns = Self::segment_fns(&map, &g);
        let density_segments = as_segments(&map, &density_fns);
        let initial: Vec<(usize, f64, f64)> = density_segments.iter().enumerate().map(|(k, s)| (k, s.0, s.1)).collect();
        let (_, base) = adapt_segments(&density_segments, &initial, 1e-300, DENSITY_REL_TOL)?;
        let (_, partition) = adapt_segments(&as_segments(&map, &fns), &base, 1e-300, rel_tol)?;
        let mut rule = GammaRule { nodes: Vec::new(), weights: Vec::new(), halves: Vec::new() };
        for (seg, lo, hi) in partition {
            let xs = gk15_nodes(lo, hi);
            let mut ys = [0.0; 15];
            let mut ws = [0.0; 15];
            for i in 0..15 {
                (ys[i], ws[i]) = map.map(seg, xs[i]);
            }
            rule.nodes.push(ys);
            rule.weights.push(ws);
            rule.halves.push(0.5 * (hi - lo));
        }
        let (value, _) = rule.apply(&g);
        Ok((value, rule))
    }

    fn segment_fns<'m, G: Fn(f64) -> f64>(map: &'m GammaMap, g: &'m G) -> Vec<Box<dyn Fn(f64) -> f64 + 'm>> {
        (0..map.n_segments())
            .map(|seg| {
                Box::new(move |x: f64| {
                    let (y, w) = map.map(seg, x);
                    if w == 0.0 { 0.0 } else { w * g(y) }
                }) as Box<dyn Fn(f64) -> f64 + 'm>
            })
            .collect()
    }

    /// `(value, error estimate)` of `E g(Y)` on the stored partition.
    pub fn apply<G: Fn(f64) -> f64>(&self, g: G) -> (f64, f64) {
        let mut value = 0.0;
        let mut err = 0.0;
        let mut fv = [0.0; 15];
        for ((ys, ws), &half) in self.nodes.iter().zip(&self.weights).zip(&self.halves) {
            for i in 0..15 {
                fv[i] = if ws[i] == 0.0 { 0.0 } else { ws[i] * g(ys[i]) };
            }
            let (v, e) = gk15_combine(&fv, half);
            value += v;
            err += e;
        }
        (value, err)
    }

    pub fn n_pieces(&self) -> usize {
        self.halves.len()
    }
}
