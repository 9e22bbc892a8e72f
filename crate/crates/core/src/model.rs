//! Chirp signal model: synthesis, atoms, the structured measurement
//! operator `P` and its adjoint, and noise injection.
//!
//! All indexing is zero-based. A scene with `N` samples lifts into a
//! two-dimensional line spectrum of size `N x M` with `M = (N-1)^2 + 1`;
//! the chirp samples are the entries of the lifted vector at the indices
//! `n*M + n^2`.

use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::{Error, Result};

/// Unit-modulus phasor `exp(j*2*pi*cycles)`.
///
/// Every atom entry in this crate is produced by this one helper so that
/// algebraically equal synthesis paths are also bit-identical.
#[inline]
pub fn unit_phasor(cycles: f64) -> Complex64 {
    Complex64::from_polar(1.0, TAU * cycles)
}

/// Problem dimensions `N`, `M = (N-1)^2 + 1` and `N*M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemDims {
    n_samples: usize,
    m_inner: usize,
    total: usize,
}

impl ProblemDims {
    pub fn new(n_samples: usize) -> Result<Self> {
        if n_samples == 0 {
            return Err(Error::Domain {
                name: "n_samples",
                value: 0.0,
                domain: "positive integers",
            });
        }
        let m_inner = (n_samples - 1) * (n_samples - 1) + 1;
        Ok(Self {
            n_samples,
            m_inner,
            total: n_samples * m_inner,
        })
    }

    /// Number of time samples `N`.
    #[inline]
    pub fn n(&self) -> usize {
        self.n_samples
    }

    /// Inner dimension `M = (N-1)^2 + 1`.
    #[inline]
    pub fn m(&self) -> usize {
        self.m_inner
    }

    /// Lifted dimension `N*M`.
    #[inline]
    pub fn total(&self) -> usize {
        self.total
    }

    /// Linear index of `(n, m)` in the lifted vector.
    #[inline]
    pub fn lift_index(&self, n: usize, m: usize) -> usize {
        n * self.m_inner + m
    }

    /// Index selected by the `n`th measurement: `n*M + n^2`.
    #[inline]
    pub fn measured_index(&self, n: usize) -> usize {
        n * self.m_inner + n * n
    }
}

/// One chirp component: amplitude `c`, initial frequency `f` and rate `theta`,
/// both normalized to cycles/sample and cycles/sample^2 in `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ComponentRepr", into = "ComponentRepr")]
pub struct ChirpComponent {
    amplitude: Complex64,
    freq: f64,
    rate: f64,
}

#[derive(Serialize, Deserialize, Clone, Copy)]
struct ComponentRepr {
    re: f64,
    im: f64,
    f: f64,
    theta: f64,
}

impl TryFrom<ComponentRepr> for ChirpComponent {
    type Error = Error;
    fn try_from(r: ComponentRepr) -> Result<Self> {
        ChirpComponent::new(Complex64::new(r.re, r.im), r.f, r.theta)
    }
}

impl From<ChirpComponent> for ComponentRepr {
    fn from(c: ChirpComponent) -> Self {
        ComponentRepr {
            re: c.amplitude.re,
            im: c.amplitude.im,
            f: c.freq,
            theta: c.rate,
        }
    }
}

impl ChirpComponent {
    pub fn new(amplitude: Complex64, freq: f64, rate: f64) -> Result<Self> {
        check_unit_range("freq", freq)?;
        check_unit_range("rate", rate)?;
        if amplitude.norm_sqr() == 0.0 || !amplitude.is_finite() {
            return Err(Error::Scene("component amplitude must be nonzero".into()));
        }
        Ok(Self {
            amplitude,
            freq,
            rate,
        })
    }

    #[inline]
    pub fn amplitude(&self) -> Complex64 {
        self.amplitude
    }

    #[inline]
    pub fn freq(&self) -> f64 {
        self.freq
    }

    #[inline]
    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// `c / |c|`.
    #[inline]
    pub fn sign(&self) -> Complex64 {
        self.amplitude / self.amplitude.norm()
    }
}

fn check_unit_range(name: &'static str, value: f64) -> Result<()> {
    if !(0.0..1.0).contains(&value) || !value.is_finite() {
        return Err(Error::Domain {
            name,
            value,
            domain: "[0, 1)",
        });
    }
    Ok(())
}

/// A mixture of chirp components together with the sampling dimensions and
/// the rate band `[0, U]` assumed by the constrained formulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SceneRepr", into = "SceneRepr")]
pub struct ChirpScene {
    components: Vec<ChirpComponent>,
    dims: ProblemDims,
    rate_bound: f64,
}

#[derive(Serialize, Deserialize, Clone)]
struct SceneRepr {
    n: usize,
    rate_bound: f64,
    components: Vec<ChirpComponent>,
}

impl TryFrom<SceneRepr> for ChirpScene {
    type Error = Error;
    fn try_from(r: SceneRepr) -> Result<Self> {
        ChirpScene::new(r.n, r.rate_bound, r.components)
    }
}

impl From<ChirpScene> for SceneRepr {
    fn from(s: ChirpScene) -> Self {
        SceneRepr {
            n: s.dims.n(),
            rate_bound: s.rate_bound,
            components: s.components,
        }
    }
}

impl ChirpScene {
    /// Builds a scene. Rates above `rate_bound` are rejected; a bound above
    /// `1` is a hard error, while a bound above `1/N` is merely flagged by
    /// [`ChirpScene::exceeds_alias_bound`] so the aliasing regime can still
    /// be explored deliberately.
    pub fn new(
        n_samples: usize,
        rate_bound: f64,
        components: Vec<ChirpComponent>,
    ) -> Result<Self> {
        let dims = ProblemDims::new(n_samples)?;
        if !(rate_bound > 0.0 && rate_bound <= 1.0) {
            return Err(Error::Domain {
                name: "rate_bound",
                value: rate_bound,
                domain: "(0, 1]",
            });
        }
        for (k, c) in components.iter().enumerate() {
            if c.rate() > rate_bound {
                return Err(Error::Scene(format!(
                    "component {k} has rate {} above the bound {rate_bound}",
                    c.rate()
                )));
            }
        }
        Ok(Self {
            components,
            dims,
            rate_bound,
        })
    }

    #[inline]
    pub fn components(&self) -> &[ChirpComponent] {
        &self.components
    }

    #[inline]
    pub fn dims(&self) -> ProblemDims {
        self.dims
    }

    #[inline]
    pub fn rate_bound(&self) -> f64 {
        self.rate_bound
    }

    /// True when the configured band exceeds the `1/N` identifiability bound.
    pub fn exceeds_alias_bound(&self) -> bool {
        self.rate_bound > 1.0 / self.dims.n() as f64
    }

    /// Sum of component amplitude moduli; upper bound for the atomic norm of
    /// the lifted signal.
    pub fn amplitude_l1(&self) -> f64 {
        self.components.iter().map(|c| c.amplitude().norm()).sum()
    }
}

/// Complex samples `x(0..N-1)` with the noise bookkeeping needed to
/// reproduce them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasurementsRepr", into = "MeasurementsRepr")]
pub struct Measurements {
    samples: Vec<Complex64>,
    snr_db: Option<f64>,
    seed: Option<u64>,
}

#[derive(Serialize, Deserialize, Clone)]
struct MeasurementsRepr {
    samples: Vec<ReIm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    snr_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Serialize, Deserialize, Clone, Copy)]
struct ReIm {
    re: f64,
    im: f64,
}

impl TryFrom<MeasurementsRepr> for Measurements {
    type Error = Error;
    fn try_from(r: MeasurementsRepr) -> Result<Self> {
        Ok(Measurements {
            samples: r
                .samples
                .iter()
                .map(|s| Complex64::new(s.re, s.im))
                .collect(),
            snr_db: r.snr_db,
            seed: r.seed,
        })
    }
}

impl From<Measurements> for MeasurementsRepr {
    fn from(m: Measurements) -> Self {
        MeasurementsRepr {
            samples: m
                .samples
                .iter()
                .map(|s| ReIm { re: s.re, im: s.im })
                .collect(),
            snr_db: m.snr_db,
            seed: m.seed,
        }
    }
}

impl Measurements {
    pub fn new(samples: Vec<Complex64>) -> Self {
        Self {
            samples,
            snr_db: None,
            seed: None,
        }
    }

    #[inline]
    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    #[inline]
    pub fn snr_db(&self) -> Option<f64> {
        self.snr_db
    }

    #[inline]
    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn norm(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}

/// Frequency atom `a(f)[n] = exp(j*2*pi*n*f)`, length `N`.
pub fn atom_a(f: f64, dims: ProblemDims) -> Result<Vec<Complex64>> {
    check_unit_range("f", f)?;
    Ok((0..dims.n()).map(|n| unit_phasor(n as f64 * f)).collect())
}

/// Rate atom `b(theta)[m] = exp(j*2*pi*m*theta)`, length `M`.
pub fn atom_b(theta: f64, dims: ProblemDims) -> Result<Vec<Complex64>> {
    check_unit_range("theta", theta)?;
    Ok((0..dims.m())
        .map(|m| unit_phasor(m as f64 * theta))
        .collect())
}

/// Lifted atom `d(f, theta) = a(f) (x) b(theta)`, length `N*M`.
pub fn atom_d(f: f64, theta: f64, dims: ProblemDims) -> Result<Vec<Complex64>> {
    let a = atom_a(f, dims)?;
    let b = atom_b(theta, dims)?;
    let mut d = Vec::with_capacity(dims.total());
    for an in &a {
        for bm in &b {
            d.push(an * bm);
        }
    }
    Ok(d)
}

/// The structured measurement operator `P`: selects the entries
/// `z[n*M + n^2]`, `n = 0..N-1`.
pub fn measure(z: &[Complex64], dims: ProblemDims) -> Result<Vec<Complex64>> {
    if z.len() != dims.total() {
        return Err(Error::Dimension {
            what: "lifted vector",
            expected: dims.total(),
            got: z.len(),
        });
    }
    Ok((0..dims.n()).map(|n| z[dims.measured_index(n)]).collect())
}

/// Adjoint `P*`: scatters `q(n)` back to the indices `n*M + n^2`.
pub fn measure_adjoint(q: &[Complex64], dims: ProblemDims) -> Result<Vec<Complex64>> {
    if q.len() != dims.n() {
        return Err(Error::Dimension {
            what: "measurement vector",
            expected: dims.n(),
            got: q.len(),
        });
    }
    let mut z = vec![Complex64::ZERO; dims.total()];
    for (n, qn) in q.iter().enumerate() {
        z[dims.measured_index(n)] = *qn;
    }
    Ok(z)
}

/// Synthesizes the noise-free samples
/// `x(n) = sum_k c_k exp(j*2*pi*(f_k*n + theta_k*n^2))`.
///
/// Evaluates through the same phasor products as the lifted path, so the
/// result is bit-identical to `measure(sum_k c_k * atom_d(f_k, theta_k))`.
pub fn synthesize(scene: &ChirpScene) -> Measurements {
    let dims = scene.dims();
    let samples = (0..dims.n())
        .map(|n| {
            let mut acc = Complex64::ZERO;
            for c in scene.components() {
                let an = unit_phasor(n as f64 * c.freq());
                let bm = unit_phasor((n * n) as f64 * c.rate());
                acc += c.amplitude() * (an * bm);
            }
            acc
        })
        .collect();
    Measurements::new(samples)
}

/// Adds circularly-symmetric complex Gaussian noise at the requested SNR.
///
/// Per-sample noise variance is `(||x||^2 / N) * 10^(-snr_db/10)`, with
/// independent real and imaginary parts of variance `sigma^2 / 2`. The same
/// seed always produces the same noise.
pub fn add_noise(x: &Measurements, snr_db: f64, seed: u64) -> Measurements {
    let n = x.len();
    let signal_power = x.samples().iter().map(|s| s.norm_sqr()).sum::<f64>() / n as f64;
    let sigma2 = signal_power * 10f64.powf(-snr_db / 10.0);
    let scale = (sigma2 / 2.0).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = x
        .samples()
        .iter()
        .map(|s| {
            let (g_re, g_im) = gaussian_pair(&mut rng);
            s + Complex64::new(scale * g_re, scale * g_im)
        })
        .collect();
    Measurements {
        samples,
        snr_db: Some(snr_db),
        seed: Some(seed),
    }
}

/// Standard-normal pair via Box-Muller on explicit 53-bit uniforms.
fn gaussian_pair(rng: &mut ChaCha8Rng) -> (f64, f64) {
    // u1 in (0, 1]: avoids log(0).
    let u1 = ((rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
    let u2 = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    let r = (-2.0 * u1.ln()).sqrt();
    (r * (TAU * u2).cos(), r * (TAU * u2).sin())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn assert_close(a: Complex64, b: Complex64, tol: f64) {
        assert!(
            (a - b).norm() <= tol,
            "expected {b}, got {a} (|diff| = {})",
            (a - b).norm()
        );
    }

    #[test]
    fn dims_arithmetic() {
        let d = ProblemDims::new(25).unwrap();
        assert_eq!(d.n(), 25);
        assert_eq!(d.m(), 577);
        assert_eq!(d.total(), 14425);
        assert!(ProblemDims::new(0).is_err());
    }

    #[test]
    fn atom_a_known_values() {
        let d = ProblemDims::new(4).unwrap();
        let ones = atom_a(0.0, d).unwrap();
        assert_eq!(ones, vec![c(1.0, 0.0); 4]);

        let alt = atom_a(0.5, d).unwrap();
        for (n, v) in alt.iter().enumerate() {
            let want = if n % 2 == 0 { c(1.0, 0.0) } else { c(-1.0, 0.0) };
            assert_close(*v, want, 1e-15);
        }

        let quarter = atom_a(0.25, d).unwrap();
        let want = [c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 0.0), c(0.0, -1.0)];
        for (v, w) in quarter.iter().zip(want) {
            assert_close(*v, w, 1e-15);
        }

        assert!(atom_a(1.0, d).is_err());
        assert!(atom_a(-0.1, d).is_err());
    }

    #[test]
    fn atom_b_known_values() {
        let d = ProblemDims::new(4).unwrap();
        assert_eq!(d.m(), 10);
        let ones = atom_b(0.0, d).unwrap();
        assert_eq!(ones, vec![c(1.0, 0.0); 10]);

        let alt = atom_b(0.5, d).unwrap();
        for (m, v) in alt.iter().enumerate() {
            let want = if m % 2 == 0 { 1.0 } else { -1.0 };
            assert_close(*v, c(want, 0.0), 1e-12);
        }

        // Endpoint entry is exp(j*2*pi*(N-1)^2*theta).
        let theta = 0.0137;
        let b = atom_b(theta, d).unwrap();
        let endpoint = (d.n() - 1) * (d.n() - 1);
        assert_close(b[endpoint], unit_phasor(endpoint as f64 * theta), 0.0);
        assert!(atom_b(1.2, d).is_err());
    }

    #[test]
    fn atom_d_is_kronecker_product() {
        let d = ProblemDims::new(4).unwrap();
        let all = atom_d(0.0, 0.0, d).unwrap();
        assert_eq!(all, vec![c(1.0, 0.0); 40]);

        // Measured-index identity d[nM + n^2] = exp(j*2*pi*(f*n + theta*n^2)).
        let (f, theta) = (0.37, 0.21);
        let atom = atom_d(f, theta, d).unwrap();
        for n in 0..d.n() {
            let direct = unit_phasor(n as f64 * f) * unit_phasor((n * n) as f64 * theta);
            assert_close(atom[d.measured_index(n)], direct, 0.0);
        }
    }

    #[test]
    fn atom_d_matches_elementwise_oracle_at_paper_size() {
        // Oracle: evaluate exp(j*2*pi*(f*n + theta*m)) per element, without
        // going through the Kronecker product.
        let d = ProblemDims::new(25).unwrap();
        let (f, theta) = (0.165, 0.013);
        let atom = atom_d(f, theta, d).unwrap();
        assert_eq!(atom.len(), 14425);
        for n in (0..d.n()).step_by(3) {
            for m in (0..d.m()).step_by(41) {
                let oracle = unit_phasor(f * n as f64 + theta * m as f64);
                assert_close(atom[d.lift_index(n, m)], oracle, 1e-12);
            }
        }
    }

    #[test]
    fn measure_selects_lifted_entries() {
        let d = ProblemDims::new(4).unwrap();
        let (f, theta) = (0.123, 0.456);
        let atom = atom_d(f, theta, d).unwrap();
        let x = measure(&atom, d).unwrap();
        for (n, v) in x.iter().enumerate() {
            let want = unit_phasor(n as f64 * f) * unit_phasor((n * n) as f64 * theta);
            assert_close(*v, want, 0.0);
        }

        let ones = vec![c(1.0, 0.0); d.total()];
        assert_eq!(measure(&ones, d).unwrap(), vec![c(1.0, 0.0); 4]);

        let mut e0 = vec![Complex64::ZERO; d.total()];
        e0[0] = c(1.0, 0.0);
        let picked = measure(&e0, d).unwrap();
        assert_eq!(picked[0], c(1.0, 0.0));
        assert!(picked[1..].iter().all(|v| *v == Complex64::ZERO));

        assert!(measure(&ones[..5], d).is_err());
    }

    #[test]
    fn measure_adjoint_identity_and_inverse() {
        let d = ProblemDims::new(6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut rand_c = |len: usize| -> Vec<Complex64> {
            (0..len)
                .map(|_| {
                    let (a, b) = gaussian_pair(&mut rng);
                    c(a, b)
                })
                .collect()
        };
        for _ in 0..100 {
            let z = rand_c(d.total());
            let q = rand_c(d.n());
            let pz = measure(&z, d).unwrap();
            let pq = measure_adjoint(&q, d).unwrap();
            // <P z, q> = <z, P* q>
            let lhs: Complex64 = pz.iter().zip(&q).map(|(a, b)| a * b.conj()).sum();
            let rhs: Complex64 = z.iter().zip(&pq).map(|(a, b)| a * b.conj()).sum();
            let scale = lhs.norm().max(1.0);
            assert!((lhs - rhs).norm() / scale < 1e-12);
            // P P* = I
            let back = measure(&pq, d).unwrap();
            for (a, b) in back.iter().zip(&q) {
                assert_eq!(a, b);
            }
        }

        let single = measure_adjoint(&[c(1.0, 0.0), Complex64::ZERO], ProblemDims::new(2).unwrap())
            .unwrap();
        assert_eq!(single[0], c(1.0, 0.0));
        assert_eq!(single.iter().filter(|v| **v != Complex64::ZERO).count(), 1);
    }

    #[test]
    fn synthesize_quarter_cycle() {
        let scene = ChirpScene::new(
            4,
            0.5,
            vec![ChirpComponent::new(c(1.0, 0.0), 0.25, 0.0).unwrap()],
        )
        .unwrap();
        let x = synthesize(&scene);
        let want = [c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 0.0), c(0.0, -1.0)];
        for (v, w) in x.samples().iter().zip(want) {
            assert_close(*v, w, 1e-15);
        }
    }

    #[test]
    fn synthesize_single_sample_value() {
        // n = 1, f = 0.165, theta = 0.013 -> exp(j*2*pi*0.178)
        let scene = ChirpScene::new(
            25,
            0.02,
            vec![ChirpComponent::new(c(1.0, 0.0), 0.165, 0.013).unwrap()],
        )
        .unwrap();
        let x = synthesize(&scene);
        assert_close(x.samples()[1], unit_phasor(0.178), 1e-12);
    }

    #[test]
    fn synthesize_bit_identical_to_lifted_measurement() {
        let scene = paper_scene();
        let d = scene.dims();
        let mut z = vec![Complex64::ZERO; d.total()];
        for comp in scene.components() {
            let atom = atom_d(comp.freq(), comp.rate(), d).unwrap();
            for (zi, ai) in z.iter_mut().zip(&atom) {
                *zi += comp.amplitude() * ai;
            }
        }
        let via_lift = measure(&z, d).unwrap();
        let direct = synthesize(&scene);
        assert_eq!(direct.samples(), via_lift.as_slice());
    }

    fn paper_scene() -> ChirpScene {
        ChirpScene::new(
            25,
            0.02,
            vec![
                ChirpComponent::new(c(1.0, 0.0), 0.165, 0.013).unwrap(),
                ChirpComponent::new(c(1.0, 0.0), 0.524, 0.0075).unwrap(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn aliasing_ambiguity_half_shifts() {
        // (f, theta) and (f +- 1/2, theta +- 1/2) synthesize identical samples.
        let base = ChirpScene::new(
            8,
            1.0,
            vec![ChirpComponent::new(c(0.7, -0.4), 0.31, 0.11).unwrap()],
        )
        .unwrap();
        let shifted = ChirpScene::new(
            8,
            1.0,
            vec![ChirpComponent::new(c(0.7, -0.4), 0.81, 0.61).unwrap()],
        )
        .unwrap();
        let xa = synthesize(&base);
        let xb = synthesize(&shifted);
        for (a, b) in xa.samples().iter().zip(xb.samples()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn scene_validation() {
        let comp = ChirpComponent::new(c(1.0, 0.0), 0.1, 0.3).unwrap();
        assert!(ChirpScene::new(8, 0.2, vec![comp]).is_err()); // rate above bound
        assert!(ChirpScene::new(8, 1.5, vec![]).is_err()); // bound above 1
        let s = ChirpScene::new(8, 0.4, vec![comp]).unwrap();
        assert!(s.exceeds_alias_bound()); // 0.4 > 1/8, allowed but flagged
        let s = ChirpScene::new(8, 0.125, vec![]).unwrap();
        assert!(!s.exceeds_alias_bound());
        assert!(ChirpComponent::new(Complex64::ZERO, 0.1, 0.0).is_err());
    }

    #[test]
    fn noise_deterministic_and_infinite_snr() {
        let scene = paper_scene();
        let x = synthesize(&scene);
        let a = add_noise(&x, 20.0, 42);
        let b = add_noise(&x, 20.0, 42);
        assert_eq!(a.samples(), b.samples());
        assert_ne!(a.samples(), x.samples());
        assert_eq!(a.seed(), Some(42));
        assert_eq!(a.snr_db(), Some(20.0));

        let clean = add_noise(&x, f64::INFINITY, 1);
        assert_eq!(clean.samples(), x.samples());
    }

    #[test]
    fn noise_hits_target_snr_empirically() {
        // Monte-Carlo oracle: average in/out power ratio over 10^4 seeds.
        let scene = paper_scene();
        let x = synthesize(&scene);
        let signal_power: f64 = x.samples().iter().map(|s| s.norm_sqr()).sum();
        let target_db = 20.0;
        let mut noise_power = 0.0;
        let trials = 10_000u64;
        for seed in 0..trials {
            let noisy = add_noise(&x, target_db, seed);
            noise_power += noisy
                .samples()
                .iter()
                .zip(x.samples())
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>();
        }
        let snr_db = 10.0 * (signal_power / (noise_power / trials as f64)).log10();
        assert!(
            (snr_db - target_db).abs() < 0.5,
            "empirical SNR {snr_db:.3} dB vs target {target_db} dB"
        );
    }

    #[test]
    fn scene_and_measurements_json_round_trip() {
        let scene = paper_scene();
        let s = serde_json::to_string(&scene).unwrap();
        assert!(s.contains("\"theta\":0.013"));
        let back: ChirpScene = serde_json::from_str(&s).unwrap();
        assert_eq!(back, scene);

        let x = add_noise(&synthesize(&scene), 20.0, 3);
        let s = serde_json::to_string(&x).unwrap();
        assert!(s.contains("\"seed\":3"));
        let back: Measurements = serde_json::from_str(&s).unwrap();
        assert_eq!(back, x);
    }
}
