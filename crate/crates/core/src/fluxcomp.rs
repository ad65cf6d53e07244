//! Flux-pulse distortion compensation: measured or parametric step
//! responses are turned into frequency responses, inverted into causal
//! time-domain kernels with spectral regularization, and convolved with
//! target waveforms to pre-distort them. Includes the frequency-by-frequency
//! inversion of the multichannel crosstalk matrix and net-zero pulse
//! balancing.
//!
//! Waveforms are uniformly sampled at 1 ns by default, matching 1 GS/s
//! generators; frequencies below are in GHz (1/ns).

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::FftPlanner;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FluxError {
    #[error("waveform must contain samples")]
    EmptyWaveform,
    #[error("waveform sample period must be positive, got {0}")]
    BadSamplePeriod(f64),
    #[error("waveform contains non-finite samples")]
    NonFiniteSamples,
    #[error("step response has not settled: tail deviation {deviation:.3e} exceeds 1% of its mean")]
    UnsettledStep { deviation: f64 },
    #[error("step response has zero steady-state gain")]
    ZeroDcGain,
    #[error("kernel matrix ill-conditioned at {freq_ghz:.4} GHz (condition number {cond:.3e})")]
    IllConditioned { freq_ghz: f64, cond: f64 },
    #[error("response model channel grids disagree")]
    MismatchedGrids,
    #[error("channel index {got} out of range for {n} channels")]
    BadChannel { got: usize, n: usize },
    #[error("balance duration must be positive, got {0}")]
    BadBalanceDuration(f64),
    #[error("net-zero balancing needs amplitude {required:.4}, limit is {limit:.4}")]
    BalanceAmplitudeExceeded { required: f64, limit: f64 },
    #[error("csv parse error at line {line}: {msg}")]
    CsvParse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Uniformly sampled real control signal.
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    /// Sample period in ns.
    pub dt_ns: f64,
    /// Start time of the first sample in ns.
    pub t0_ns: f64,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, dt_ns: f64) -> Result<Self, FluxError> {
        if samples.is_empty() {
            return Err(FluxError::EmptyWaveform);
        }
        if !(dt_ns > 0.0) {
            return Err(FluxError::BadSamplePeriod(dt_ns));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(FluxError::NonFiniteSamples);
        }
        Ok(Self { samples, dt_ns, t0_ns: 0.0 })
    }

    pub fn unit_step(len: usize) -> Self {
        Self { samples: vec![1.0; len], dt_ns: 1.0, t0_ns: 0.0 }
    }

    /// Square pulse: `amplitude` for the first `high_ns`, zero afterwards.
    pub fn square(amplitude: f64, high_ns: usize, total_ns: usize) -> Self {
        let mut samples = vec![0.0; total_ns];
        for s in samples.iter_mut().take(high_ns) {
            *s = amplitude;
        }
        Self { samples, dt_ns: 1.0, t0_ns: 0.0 }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Time integral `Σ s·dt` in (value·ns).
    pub fn area(&self) -> f64 {
        self.samples.iter().sum::<f64>() * self.dt_ns
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0f64, |m, &s| m.max(s.abs()))
    }

    /// CSV export with header `t_ns,value`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t_ns,value")?;
        for (k, s) in self.samples.iter().enumerate() {
            writeln!(w, "{},{:.16e}", self.t0_ns + k as f64 * self.dt_ns, s)?;
        }
        Ok(())
    }

    pub fn read_csv<R: std::io::BufRead>(r: R) -> Result<Self, FluxError> {
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || (i == 0 && line.starts_with("t_ns")) {
                continue;
            }
            let mut parts = line.split(',');
            let parse = |s: Option<&str>| -> Result<f64, FluxError> {
                s.ok_or_else(|| FluxError::CsvParse { line: i + 1, msg: "missing column".into() })?
                    .trim()
                    .parse()
                    .map_err(|e| FluxError::CsvParse { line: i + 1, msg: format!("{e}") })
            };
            times.push(parse(parts.next())?);
            values.push(parse(parts.next())?);
        }
        if values.is_empty() {
            return Err(FluxError::EmptyWaveform);
        }
        let dt = if times.len() >= 2 { times[1] - times[0] } else { 1.0 };
        for w in times.windows(2) {
            if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.abs().max(1.0) {
                return Err(FluxError::CsvParse {
                    line: 0,
                    msg: "nonuniform sample grid".into(),
                });
            }
        }
        let mut wf = Waveform::new(values, dt)?;
        wf.t0_ns = times[0];
        Ok(wf)
    }
}

/// One channel-pair response: how flux on a qubit follows current on a line.
#[derive(Clone, Debug)]
pub enum Response {
    /// Measured step response.
    Measured(Waveform),
    /// Parametric settle `s(t) = gain · (1 − Σ_k a_k e^{−t/τ_k})`.
    ExponentialSettle { gain: f64, amplitudes: Vec<f64>, taus_ns: Vec<f64> },
    /// Frequency-flat gain (static crosstalk entry).
    Static(f64),
}

impl Response {
    /// Step response sampled on `len` points at `dt_ns`.
    pub fn step_response(&self, len: usize, dt_ns: f64) -> Waveform {
        match self {
            Response::Measured(w) => {
                let mut samples = w.samples.clone();
                samples.resize(len, *w.samples.last().unwrap_or(&0.0));
                Waveform { samples, dt_ns: w.dt_ns, t0_ns: w.t0_ns }
            }
            Response::ExponentialSettle { gain, amplitudes, taus_ns } => {
                let samples = (0..len)
                    .map(|k| {
                        let t = k as f64 * dt_ns;
                        let settle: f64 = amplitudes
                            .iter()
                            .zip(taus_ns)
                            .map(|(a, tau)| a * (-t / tau).exp())
                            .sum();
                        gain * (1.0 - settle)
                    })
                    .collect();
                Waveform { samples, dt_ns, t0_ns: 0.0 }
            }
            Response::Static(gain) => Waveform { samples: vec![*gain; len], dt_ns, t0_ns: 0.0 },
        }
    }

    /// Discrete impulse response: first difference of the step response,
    /// `h[0] = s[0]`, so a step input reproduces the step response exactly.
    pub fn impulse_response(&self, len: usize, dt_ns: f64) -> Vec<f64> {
        let s = self.step_response(len, dt_ns);
        let mut h = Vec::with_capacity(len);
        let mut prev = 0.0;
        for &v in &s.samples {
            h.push(v - prev);
            prev = v;
        }
        h
    }
}

/// Per-channel-pair response matrix: `responses[i][j]` is the flux response
/// on qubit `i` to a step on flux line `j`.
#[derive(Clone, Debug)]
pub struct ResponseModel {
    pub n_channels: usize,
    pub responses: Vec<Vec<Response>>,
}

impl ResponseModel {
    pub fn single(response: Response) -> Self {
        Self { n_channels: 1, responses: vec![vec![response]] }
    }

    /// Frequency-flat crosstalk matrix.
    pub fn from_static_matrix(m: &DMatrix<f64>) -> Self {
        let n = m.nrows();
        let responses = (0..n)
            .map(|i| (0..n).map(|j| Response::Static(m[(i, j)])).collect())
            .collect();
        Self { n_channels: n, responses }
    }
}

/// Complex transfer function on a padded FFT grid.
#[derive(Clone, Debug)]
pub struct FrequencyResponse {
    /// All `n` FFT bins of the impulse response.
    pub bins: Vec<Complex64>,
    pub dt_ns: f64,
}

impl FrequencyResponse {
    pub fn n(&self) -> usize {
        self.bins.len()
    }

    pub fn dc(&self) -> Complex64 {
        self.bins[0]
    }

    pub fn bin_freq_ghz(&self, k: usize) -> f64 {
        let n = self.n();
        let k = if k <= n / 2 { k } else { n - k };
        k as f64 / (n as f64 * self.dt_ns)
    }
}

fn next_pow2(n: usize) -> usize {
    n.next_power_of_two()
}

fn fft_real(h: &[f64], n: usize) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = h.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    buf.resize(n, Complex64::ZERO);
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    buf
}

fn ifft(bins: &[Complex64]) -> Vec<Complex64> {
    let n = bins.len();
    let mut buf = bins.to_vec();
    FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    for b in &mut buf {
        *b *= scale;
    }
    buf
}

fn check_settled(step: &Waveform) -> Result<(), FluxError> {
    let n = step.len();
    let tail = &step.samples[n - (n / 10).max(1)..];
    let mean: f64 = tail.iter().sum::<f64>() / tail.len() as f64;
    let deviation = tail.iter().map(|s| (s - mean).abs()).fold(0.0, f64::max);
    if deviation > 0.01 * mean.abs().max(1e-12) {
        return Err(FluxError::UnsettledStep { deviation });
    }
    Ok(())
}

/// Transfer function `H(f) = F[ds/dt]` of a settled step response; at DC it
/// equals the steady-state gain.
pub fn frequency_response(step: &Waveform) -> Result<FrequencyResponse, FluxError> {
    if step.is_empty() {
        return Err(FluxError::EmptyWaveform);
    }
    check_settled(step)?;
    let mut h = Vec::with_capacity(step.len());
    let mut prev = 0.0;
    for &v in &step.samples {
        h.push(v - prev);
        prev = v;
    }
    let n = next_pow2(2 * step.len());
    Ok(FrequencyResponse { bins: fft_real(&h, n), dt_ns: step.dt_ns })
}

/// Raised-cosine spectral mask: unity up to `f_c = 1/(2·cutoff)`, cos² roll
/// to zero at `3 f_c`. The two-octave roll-off keeps the zero-phase mask's
/// time-domain smear well inside the cutoff window.
fn spectral_mask(freq_ghz: f64, cutoff_time_ns: f64) -> f64 {
    if !cutoff_time_ns.is_finite() {
        return 0.0;
    }
    let f_c = 1.0 / (2.0 * cutoff_time_ns);
    let f = freq_ghz.abs();
    if f <= f_c {
        1.0
    } else if f >= 3.0 * f_c {
        0.0
    } else {
        let x = 0.5 * (f - f_c) / f_c; // 0..1 across the rolloff band
        (0.5 * std::f64::consts::PI * x).cos().powi(2)
    }
}

/// Inverse-filter kernel with diagnostics from the regularized inversion.
#[derive(Clone, Debug)]
pub struct Kernel {
    pub waveform: Waveform,
    /// Tikhonov floor `1e-3 · max|H|` used in the inversion.
    pub regularization_floor: f64,
    /// Passband bins where `|H|` fell below the floor.
    pub floored_bins: usize,
    /// Energy removed by the causal truncation, as a fraction of the total.
    pub acausal_energy_fraction: f64,
}

/// Causal inverse-filter kernel from a transfer function. Distortions
/// faster than `cutoff_time_ns` are left uncompensated: outside the mask
/// the kernel falls back to plain DC-gain correction, and
/// `cutoff_time_ns = ∞` reduces it to a scaled unit impulse. The kernel has
/// exact DC gain `1/H(0)`.
pub fn compensation_kernel(
    fr: &FrequencyResponse,
    cutoff_time_ns: f64,
) -> Result<Kernel, FluxError> {
    let h0 = fr.dc();
    if h0.norm() < 1e-12 {
        return Err(FluxError::ZeroDcGain);
    }
    let n = fr.n();
    let dc_gain = (Complex64::ONE / h0).re;

    if !cutoff_time_ns.is_finite() {
        let mut samples = vec![0.0; n / 2];
        samples[0] = dc_gain;
        return Ok(Kernel {
            waveform: Waveform { samples, dt_ns: fr.dt_ns, t0_ns: 0.0 },
            regularization_floor: 0.0,
            floored_bins: 0,
            acausal_energy_fraction: 0.0,
        });
    }

    let max_h = fr.bins.iter().map(|b| b.norm()).fold(0.0, f64::max);
    let floor = 1e-3 * max_h;
    let floor_sq = floor * floor;
    let mut floored_bins = 0usize;

    let mut k_bins = vec![Complex64::ZERO; n];
    let k_dc = Complex64::new(dc_gain, 0.0);
    for k in 0..=n / 2 {
        let f = k as f64 / (n as f64 * fr.dt_ns);
        let mask = spectral_mask(f, cutoff_time_ns);
        let h = fr.bins[k];
        if mask > 0.0 && h.norm() < floor {
            floored_bins += 1;
        }
        let k_reg = h.conj() / (h.norm_sqr() + floor_sq);
        let val = k_dc + (k_reg - k_dc) * mask;
        k_bins[k] = val;
        if k != 0 && k != n / 2 {
            k_bins[n - k] = val.conj();
        }
    }

    let time = ifft(&k_bins);
    let total_energy: f64 = time.iter().map(|z| z.norm_sqr()).sum();
    let acausal_energy: f64 = time[n / 2..].iter().map(|z| z.norm_sqr()).sum();
    let mut samples: Vec<f64> = time[..n / 2].iter().map(|z| z.re).collect();
    // exact DC gain after truncation
    let sum: f64 = samples.iter().sum();
    if sum.abs() > 1e-300 {
        let scale = dc_gain / sum;
        for s in &mut samples {
            *s *= scale;
        }
    }
    Ok(Kernel {
        waveform: Waveform { samples, dt_ns: fr.dt_ns, t0_ns: 0.0 },
        regularization_floor: floor,
        floored_bins,
        acausal_energy_fraction: if total_energy > 0.0 {
            acausal_energy / total_energy
        } else {
            0.0
        },
    })
}

/// Linear convolution of two sampled signals.
pub fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let out_len = a.len() + b.len() - 1;
    let n = next_pow2(out_len);
    let fa = fft_real(a, n);
    let fb = fft_real(b, n);
    let prod: Vec<Complex64> = fa.iter().zip(&fb).map(|(x, y)| x * y).collect();
    ifft(&prod)[..out_len].iter().map(|z| z.re).collect()
}

/// Time-domain kernel matrix inverting the multichannel response:
/// `kernels[j][i]` maps target flux on qubit `i` to drive on line `j`.
#[derive(Clone, Debug)]
pub struct KernelMatrix {
    pub n_channels: usize,
    pub dt_ns: f64,
    pub cutoff_time_ns: f64,
    pub kernels: Vec<Vec<Vec<f64>>>,
}

/// Frequency-by-frequency regularized inversion of the response matrix,
/// masked like the scalar kernel and causally truncated, with exact static
/// inversion at DC.
pub fn build_kernel_matrix(
    model: &ResponseModel,
    response_len: usize,
    dt_ns: f64,
    cutoff_time_ns: f64,
) -> Result<KernelMatrix, FluxError> {
    let nc = model.n_channels;
    if model.responses.len() != nc || model.responses.iter().any(|r| r.len() != nc) {
        return Err(FluxError::MismatchedGrids);
    }
    for row in &model.responses {
        for r in row {
            // measured responses must have settled; parametric ones also
            // pass through the same check for uniformity
            check_settled(&r.step_response(response_len, dt_ns))?;
        }
    }
    let n = next_pow2(2 * response_len);
    let spectra: Vec<Vec<Vec<Complex64>>> = model
        .responses
        .iter()
        .map(|row| {
            row.iter()
                .map(|r| fft_real(&r.impulse_response(response_len, dt_ns), n))
                .collect()
        })
        .collect();

    let h_at = |k: usize| {
        DMatrix::from_fn(nc, nc, |i, j| spectra[i][j][k])
    };
    let h0 = h_at(0);
    let h0_real = h0.map(|z| z.re);
    let k_dc = h0_real
        .try_inverse()
        .ok_or(FluxError::IllConditioned { freq_ghz: 0.0, cond: f64::INFINITY })?
        .map(|x| Complex64::new(x, 0.0));

    // global Tikhonov floor from the largest singular value on the grid
    let mut smax_global = 0.0f64;
    for k in 0..=n / 2 {
        let s = h_at(k).svd(false, false).singular_values.max();
        smax_global = smax_global.max(s);
    }
    let lambda = (1e-3 * smax_global).powi(2);

    let finite_cutoff = cutoff_time_ns.is_finite();
    let mut k_bins: Vec<DMatrix<Complex64>> =
        vec![DMatrix::zeros(nc, nc); n];
    for k in 0..=n / 2 {
        let f = k as f64 / (n as f64 * dt_ns);
        let mask = if finite_cutoff { spectral_mask(f, cutoff_time_ns) } else { 0.0 };
        let km = if mask == 0.0 {
            k_dc.clone()
        } else {
            let h = h_at(k);
            let svd = h.clone().svd(false, false);
            let cond = svd.singular_values.max() / svd.singular_values.min().max(1e-300);
            if cond > 1e6 {
                return Err(FluxError::IllConditioned { freq_ghz: f, cond });
            }
            let hh = h.adjoint() * &h
                + DMatrix::<Complex64>::identity(nc, nc) * Complex64::new(lambda, 0.0);
            let k_reg = hh
                .try_inverse()
                .ok_or(FluxError::IllConditioned { freq_ghz: f, cond })?
                * h.adjoint();
            &k_dc + (k_reg - &k_dc) * Complex64::new(mask, 0.0)
        };
        k_bins[k] = km.clone();
        if k != 0 && k != n / 2 {
            k_bins[n - k] = km.map(|z| z.conj());
        }
    }

    let mut kernels = vec![vec![Vec::new(); nc]; nc];
    for j in 0..nc {
        for i in 0..nc {
            let bins: Vec<Complex64> = (0..n).map(|k| k_bins[k][(j, i)]).collect();
            let time = ifft(&bins);
            let mut samples: Vec<f64> = time[..n / 2].iter().map(|z| z.re).collect();
            let target = k_dc[(j, i)].re;
            let sum: f64 = samples.iter().sum();
            if target.abs() > 1e-15 && sum.abs() > 1e-300 {
                let scale = target / sum;
                for s in &mut samples {
                    *s *= scale;
                }
            }
            kernels[j][i] = samples;
        }
    }
    Ok(KernelMatrix { n_channels: nc, dt_ns, cutoff_time_ns, kernels })
}

/// Pre-compensate a target flux pulse on one qubit: returns the waveform to
/// play on every flux line. The single-channel case reduces to
/// `kernel * target`.
pub fn precompensate(
    target: &Waveform,
    kernels: &KernelMatrix,
    channel: usize,
) -> Result<Vec<Waveform>, FluxError> {
    if channel >= kernels.n_channels {
        return Err(FluxError::BadChannel { got: channel, n: kernels.n_channels });
    }
    (0..kernels.n_channels)
        .map(|j| {
            let samples = convolve(&kernels.kernels[j][channel], &target.samples);
            Waveform::new(samples, target.dt_ns)
        })
        .collect()
}

/// Forward distortion model: the flux seen at each qubit when the given
/// line waveforms are played, truncated to `out_len` samples.
pub fn distort(
    model: &ResponseModel,
    lines: &[Waveform],
    out_len: usize,
) -> Result<Vec<Waveform>, FluxError> {
    let nc = model.n_channels;
    if lines.len() != nc {
        return Err(FluxError::BadChannel { got: lines.len(), n: nc });
    }
    let mut out = Vec::with_capacity(nc);
    for i in 0..nc {
        let mut acc = vec![0.0; out_len];
        for (j, line) in lines.iter().enumerate() {
            let h = model.responses[i][j].impulse_response(out_len, line.dt_ns);
            let y = convolve(&h, &line.samples);
            for (a, v) in acc.iter_mut().zip(y) {
                *a += v;
            }
        }
        out.push(Waveform { samples: acc, dt_ns: lines[0].dt_ns, t0_ns: lines[0].t0_ns });
    }
    Ok(out)
}

/// Append a balancing segment so the total pulse area is zero. The segment
/// spans `balance_duration_ns` and errors when the required amplitude
/// exceeds `amplitude_limit`. Re-applying to a balanced pulse appends a
/// zero segment.
pub fn net_zero(
    pulse: &Waveform,
    balance_duration_ns: f64,
    amplitude_limit: f64,
) -> Result<Waveform, FluxError> {
    if !(balance_duration_ns > 0.0) {
        return Err(FluxError::BadBalanceDuration(balance_duration_ns));
    }
    let n_b = (balance_duration_ns / pulse.dt_ns).round().max(1.0) as usize;
    let area = pulse.area();
    let amp = -area / (n_b as f64 * pulse.dt_ns);
    if amp.abs() > amplitude_limit {
        return Err(FluxError::BalanceAmplitudeExceeded { required: amp.abs(), limit: amplitude_limit });
    }
    let mut samples = pulse.samples.clone();
    samples.extend(std::iter::repeat(amp).take(n_b));
    Ok(Waveform { samples, dt_ns: pulse.dt_ns, t0_ns: pulse.t0_ns })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn settle_model(gain: f64, a: f64, tau: f64) -> Response {
        Response::ExponentialSettle { gain, amplitudes: vec![a], taus_ns: vec![tau] }
    }

    #[test]
    fn ideal_step_has_flat_response() {
        let fr = frequency_response(&Waveform::unit_step(1024)).unwrap();
        for b in &fr.bins {
            assert_abs_diff_eq!(b.re, 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(b.im, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn exponential_settle_transfer_function() {
        // s(t) = 1 − 0.1 e^{−t/300ns}: H(0) = 1 with a low-frequency shelf
        let step = settle_model(1.0, 0.1, 300.0).step_response(4096, 1.0);
        let fr = frequency_response(&step).unwrap();
        assert_abs_diff_eq!(fr.dc().re, 1.0, epsilon = 1e-6);
        // compare against the continuous-time transform away from DC:
        // H(f) = 1 − a·iωτ/(1 + iωτ)
        let tau = 300.0;
        for k in [3usize, 10, 40] {
            let f = fr.bin_freq_ghz(k);
            let w = std::f64::consts::TAU * f;
            let iwt = Complex64::new(0.0, w * tau);
            let analytic = (1.0 - 0.1 * iwt / (1.0 + iwt)).norm();
            assert_abs_diff_eq!(fr.bins[k].norm(), analytic, epsilon = 2e-3);
        }
        // low-pass-plus-shelf shape: |H| falls from 1 at DC toward 1 − a
        assert!(fr.bins[1].norm() > fr.bins[100].norm());
        assert!(fr.bins[100].norm() > 0.89);
    }

    #[test]
    fn ramp_step_has_sinc_null() {
        // 2 ns linear ramp: first spectral null at 500 MHz
        let mut samples = vec![1.0; 2048];
        samples[0] = 0.5;
        let step = Waveform::new(samples, 1.0).unwrap();
        let fr = frequency_response(&step).unwrap();
        let n = fr.n();
        let k_null = n / 2; // 0.5 GHz on the 1 ns grid
        assert!(fr.bins[k_null].norm() < 1e-12);
        assert!(fr.bins[k_null / 2].norm() > 0.5);
    }

    #[test]
    fn unsettled_step_rejected() {
        let step = settle_model(1.0, 0.5, 400.0).step_response(512, 1.0);
        assert!(matches!(
            frequency_response(&step),
            Err(FluxError::UnsettledStep { .. })
        ));
    }

    #[test]
    fn trivial_kernels() {
        let fr = frequency_response(&Waveform::unit_step(1024)).unwrap();
        let kernel = compensation_kernel(&fr, 10.0).unwrap();
        let k = &kernel.waveform.samples;
        assert_abs_diff_eq!(k[0], 1.0, epsilon = 1e-3);
        let off_impulse: f64 = k[1..].iter().map(|x| x.abs()).sum();
        assert!(off_impulse < 1e-3, "residual {off_impulse}");

        // infinite cutoff excludes all dynamics: scaled unit impulse
        let step = settle_model(2.0, 0.1, 300.0).step_response(4096, 1.0);
        let fr = frequency_response(&step).unwrap();
        let kernel = compensation_kernel(&fr, f64::INFINITY).unwrap();
        assert_abs_diff_eq!(kernel.waveform.samples[0], 0.5, epsilon = 1e-6);
        assert!(kernel.waveform.samples[1..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn settle_kernel_shape_and_roundtrip() {
        let model = settle_model(1.0, 0.1, 300.0);
        let step = model.step_response(4096, 1.0);
        let fr = frequency_response(&step).unwrap();
        let kernel = compensation_kernel(&fr, 10.0).unwrap();
        let k = &kernel.waveform.samples;
        // leading overshoot spike followed by a decaying negative tail
        assert!(k[0] > 1.02, "spike {}", k[0]);
        let tail_sum: f64 = k[1..].iter().sum();
        assert!(tail_sum < 0.0, "tail {tail_sum}");
        assert!(kernel.floored_bins == 0);

        // convolving the kernel with the distorted step recovers a flat
        // step within 1% after 10 ns
        let target = Waveform::unit_step(4096);
        let w = convolve(k, &target.samples);
        let line = Waveform::new(w, 1.0).unwrap();
        let out = distort(&ResponseModel::single(model), &[line], 4096).unwrap();
        for t in 10..4096 {
            assert!(
                (out[0].samples[t] - 1.0).abs() < 0.01,
                "t={t} value {}",
                out[0].samples[t]
            );
        }
        // DC exactness, checked once the transients have fully died out
        let settled = out[0].samples[4000];
        assert_abs_diff_eq!(settled, 1.0, epsilon = 1e-6);
        // causal by construction; the truncation discarded almost nothing
        assert!(kernel.acausal_energy_fraction < 0.02);
    }

    #[test]
    fn static_crosstalk_inversion() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, -0.2, -0.3, 1.0]);
        let model = ResponseModel::from_static_matrix(&m);
        let kernels = build_kernel_matrix(&model, 256, 1.0, 10.0).unwrap();
        let target = Waveform::unit_step(512);
        let lines = precompensate(&target, &kernels, 0).unwrap();
        // steady line amplitudes equal the exact matrix inverse column
        assert_abs_diff_eq!(lines[0].samples[400], 1.0638, epsilon = 1e-3);
        assert_abs_diff_eq!(lines[1].samples[400], 0.3191, epsilon = 1e-3);
        // and the induced flux reproduces the target on both qubits
        let out = distort(&model, &lines, 512).unwrap();
        for t in 10..512 {
            assert!((out[0].samples[t] - 1.0).abs() < 0.01);
            assert!(out[1].samples[t].abs() < 0.01);
        }
    }

    #[test]
    fn ill_conditioned_matrix_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0 + 1e-9]);
        let model = ResponseModel::from_static_matrix(&m);
        assert!(matches!(
            build_kernel_matrix(&model, 256, 1.0, 10.0),
            Err(FluxError::IllConditioned { .. })
        ));
    }

    #[test]
    fn net_zero_balancing() {
        // zero-area input: appended segment is zero
        let balanced = Waveform::new(vec![1.0, -1.0], 1.0).unwrap();
        let out = net_zero(&balanced, 4.0, 1.0).unwrap();
        assert_eq!(out.len(), 6);
        assert!(out.samples[2..].iter().all(|&s| s == 0.0));

        // unit 1 µs square with a 2 µs balance window: −0.5 segment
        let square = Waveform::square(1.0, 1000, 1000);
        let out = net_zero(&square, 2000.0, 1.0).unwrap();
        assert_eq!(out.len(), 3000);
        assert_abs_diff_eq!(out.samples[1500], -0.5, epsilon = 1e-12);
        assert!(out.area().abs() < 1e-9 * out.max_abs() * out.len() as f64);

        // idempotent: a second application appends zeros
        let twice = net_zero(&out, 2000.0, 1.0).unwrap();
        assert!(twice.samples[3000..].iter().all(|&s| s.abs() < 1e-12));

        // amplitude limit enforced
        assert!(matches!(
            net_zero(&square, 100.0, 1.0),
            Err(FluxError::BalanceAmplitudeExceeded { .. })
        ));
    }

    #[test]
    fn waveform_csv_roundtrip() {
        let wf = Waveform::new(vec![0.0, 0.5, 1.0, 0.25], 1.0).unwrap();
        let mut buf = Vec::new();
        wf.write_csv(&mut buf).unwrap();
        let back = Waveform::read_csv(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(back, wf);
    }

    mod roundtrip_property {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(12))]
            #[test]
            fn compensated_edges_settle_within_one_percent(
                tau in 50.0..1000.0f64,
                amp in 0.0..0.3f64,
            ) {
                let model = settle_model(1.0, amp, tau);
                let step = model.step_response(8192, 1.0);
                let fr = frequency_response(&step).unwrap();
                let kernel = compensation_kernel(&fr, 10.0).unwrap();
                // square pulse exercises a rising and a falling edge
                let target = Waveform::square(1.0, 2000, 4096);
                let w = convolve(&kernel.waveform.samples, &target.samples);
                let line = Waveform::new(w, 1.0).unwrap();
                let out = distort(&ResponseModel::single(model), &[line], 4096).unwrap();
                for t in 0..4096usize {
                    let after_rise = t >= 10 && t < 2000;
                    let after_fall = t >= 2010;
                    if after_rise || after_fall {
                        let want = if after_rise { 1.0 } else { 0.0 };
                        prop_assert!(
                            (out[0].samples[t] - want).abs() < 0.01,
                            "t={} value={}", t, out[0].samples[t]
                        );
                    }
                }
            }
        }
    }
}
