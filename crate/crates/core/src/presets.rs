//! Parameter sets for the bundled experiments, with the measured device
//! values as defaults: J = 2π·5.8 MHz, T1 = 25 µs, effective many-body
//! T2* = 10 µs, 6% site thermal population, κ = 2π·1.5 MHz readout
//! linewidth.
//!
//! Each preset carries plain parameters plus small assembly helpers; the
//! experiment runners wire them into evolutions.

use std::sync::Arc;

use crate::dynamics::{
    apply_rotation, thermal_product_state, DynamicsError, QuantumState, RotationAxis,
};
use crate::fockspace::BasisIndex;
use crate::model::{BathKind, BathSpec, DriveSchedule, LatticeSpec, ModelError, PiecewiseLinear};
use crate::units::mhz;

/// Lattice with the measured device parameters, uniform across sites.
pub fn device_lattice(n_sites: usize, decoherence: bool) -> LatticeSpec {
    let mut spec = LatticeSpec::uniform(n_sites, mhz(5.8)).with_thermal(0.06);
    if decoherence {
        spec = spec.with_decoherence(25.0, 10.0);
    }
    spec
}

/// Resonant double-well current-oscillation experiment: two sites prepared
/// by X-rotations on their thermal equilibrium states, then evolved
/// resonantly.
#[derive(Clone, Debug)]
pub struct DoubleWell {
    pub spec: LatticeSpec,
    /// X-rotation angle on the left site, radians.
    pub left_angle: f64,
    /// X-rotation angle on the right site, radians.
    pub right_angle: f64,
    pub t_final_us: f64,
    pub sample_dt_us: f64,
    pub with_decoherence: bool,
}

impl DoubleWell {
    pub fn paper() -> Self {
        Self {
            spec: device_lattice(2, false),
            left_angle: 127f64.to_radians(),
            right_angle: 90f64.to_radians(),
            t_final_us: 0.35,
            sample_dt_us: 0.002,
            with_decoherence: false,
        }
    }

    pub fn initial_state(&self, basis: &Arc<BasisIndex>) -> Result<QuantumState, DynamicsError> {
        let thermal = thermal_product_state(&self.spec, &[], basis)?;
        let left = apply_rotation(&thermal, "q0", RotationAxis::X, self.left_angle)?;
        apply_rotation(&left, "q1", RotationAxis::X, self.right_angle)
    }

    pub fn sample_times(&self) -> Vec<f64> {
        sample_grid(0.0, self.t_final_us, self.sample_dt_us)
    }
}

/// Adiabatic coherent-filling experiment: ramp the global drive on, sweep
/// its detuning downward through the many-body avoided crossings, ramp off.
#[derive(Clone, Debug)]
pub struct AdiabaticFill {
    pub spec: LatticeSpec,
    /// Peak Rabi amplitude, rad/µs.
    pub omega_peak: f64,
    /// Detuning at the start of the sweep, rad/µs.
    pub delta_start: f64,
    /// Detuning at the end of the sweep, rad/µs.
    pub delta_end: f64,
    /// Duration of the linear detuning ramp, µs.
    pub ramp_duration_us: f64,
    /// Drive amplitude rise and fall time, µs.
    pub edge_us: f64,
}

impl AdiabaticFill {
    pub fn paper(decoherence: bool) -> Self {
        Self {
            spec: device_lattice(4, decoherence),
            omega_peak: mhz(4.2),
            delta_start: mhz(30.0),
            delta_end: mhz(-30.0),
            // ±2π·30 MHz at −2π·80 MHz/µs
            ramp_duration_us: 0.75,
            edge_us: 0.3,
        }
    }

    pub fn with_end_detuning(mut self, delta_end: f64) -> Self {
        // keep the paper's fixed ramp rate when the end point moves
        let rate = (self.delta_end - self.delta_start) / self.ramp_duration_us;
        self.ramp_duration_us = (delta_end - self.delta_start) / rate;
        self.delta_end = delta_end;
        self
    }

    pub fn total_duration_us(&self) -> f64 {
        2.0 * self.edge_us + self.ramp_duration_us
    }

    pub fn drive(&self) -> Result<DriveSchedule, ModelError> {
        let t1 = self.edge_us;
        let t2 = self.edge_us + self.ramp_duration_us;
        let t3 = self.total_duration_us();
        Ok(DriveSchedule {
            omega: PiecewiseLinear::new(vec![
                (0.0, 0.0),
                (t1, self.omega_peak),
                (t2, self.omega_peak),
                (t3, 0.0),
            ])?,
            delta: PiecewiseLinear::new(vec![
                (0.0, self.delta_start),
                (t1, self.delta_start),
                (t2, self.delta_end),
                (t3, self.delta_end),
            ])?,
            phases: vec![0.0; self.spec.n_sites],
        })
    }
}

/// Single site coupled to one engineered bath.
#[derive(Clone, Debug)]
pub struct SingleSiteBath {
    pub spec: LatticeSpec,
    pub bath: BathSpec,
    pub t_final_us: f64,
}

impl SingleSiteBath {
    /// Resonant drain at the measured operating point.
    pub fn drain_paper() -> Self {
        // two lattice sites keep the spec valid; the second site is
        // far-detuned and uncoupled
        let mut spec = device_lattice(2, true);
        spec.tunneling = vec![0.0];
        Self {
            spec,
            bath: BathSpec {
                kind: BathKind::Drain,
                site: 0,
                g: mhz(1.75),
                delta: 0.0,
                kappa: mhz(1.5),
                n_th_res: 0.02,
                window: (0.0, 10.0),
            },
            t_final_us: 4.0,
        }
    }

    /// Resonant source at the measured operating point.
    pub fn source_paper() -> Self {
        let mut preset = Self::drain_paper();
        preset.bath.kind = BathKind::Source;
        preset.bath.g = mhz(2.4);
        preset.t_final_us = 2.0;
        preset
    }
}

/// Boundary-driven transport: source and drain on the end sites at a
/// common detuning, current read at the middle bond.
#[derive(Clone, Debug)]
pub struct BathTransport {
    pub spec: LatticeSpec,
    /// Bath coupling rate (both baths), rad/µs.
    pub g: f64,
    /// Bath-lattice detuning (both baths), rad/µs.
    pub delta: f64,
    pub kappa: f64,
    pub n_th_res: f64,
    /// Bath window, µs.
    pub window: (f64, f64),
    /// Measured bond.
    pub bond: (usize, usize),
}

impl BathTransport {
    pub fn paper(g: f64, delta: f64) -> Self {
        Self {
            spec: device_lattice(4, true).with_nnn(mhz(0.55)),
            g,
            delta,
            kappa: mhz(1.5),
            n_th_res: 0.02,
            window: (0.0, 2.0),
            bond: (1, 2),
        }
    }

    /// Fig. 4c operating point: both baths at −2π·4 MHz, stronger coupling.
    pub fn dynamics_paper() -> Self {
        Self::paper(mhz(2.0), mhz(-4.0))
    }

    /// Source feeds the left end, drain empties the right end.
    pub fn baths(&self) -> Vec<BathSpec> {
        let common = BathSpec {
            kind: BathKind::Source,
            site: 0,
            g: self.g,
            delta: self.delta,
            kappa: self.kappa,
            n_th_res: self.n_th_res,
            window: self.window,
        };
        vec![
            common.clone(),
            BathSpec { kind: BathKind::Drain, site: self.spec.n_sites - 1, ..common },
        ]
    }
}

/// Uniform sample grid including both endpoints.
pub fn sample_grid(t0: f64, t1: f64, dt: f64) -> Vec<f64> {
    let n = ((t1 - t0) / dt).round() as usize;
    let mut out: Vec<f64> = (0..=n).map(|k| t0 + k as f64 * dt).collect();
    if let Some(last) = out.last_mut() {
        *last = t1;
    }
    out
}
